#pragma once

// Top-K greedy pruning search over growth actions, with a persistent ledger.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dggan/arch.hpp"
#include "dggan/data.hpp"
#include "dggan/fid.hpp"
#include "dggan/trainer.hpp"
#include "json.hpp"

namespace dggan::search {

enum class Status { trained, failed, pruned };
std::string to_string(Status s);
Status status_from_string(const std::string& s);

inline constexpr const char* kInitialAction = "initial";

struct Candidate {
  std::string id;
  std::optional<std::string> parent_id;
  std::string action = kInitialAction;  // action code or "initial"
  arch::ArchPair pair;                   // not part of the ledger line
  int depth = 0;
  int resolution = 0;
  std::int64_t g_params = 0;
  std::int64_t d_params = 0;
  double fid = 0;   // +inf when training diverged
  double nfid = 0;  // fid / baseline(resolution)
  std::uint64_t seed = 0;
  Status status = Status::trained;
  double wallclock_s = 0;
};

// Exactly {id, parent_id, action, depth, resolution, g_params, d_params, fid,
// nfid, seed, status, wallclock_s}; infinite scores are written as null.
nlohmann::json to_json(const Candidate& c);
Candidate candidate_from_json(const nlohmann::json& j);

class Ledger {
 public:
  // Rejects duplicate ids and children whose parent is not already recorded.
  void append(Candidate c);
  const std::vector<Candidate>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const Candidate* find(const std::string& id) const;

  std::string to_jsonl() const;
  static Ledger parse(const std::string& text);  // FormatError names the line
  void save(const std::filesystem::path& path) const;
  static Ledger load(const std::filesystem::path& path);

 private:
  std::vector<Candidate> records_;
  std::map<std::string, std::size_t> index_;
};

// Ranking key: normalised FID, then raw FID, then id. Lower is better.
bool better(const Candidate& a, const Candidate& b);

struct ChildSpec {
  std::size_t parent = 0;  // index into the parent list
  arch::GrowthAction action;
};

// Includes each legal (parent, action) pair independently with probability p.
std::vector<ChildSpec> sample_children(const std::vector<Candidate>& parents,
                                       const std::vector<arch::GrowthAction>& actions, double p,
                                       const arch::ActionSpace& space, std::mt19937_64& rng);

// The k best by `better`; fewer inputs than k come back whole.
std::vector<Candidate> prune_topk(const std::vector<Candidate>& candidates, int k);

// ---- backends -----------------------------------------------------------------

struct ParentRef {
  arch::ArchPair pair;
  std::shared_ptr<const arch::PairWeights> weights;
};

struct Job {
  std::string id;
  arch::ArchPair pair;
  std::uint64_t seed = 0;
  long iters = 0;
  std::optional<ParentRef> parent;  // absent for initial candidates
};

struct JobResult {
  double fid = 0;  // +inf if diverged
  bool diverged = false;
  double wallclock_s = 0;
  std::shared_ptr<const arch::PairWeights> weights;
  train::TrainStats stats;
};

// Trains and scores candidates. run() is called from worker threads.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual JobResult run(const Job& job) = 0;
  // FID of the fixed reference schedule at `resolution`.
  virtual double baseline(int resolution) = 0;
  // Identifies everything besides the job that affects results; part of the
  // checkpoint key.
  virtual std::string fingerprint() const = 0;
};

// Scores a pair with a fixed function and trains nothing.
class FunctionBackend : public Backend {
 public:
  using ScoreFn = std::function<double(const arch::ArchPair&)>;
  using BaselineFn = std::function<double(int)>;
  FunctionBackend(ScoreFn score, BaselineFn baseline, std::string name = "function");
  JobResult run(const Job& job) override;
  double baseline(int resolution) override { return baseline_(resolution); }
  std::string fingerprint() const override { return name_; }

 private:
  ScoreFn score_;
  BaselineFn baseline_;
  std::string name_;
};

struct GanBackendConfig {
  train::TrainConfig train;
  int n_samples = 512;
  std::uint64_t extractor_seed = 2019;
  std::uint64_t seed = 1;
  arch::BaseConfig base;
  arch::ActionSpace space;
};

// Real training and FID scoring. The reference schedule (grow both networks
// at every step) is trained lazily, one resolution at a time, and kept under
// `cache_dir` when one is given.
class GanBackend : public Backend {
 public:
  GanBackend(const data::Dataset& dataset, GanBackendConfig cfg, std::filesystem::path cache_dir = {});
  JobResult run(const Job& job) override;
  double baseline(int resolution) override;
  std::string fingerprint() const override;

  const fid::FeatureExtractor& extractor() const { return fx_; }
  fid::RealStats& real_stats() { return real_; }
  std::uint64_t eval_seed(std::uint64_t job_seed) const;

 private:
  const data::Dataset& dataset_;
  GanBackendConfig cfg_;
  std::filesystem::path dir_;
  fid::FeatureExtractor fx_;
  fid::RealStats real_;
  std::mutex ref_mu_;
  std::map<int, double> ref_fid_;
  std::map<int, std::pair<arch::ArchPair, arch::PairWeights>> ref_;
};

// ---- search -------------------------------------------------------------------

struct SearchConfig {
  arch::BaseConfig base;
  arch::ActionSpace space;  // target_resolution lives here
  int K = 4;
  double p = 0.5;
  int max_layers = 6;
  int n_initial = 1;
  long iters = 2000;
  double final_multiplier = 5.0;
  std::uint64_t seed = 1;
  int workers = 1;

  void validate() const;
};

struct FinalModel {
  std::string source_id;
  arch::ArchPair pair;
  double fid = 0;
  double nfid = 0;
  long iters = 0;
  std::shared_ptr<const arch::PairWeights> weights;
};

struct SearchResult {
  Candidate best;
  std::optional<FinalModel> final_model;
  Ledger ledger;
  fid::BaselineTable baselines;
  std::vector<std::vector<std::string>> kept;  // per depth, in rank order
};

// Called after each depth with (depth, kept ids).
using DepthCallback = std::function<void(int, const std::vector<Candidate>&)>;

// With an output directory, every finished candidate is checkpointed under
// out_dir/candidates/<key>/ and the ledger is rewritten after each depth, so
// rerunning the same config over the same directory replays finished work
// and produces the same ledger.
SearchResult run_search(const SearchConfig& cfg, Backend& backend, const std::filesystem::path& out_dir = {},
                        const DepthCallback& on_depth = {});

// Candidate id for a child.
std::string child_id(const std::string& parent_id, const arch::GrowthAction& action);
std::string initial_id(int index);

// Splits and joins the "g/..." and "d/..." halves of a checkpoint.
std::map<std::string, tensor::Tensor<float>> merge_weights(const arch::PairWeights& w);
arch::PairWeights split_weights(const std::map<std::string, tensor::Tensor<float>>& m);

}  // namespace dggan::search
