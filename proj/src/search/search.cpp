#include "dggan/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "dggan/checkpoint.hpp"
#include "dggan/errors.hpp"
#include "dggan/hashing.hpp"
#include "dggan/scheduler.hpp"

namespace dggan::search {

namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json score_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double score_from(const nlohmann::json& j) {
  if (j.is_null()) return kInf;
  return j.get<double>();
}

// Any non-finite score ranks as +inf.
double rank_value(double v) { return std::isfinite(v) ? v : kInf; }

}  // namespace

std::string to_string(Status s) {
  switch (s) {
    case Status::trained: return "trained";
    case Status::failed: return "failed";
    case Status::pruned: return "pruned";
  }
  return "?";
}

Status status_from_string(const std::string& s) {
  if (s == "trained") return Status::trained;
  if (s == "failed") return Status::failed;
  if (s == "pruned") return Status::pruned;
  throw FormatError("unknown candidate status '" + s + "'");
}

// ---- ledger -----------------------------------------------------------------

nlohmann::json to_json(const Candidate& c) {
  nlohmann::json j;
  j["id"] = c.id;
  j["parent_id"] = c.parent_id ? nlohmann::json(*c.parent_id) : nlohmann::json(nullptr);
  j["action"] = c.action;
  j["depth"] = c.depth;
  j["resolution"] = c.resolution;
  j["g_params"] = c.g_params;
  j["d_params"] = c.d_params;
  j["fid"] = score_json(c.fid);
  j["nfid"] = score_json(c.nfid);
  j["seed"] = c.seed;
  j["status"] = to_string(c.status);
  j["wallclock_s"] = c.wallclock_s;
  return j;
}

Candidate candidate_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kFields = {"id",       "parent_id", "action", "depth", "resolution", "g_params",
                                                "d_params", "fid",       "nfid",   "seed",  "status",     "wallclock_s"};
  if (!j.is_object()) throw FormatError("ledger record must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!kFields.count(k)) throw FormatError("unexpected ledger field '" + k + "'");
  for (const auto& k : kFields)
    if (!j.contains(k)) throw FormatError("missing ledger field '" + k + "'");
  try {
    Candidate c;
    c.id = j.at("id").get<std::string>();
    if (!j.at("parent_id").is_null()) c.parent_id = j.at("parent_id").get<std::string>();
    c.action = j.at("action").get<std::string>();
    c.depth = j.at("depth").get<int>();
    c.resolution = j.at("resolution").get<int>();
    c.g_params = j.at("g_params").get<std::int64_t>();
    c.d_params = j.at("d_params").get<std::int64_t>();
    c.fid = score_from(j.at("fid"));
    c.nfid = score_from(j.at("nfid"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.status = status_from_string(j.at("status").get<std::string>());
    c.wallclock_s = j.at("wallclock_s").get<double>();
    if (c.action != kInitialAction) (void)arch::GrowthAction::parse(c.action);
    if (c.parent_id.has_value() != (c.depth > 0)) throw FormatError("parent_id must be present iff depth > 0");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed ledger record: ") + e.what());
  }
}

void Ledger::append(Candidate c) {
  if (index_.count(c.id)) throw ContractError("duplicate candidate id '" + c.id + "'");
  if (c.parent_id) {
    auto it = index_.find(*c.parent_id);
    if (it == index_.end()) throw ContractError("parent '" + *c.parent_id + "' of '" + c.id + "' is not in the ledger");
    if (records_[it->second].depth + 1 != c.depth) throw ContractError("depth of '" + c.id + "' does not follow its parent");
  } else if (c.depth != 0) {
    throw ContractError("candidate '" + c.id + "' has depth > 0 but no parent");
  }
  index_[c.id] = records_.size();
  records_.push_back(std::move(c));
}

const Candidate* Ledger::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

std::string Ledger::to_jsonl() const {
  std::string out;
  for (const auto& c : records_) out += to_json(c).dump() + "\n";
  return out;
}

Ledger Ledger::parse(const std::string& text) {
  Ledger l;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      l.append(candidate_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("ledger line " + std::to_string(no) + ": " + e.what());
    } catch (const std::exception& e) {
      throw FormatError("ledger line " + std::to_string(no) + ": " + e.what());
    }
  }
  return l;
}

void Ledger::save(const fs::path& path) const { checkpoint::write_file_atomic(path, to_jsonl()); }

Ledger Ledger::load(const fs::path& path) { return parse(checkpoint::read_file(path)); }

// ---- sampling and pruning ---------------------------------------------------

bool better(const Candidate& a, const Candidate& b) {
  const double an = rank_value(a.nfid), bn = rank_value(b.nfid);
  if (an != bn) return an < bn;
  const double af = rank_value(a.fid), bf = rank_value(b.fid);
  if (af != bf) return af < bf;
  return a.id < b.id;
}

std::vector<ChildSpec> sample_children(const std::vector<Candidate>& parents,
                                       const std::vector<arch::GrowthAction>& actions, double p,
                                       const arch::ActionSpace& space, std::mt19937_64& rng) {
  if (parents.empty()) throw ContractError("sample_children needs at least one parent");
  if (!(p > 0 && p <= 1)) throw ContractError("p must lie in (0, 1]");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ChildSpec> out;
  for (std::size_t i = 0; i < parents.size(); ++i) {
    const auto legal = arch::enumerate_actions(parents[i].pair, space);
    for (const auto& a : actions) {
      if (std::find(legal.begin(), legal.end(), a) == legal.end()) continue;
      if (u(rng) < p) out.push_back({i, a});
    }
  }
  return out;
}

std::vector<Candidate> prune_topk(const std::vector<Candidate>& candidates, int k) {
  if (k <= 0) throw ContractError("K must be positive");
  std::vector<Candidate> sorted = candidates;
  std::sort(sorted.begin(), sorted.end(), better);
  if (sorted.size() > static_cast<std::size_t>(k)) sorted.resize(static_cast<std::size_t>(k));
  return sorted;
}

// ---- weights ----------------------------------------------------------------

std::map<std::string, tensor::Tensor<float>> merge_weights(const arch::PairWeights& w) {
  std::map<std::string, tensor::Tensor<float>> m = w.g;
  for (const auto& [n, t] : w.d) m.emplace(n, t);
  return m;
}

arch::PairWeights split_weights(const std::map<std::string, tensor::Tensor<float>>& m) {
  arch::PairWeights w;
  for (const auto& [n, t] : m) {
    if (n.rfind("g/", 0) == 0) {
      w.g.emplace(n, t);
    } else if (n.rfind("d/", 0) == 0) {
      w.d.emplace(n, t);
    } else {
      throw FormatError("checkpoint entry '" + n + "' belongs to neither network");
    }
  }
  return w;
}

// ---- backends ---------------------------------------------------------------

FunctionBackend::FunctionBackend(ScoreFn score, BaselineFn baseline, std::string name)
    : score_(std::move(score)), baseline_(std::move(baseline)), name_(std::move(name)) {}

JobResult FunctionBackend::run(const Job& job) {
  JobResult r;
  r.fid = score_(job.pair);
  r.diverged = !std::isfinite(r.fid);
  if (r.diverged) r.fid = kInf;
  r.stats.candidate_id = job.id;
  r.stats.diverged = r.diverged;
  return r;
}

GanBackend::GanBackend(const data::Dataset& dataset, GanBackendConfig cfg, fs::path cache_dir)
    : dataset_(dataset),
      cfg_(std::move(cfg)),
      dir_(std::move(cache_dir)),
      fx_(cfg_.extractor_seed),
      real_(dataset_, fx_, cfg_.n_samples, dir_.empty() ? fs::path() : dir_ / "real_stats") {
  cfg_.train.validate();
  cfg_.space.validate();
}

std::uint64_t GanBackend::eval_seed(std::uint64_t job_seed) const { return derive_seed(job_seed, "eval"); }

std::string GanBackend::fingerprint() const {
  auto t = cfg_.train.to_json();
  t.erase("iters");
  return "gan|" + t.dump() + "|n" + std::to_string(cfg_.n_samples) + "|fx" + hex64(cfg_.extractor_seed) + "|ds" +
         hex64(dataset_.hash());
}

namespace {

struct Trained {
  arch::PairWeights weights;
  train::TrainStats stats;
  double fid = kInf;
};

Trained train_and_score(const arch::ArchPair& pair, arch::PairWeights weights, const data::Dataset& ds,
                        train::TrainConfig tc, long iters, std::uint64_t seed, const std::string& id,
                        const fid::FeatureExtractor& fx, fid::RealStats& real, int n_samples, std::uint64_t eval_seed) {
  tc.iters = iters;
  auto tr = train::train_candidate(pair, weights, ds, tc, derive_seed(seed, "train"), id);
  Trained out{std::move(tr.weights), std::move(tr.stats), kInf};
  if (!out.stats.diverged) {
    out.fid = fid::evaluate_candidate(out.weights.g, pair, fx, real.at(pair.resolution()), n_samples, eval_seed).value();
  }
  return out;
}

}  // namespace

JobResult GanBackend::run(const Job& job) {
  const auto t0 = std::chrono::steady_clock::now();
  auto w = arch::instantiate(job.pair, job.seed);
  if (job.parent) {
    if (!job.parent->weights) throw ContractError("parent weights missing for '" + job.id + "'");
    arch::inherit_weights(job.pair, w, job.parent->pair, *job.parent->weights);
  }
  auto t = train_and_score(job.pair, std::move(w), dataset_, cfg_.train, job.iters, job.seed, job.id, fx_, real_,
                           cfg_.n_samples, eval_seed(job.seed));
  JobResult r;
  r.fid = std::isfinite(t.fid) ? t.fid : kInf;
  r.diverged = t.stats.diverged || !std::isfinite(t.fid);
  r.stats = std::move(t.stats);
  r.stats.diverged = r.diverged;
  r.weights = std::make_shared<const arch::PairWeights>(std::move(t.weights));
  r.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

double GanBackend::baseline(int resolution) {
  std::lock_guard<std::mutex> lock(ref_mu_);
  if (auto it = ref_fid_.find(resolution); it != ref_fid_.end()) return it->second;
  const int d0 = cfg_.base.d0;
  if (resolution < d0 || resolution % d0 != 0 || ((resolution / d0) & (resolution / d0 - 1)) != 0) {
    throw ContractError("no reference stage at resolution " + std::to_string(resolution));
  }
  for (int r = d0; r <= resolution; r *= 2) {
    if (ref_.count(r)) continue;
    arch::ArchPair pair = r == d0 ? arch::base_pair(cfg_.base)
                                  : arch::apply_action(ref_.at(r / 2).first, arch::GrowthAction::grow_both(), cfg_.space);
    const std::string id = "reference/r" + std::to_string(r);
    const std::uint64_t seed = derive_seed(cfg_.seed, id);
    const fs::path d = dir_.empty() ? fs::path() : dir_ / ("r" + std::to_string(r) + "_" +
                                                          hex64(fnv1a64(fingerprint() + "|" + std::to_string(seed) +
                                                                        "|" + std::to_string(cfg_.train.iters))));
    double fid_value = kInf;
    arch::PairWeights w;
    if (!d.empty() && fs::exists(d / "result.json")) {
      const auto j = nlohmann::json::parse(checkpoint::read_file(d / "result.json"));
      fid_value = score_from(j.at("fid"));
      w = split_weights(checkpoint::load(d / "weights.dgck"));
    } else {
      w = arch::instantiate(pair, seed);
      if (r != d0) arch::inherit_weights(pair, w, ref_.at(r / 2).first, ref_.at(r / 2).second);
      auto t = train_and_score(pair, std::move(w), dataset_, cfg_.train, cfg_.train.iters, seed, id, fx_, real_,
                               cfg_.n_samples, eval_seed(seed));
      fid_value = t.fid;
      w = std::move(t.weights);
      if (!d.empty()) {
        checkpoint::save(d / "weights.dgck", merge_weights(w));
        checkpoint::write_file_atomic(d / "arch.json", arch::to_json(pair).dump(2));
        checkpoint::write_file_atomic(
            d / "result.json", nlohmann::json{{"id", id}, {"fid", score_json(fid_value)}, {"resolution", r}}.dump(2));
      }
    }
    if (!std::isfinite(fid_value) || !(fid_value > 0)) {
      throw NumericError("reference schedule diverged or scored zero at resolution " + std::to_string(r));
    }
    ref_fid_[r] = fid_value;
    ref_.emplace(r, std::make_pair(pair, std::move(w)));
  }
  return ref_fid_.at(resolution);
}

// ---- search -----------------------------------------------------------------

void SearchConfig::validate() const {
  space.validate();
  const int d0 = base.d0;
  if (d0 < 4 || (d0 & (d0 - 1)) != 0) throw ContractError("d0 must be a power of two >= 4, got " + std::to_string(d0));
  const int t = space.target_resolution;
  if (t < d0 || t % d0 != 0 || ((t / d0) & (t / d0 - 1)) != 0) {
    throw ContractError("target_resolution must be d0 * 2^s, got " + std::to_string(t));
  }
  if (K <= 0) throw ContractError("K must be positive");
  if (!(p > 0 && p <= 1)) throw ContractError("p must lie in (0, 1]");
  if (max_layers < 0) throw ContractError("max_layers must be >= 0");
  if (n_initial <= 0) throw ContractError("n_initial must be positive");
  if (iters < 0) throw ContractError("iters must be >= 0");
  if (final_multiplier < 0) throw ContractError("final_multiplier must be >= 0");
  if (workers <= 0) throw ContractError("workers must be positive");
}

std::string child_id(const std::string& parent_id, const arch::GrowthAction& action) {
  return parent_id + "." + action.code();
}

std::string initial_id(int index) { return "i" + std::to_string(index); }

namespace {

std::vector<arch::GrowthAction> all_actions(const arch::ActionSpace& space) {
  std::vector<arch::GrowthAction> out;
  for (int k : space.filter_sizes)
    for (int n : space.filter_counts) out.push_back(arch::GrowthAction::grow_g(k, n));
  for (int k : space.filter_sizes)
    for (int n : space.filter_counts) out.push_back(arch::GrowthAction::grow_d(k, n));
  if (space.allow_grow_both) out.push_back(arch::GrowthAction::grow_both());
  return out;
}

// Finished candidates on disk, addressed by a hash of everything that
// determines their result.
class Store {
 public:
  Store(fs::path root, std::string fingerprint) : root_(std::move(root)), fingerprint_(std::move(fingerprint)) {}

  fs::path dir(const Job& job) const {
    const std::string key = fingerprint_ + "|" + job.id + "|" + arch::to_json(job.pair).dump() + "|" +
                            std::to_string(job.seed) + "|" + std::to_string(job.iters);
    return root_ / hex64(fnv1a64(key));
  }

  std::optional<JobResult> load(const Job& job) const {
    if (root_.empty()) return std::nullopt;
    const fs::path d = dir(job);
    if (!fs::exists(d / "result.json")) return std::nullopt;
    const auto j = nlohmann::json::parse(checkpoint::read_file(d / "result.json"));
    if (j.at("id").get<std::string>() != job.id) throw FormatError("checkpoint key collision at " + d.string());
    JobResult r;
    r.fid = score_from(j.at("fid"));
    r.diverged = j.at("diverged").get<bool>();
    r.wallclock_s = j.at("wallclock_s").get<double>();
    r.stats = train::TrainStats::from_json(j.at("stats"));
    if (fs::exists(d / "weights.dgck")) {
      r.weights = std::make_shared<const arch::PairWeights>(split_weights(checkpoint::load(d / "weights.dgck")));
    }
    return r;
  }

  void save(const Job& job, const JobResult& r) const {
    if (root_.empty()) return;
    const fs::path d = dir(job);
    fs::create_directories(d);
    if (r.weights) checkpoint::save(d / "weights.dgck", merge_weights(*r.weights));
    checkpoint::write_file_atomic(d / "arch.json", arch::to_json(job.pair).dump(2));
    const nlohmann::json j{{"id", job.id},
                           {"fid", score_json(r.fid)},
                           {"diverged", r.diverged},
                           {"wallclock_s", r.wallclock_s},
                           {"stats", r.stats.to_json()}};
    // Written last: its presence marks the candidate complete.
    checkpoint::write_file_atomic(d / "result.json", j.dump(2));
  }

 private:
  fs::path root_;
  std::string fingerprint_;
};

struct Finished {
  Candidate cand;
  std::shared_ptr<const arch::PairWeights> weights;
  train::TrainStats stats;
};

std::vector<Candidate> cands_of(const std::vector<Finished>& pool) {
  std::vector<Candidate> out;
  for (const auto& f : pool) out.push_back(f.cand);
  return out;
}

class Coordinator {
 public:
  Coordinator(const SearchConfig& cfg, Backend& backend, const fs::path& out)
      : cfg_(cfg), backend_(backend), out_(out), store_(out.empty() ? fs::path() : out / "candidates",
                                                        backend.fingerprint()) {}

  SearchResult run(const DepthCallback& on_depth) {
    std::vector<Job> jobs;
    std::vector<Candidate> shells;
    const arch::ArchPair base = arch::base_pair(cfg_.base);
    for (int i = 0; i < cfg_.n_initial; ++i) {
      Candidate c;
      c.id = initial_id(i);
      c.pair = base;
      jobs.push_back(Job{c.id, base, derive_seed(cfg_.seed, c.id), cfg_.iters, std::nullopt});
      shells.push_back(std::move(c));
    }
    auto pool = step(0, jobs, shells);
    if (on_depth) on_depth(0, cands_of(pool));

    const auto actions = all_actions(cfg_.space);
    for (int depth = 1; depth <= cfg_.max_layers; ++depth) {
      std::vector<Candidate> parents;
      for (const auto& f : pool) parents.push_back(f.cand);
      std::mt19937_64 rng(derive_seed(cfg_.seed, "sample/depth" + std::to_string(depth)));
      std::vector<ChildSpec> specs;
      // An empty draw would end the search, so draw again from the same stream.
      for (int attempt = 0; attempt < 1000 && specs.empty(); ++attempt) {
        specs = sample_children(parents, actions, cfg_.p, cfg_.space, rng);
      }
      if (specs.empty()) throw ContractError("no legal growth action for any parent at depth " + std::to_string(depth));
      jobs.clear();
      shells.clear();
      for (const auto& s : specs) {
        const Finished& parent = pool[s.parent];
        Candidate c;
        c.id = child_id(parent.cand.id, s.action);
        c.parent_id = parent.cand.id;
        c.action = s.action.code();
        c.pair = arch::apply_action(parent.cand.pair, s.action, cfg_.space);
        c.depth = depth;
        jobs.push_back(Job{c.id, c.pair, derive_seed(cfg_.seed, c.id), cfg_.iters,
                           ParentRef{parent.cand.pair, parent.weights}});
        shells.push_back(std::move(c));
      }
      pool = step(depth, jobs, shells);
      if (on_depth) on_depth(depth, cands_of(pool));
    }

    result_.baselines = baselines_;
    if (!best_) {
      save_ledger();
      int deepest = 0;
      for (const auto& c : result_.ledger.records()) deepest = std::max(deepest, c.resolution);
      throw ContractError("no candidate reached the target resolution " + std::to_string(cfg_.space.target_resolution) +
                          " within max_layers=" + std::to_string(cfg_.max_layers) + "; deepest resolution reached: " +
                          std::to_string(deepest));
    }
    result_.best = best_->cand;
    finalize();
    save_ledger();
    return std::move(result_);
  }

 private:
  std::vector<Finished> step(int depth, const std::vector<Job>& jobs, std::vector<Candidate>& shells) {
    std::vector<std::function<JobResult()>> fns;
    fns.reserve(jobs.size());
    for (const auto& job : jobs) {
      fns.push_back([this, &job] {
        if (auto r = store_.load(job)) return *r;
        auto r = backend_.run(job);
        store_.save(job, r);
        return r;
      });
    }
    auto results = schedule(fns, cfg_.workers);

    std::vector<Finished> done;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      Candidate c = std::move(shells[i]);
      const auto& r = results[i];
      c.depth = depth;
      c.resolution = c.pair.resolution();
      c.g_params = arch::param_count(c.pair.g);
      c.d_params = arch::param_count(c.pair.d);
      c.seed = jobs[i].seed;
      c.fid = r.diverged || !std::isfinite(r.fid) ? kInf : r.fid;
      c.status = std::isfinite(c.fid) ? Status::trained : Status::failed;
      c.wallclock_s = r.wallclock_s;
      if (!baselines_.has(c.resolution)) baselines_.set(c.resolution, backend_.baseline(c.resolution));
      c.nfid = std::isfinite(c.fid) ? fid::normalized_fid(c.fid, c.resolution, baselines_) : kInf;
      done.push_back(Finished{std::move(c), r.weights, r.stats});
    }

    std::vector<Candidate> cands;
    for (const auto& f : done) cands.push_back(f.cand);
    const auto kept = prune_topk(cands, cfg_.K);
    std::set<std::string> kept_ids;
    std::vector<std::string> order;
    for (const auto& k : kept) {
      kept_ids.insert(k.id);
      order.push_back(k.id);
    }
    result_.kept.push_back(order);

    for (auto& f : done) {
      if (!kept_ids.count(f.cand.id)) f.cand.status = Status::pruned;
      result_.ledger.append(f.cand);
      stats_.push_back(f.stats);
      if (f.cand.resolution == cfg_.space.target_resolution && std::isfinite(f.cand.nfid) &&
          (!best_ || better(f.cand, best_->cand))) {
        best_ = f;
      }
    }
    save_ledger();

    std::vector<Finished> pool;
    for (const auto& id : order) {
      auto it = std::find_if(done.begin(), done.end(), [&](const Finished& f) { return f.cand.id == id; });
      pool.push_back(std::move(*it));
    }
    return pool;
  }

  void finalize() {
    if (cfg_.final_multiplier <= 0 || cfg_.iters == 0) return;
    const Candidate& b = best_->cand;
    Job job{b.id + ".final", b.pair, derive_seed(cfg_.seed, b.id + ".final"),
            std::lround(static_cast<double>(cfg_.iters) * cfg_.final_multiplier), ParentRef{b.pair, best_->weights}};
    JobResult r;
    if (auto cached = store_.load(job)) {
      r = *cached;
    } else {
      r = backend_.run(job);
      store_.save(job, r);
    }
    FinalModel fm;
    fm.source_id = b.id;
    fm.pair = b.pair;
    fm.iters = job.iters;
    fm.fid = r.diverged ? kInf : r.fid;
    fm.nfid = std::isfinite(fm.fid) ? fid::normalized_fid(fm.fid, b.resolution, baselines_) : kInf;
    fm.weights = r.weights;
    if (!out_.empty()) {
      const fs::path d = out_ / "final";
      fs::create_directories(d);
      if (fm.weights) checkpoint::save(d / "weights.dgck", merge_weights(*fm.weights));
      checkpoint::write_file_atomic(d / "arch.json", arch::to_json(fm.pair).dump(2));
      checkpoint::write_file_atomic(d / "final.json", nlohmann::json{{"source_id", fm.source_id},
                                                                     {"resolution", b.resolution},
                                                                     {"iters", fm.iters},
                                                                     {"fid", score_json(fm.fid)},
                                                                     {"nfid", score_json(fm.nfid)},
                                                                     {"search_fid", score_json(b.fid)},
                                                                     {"search_nfid", score_json(b.nfid)}}
                                                                         .dump(2));
    }
    result_.final_model = std::move(fm);
  }

  void save_ledger() {
    if (out_.empty()) return;
    result_.ledger.save(out_ / "ledger.jsonl");
    std::string stats;
    for (const auto& s : stats_) stats += s.to_json().dump() + "\n";
    checkpoint::write_file_atomic(out_ / "train_stats.jsonl", stats);
    checkpoint::write_file_atomic(out_ / "baselines.json", baselines_.to_json().dump(2));
  }

  const SearchConfig& cfg_;
  Backend& backend_;
  fs::path out_;
  Store store_;
  fid::BaselineTable baselines_;
  std::optional<Finished> best_;
  std::vector<train::TrainStats> stats_;
  SearchResult result_;
};

}  // namespace

SearchResult run_search(const SearchConfig& cfg, Backend& backend, const fs::path& out_dir,
                        const DepthCallback& on_depth) {
  cfg.validate();
  if (!out_dir.empty()) fs::create_directories(out_dir);
  Coordinator c(cfg, backend, out_dir);
  return c.run(on_depth);
}

}  // namespace dggan::search
