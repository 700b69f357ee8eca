#pragma once

// Pure functions over a search ledger: growth-route scatter, per-action
// improvement statistics, pruning risk, and replays with smaller K or p.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dggan/search.hpp"

namespace dggan::analysis {

using search::Candidate;
using search::Ledger;

// child.nfid / parent.nfid; below 1 is an improvement. Empty when either
// score is not finite.
std::optional<double> improvement(const Candidate& child, const Candidate& parent);

struct ActionStats {
  std::string action;
  int count = 0;     // children with a finite improvement
  int diverged = 0;  // children excluded because either score is not finite
  double pos_frac = 0;
  double mean = 0;
  double std = 0;  // population standard deviation
};

// One entry per action that produced at least one child, sorted by action code.
std::vector<ActionStats> action_stats(const Ledger& ledger);

// Best finite candidate at the highest resolution in the ledger, if any.
const Candidate* best_candidate(const Ledger& ledger);

struct G2DRow {
  std::string id;
  double ratio = 0;  // g_params / d_params
  double nfid = 0;
  bool best_path = false;
};

// One row per candidate whose training finished; the best candidate's
// lineage is flagged.
std::vector<G2DRow> g2d_report(const Ledger& ledger);

struct RiskRow {
  double threshold = 0;
  std::optional<double> good_ratio;    // good children / children of good parents
  std::optional<double> subopt_ratio;  // good children / children of other parents
};

// A candidate is good when its nfid is strictly below the threshold.
std::vector<RiskRow> pruning_risk(const Ledger& ledger, const std::vector<double>& thresholds);

struct SimTrial {
  double best_nfid = 0;  // +inf when the highest resolution was never reached
  std::vector<std::vector<std::string>> kept;  // per depth, in rank order
};

// Replays the search over the recorded candidates only. Each recorded child
// of a simulated parent is included with probability p_sim, decided by a hash
// of (seed, trial, attempt, id), and the K_sim best are kept.
std::vector<SimTrial> simulate_kp(const Ledger& ledger, int k_sim, double p_sim, std::uint64_t seed, int trials);

double median(std::vector<double> xs);

// Largest number of distinct parents expanded at any depth.
int recorded_k(const Ledger& ledger);

struct SimRow {
  int k = 0;
  double p = 0;
  int trial = 0;
  double best_nfid = 0;
};

std::string g2d_csv(const std::vector<G2DRow>& rows);
std::string actions_csv(const std::vector<ActionStats>& rows);
std::string risk_csv(const std::vector<RiskRow>& rows);
std::string sim_csv(const std::vector<SimRow>& rows);

std::vector<double> default_thresholds();  // 0.5, 0.55, ..., 1.0

// Writes g2d.csv, actions.csv, risk.csv and sim.csv. The sim sweep covers
// K_sim = 1..recorded K and p_sim in {0.25, 0.5, 0.75, 1}.
void write_reports(const Ledger& ledger, const std::filesystem::path& out_dir, std::uint64_t seed = 1,
                   int trials = 32);

}  // namespace dggan::analysis
