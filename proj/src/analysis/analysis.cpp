#include "dggan/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

#include "dggan/checkpoint.hpp"
#include "dggan/errors.hpp"
#include "dggan/hashing.hpp"

namespace dggan::analysis {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : ""; }

std::map<int, std::vector<const Candidate*>> by_depth(const Ledger& ledger) {
  std::map<int, std::vector<const Candidate*>> out;
  for (const auto& c : ledger.records()) out[c.depth].push_back(&c);
  return out;
}

}  // namespace

std::optional<double> improvement(const Candidate& child, const Candidate& parent) {
  if (child.parent_id != parent.id) throw ContractError("'" + parent.id + "' is not the parent of '" + child.id + "'");
  if (!std::isfinite(child.nfid) || !std::isfinite(parent.nfid) || parent.nfid == 0) return std::nullopt;
  return child.nfid / parent.nfid;
}

std::vector<ActionStats> action_stats(const Ledger& ledger) {
  std::map<std::string, std::vector<double>> values;
  std::map<std::string, int> diverged;
  for (const auto& c : ledger.records()) {
    if (!c.parent_id) continue;
    const auto* parent = ledger.find(*c.parent_id);
    const auto imp = improvement(c, *parent);
    values[c.action];
    if (imp) {
      values[c.action].push_back(*imp);
    } else {
      ++diverged[c.action];
    }
  }
  std::vector<ActionStats> out;
  for (const auto& [action, xs] : values) {
    ActionStats s;
    s.action = action;
    s.count = static_cast<int>(xs.size());
    s.diverged = diverged[action];
    if (!xs.empty()) {
      double sum = 0;
      int pos = 0;
      for (double x : xs) {
        sum += x;
        if (x < 1.0) ++pos;
      }
      s.mean = sum / xs.size();
      double ss = 0;
      for (double x : xs) ss += (x - s.mean) * (x - s.mean);
      s.std = std::sqrt(ss / xs.size());
      s.pos_frac = static_cast<double>(pos) / xs.size();
    }
    out.push_back(s);
  }
  return out;
}

const Candidate* best_candidate(const Ledger& ledger) {
  int top = 0;
  for (const auto& c : ledger.records()) top = std::max(top, c.resolution);
  const Candidate* best = nullptr;
  for (const auto& c : ledger.records())
    if (c.resolution == top && std::isfinite(c.nfid) && (!best || search::better(c, *best))) best = &c;
  return best;
}

std::vector<G2DRow> g2d_report(const Ledger& ledger) {
  std::set<std::string> path;
  for (const Candidate* c = best_candidate(ledger); c; c = c->parent_id ? ledger.find(*c->parent_id) : nullptr) {
    path.insert(c->id);
  }
  std::vector<G2DRow> out;
  for (const auto& c : ledger.records()) {
    if (c.status == search::Status::failed && !path.count(c.id)) continue;
    const double ratio = static_cast<double>(c.g_params) / static_cast<double>(c.d_params);
    out.push_back({c.id, ratio, c.nfid, path.count(c.id) > 0});
  }
  return out;
}

std::vector<RiskRow> pruning_risk(const Ledger& ledger, const std::vector<double>& thresholds) {
  std::vector<RiskRow> out;
  for (double t : thresholds) {
    long good_n = 0, good_hits = 0, sub_n = 0, sub_hits = 0;
    for (const auto& c : ledger.records()) {
      if (!c.parent_id) continue;
      const auto* parent = ledger.find(*c.parent_id);
      const bool child_good = c.nfid < t;
      if (parent->nfid < t) {
        ++good_n;
        good_hits += child_good;
      } else {
        ++sub_n;
        sub_hits += child_good;
      }
    }
    RiskRow r;
    r.threshold = t;
    if (good_n > 0) r.good_ratio = static_cast<double>(good_hits) / good_n;
    if (sub_n > 0) r.subopt_ratio = static_cast<double>(sub_hits) / sub_n;
    out.push_back(r);
  }
  return out;
}

int recorded_k(const Ledger& ledger) {
  std::map<int, std::set<std::string>> parents;
  for (const auto& c : ledger.records())
    if (c.parent_id) parents[c.depth].insert(*c.parent_id);
  std::size_t k = 0;
  for (const auto& [d, s] : parents) k = std::max(k, s.size());
  return static_cast<int>(k);
}

std::vector<SimTrial> simulate_kp(const Ledger& ledger, int k_sim, double p_sim, std::uint64_t seed, int trials) {
  if (k_sim <= 0) throw ContractError("K_sim must be positive");
  if (!(p_sim > 0 && p_sim <= 1)) throw ContractError("p_sim must lie in (0, 1]");
  if (trials < 0) throw ContractError("trials must be >= 0");
  const auto depths = by_depth(ledger);
  if (depths.empty() || depths.begin()->first != 0) throw ContractError("ledger has no initial candidates");
  int expect = 0;
  for (const auto& [d, cs] : depths)
    if (d != expect++) throw ContractError("ledger skips depth " + std::to_string(expect - 1));
  int top = 0;
  for (const auto& c : ledger.records()) top = std::max(top, c.resolution);

  auto topk = [&](std::vector<const Candidate*> cs) {
    std::sort(cs.begin(), cs.end(), [](const Candidate* a, const Candidate* b) { return search::better(*a, *b); });
    if (cs.size() > static_cast<std::size_t>(k_sim)) cs.resize(static_cast<std::size_t>(k_sim));
    return cs;
  };

  std::vector<SimTrial> out;
  for (int trial = 0; trial < trials; ++trial) {
    SimTrial t;
    t.best_nfid = kInf;
    auto consider = [&](const Candidate* c) {
      if (c->resolution == top && std::isfinite(c->nfid)) t.best_nfid = std::min(t.best_nfid, c->nfid);
    };
    auto pool = topk(depths.at(0));
    for (const auto* c : depths.at(0)) consider(c);
    auto record = [&] {
      std::vector<std::string> ids;
      for (const auto* c : pool) ids.push_back(c->id);
      t.kept.push_back(std::move(ids));
    };
    record();
    for (int d = 1; depths.count(d); ++d) {
      std::set<std::string> parents;
      for (const auto* c : pool) parents.insert(c->id);
      std::vector<const Candidate*> reachable;
      for (const auto* c : depths.at(d))
        if (parents.count(*c->parent_id)) reachable.push_back(c);
      if (reachable.empty()) break;
      std::vector<const Candidate*> chosen;
      // An empty draw is redrawn, as in the real search.
      for (int attempt = 0; attempt < 1000 && chosen.empty(); ++attempt) {
        const std::uint64_t key = derive_seed(seed, "sim/" + std::to_string(trial) + "/" + std::to_string(attempt));
        for (const auto* c : reachable) {
          const double u = static_cast<double>(derive_seed(key, c->id) >> 11) * 0x1.0p-53;
          if (u < p_sim) chosen.push_back(c);
        }
      }
      for (const auto* c : chosen) consider(c);
      pool = topk(chosen);
      record();
    }
    out.push_back(std::move(t));
  }
  return out;
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw ContractError("median of an empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

std::string g2d_csv(const std::vector<G2DRow>& rows) {
  std::string s = "ratio,nfid,best_path\n";
  for (const auto& r : rows) s += num(r.ratio) + "," + num(r.nfid) + "," + (r.best_path ? "1" : "0") + "\n";
  return s;
}

std::string actions_csv(const std::vector<ActionStats>& rows) {
  std::string s = "action,count,pos_frac,mean,std,diverged\n";
  for (const auto& r : rows) {
    const bool any = r.count > 0;
    s += r.action + "," + std::to_string(r.count) + "," + (any ? num(r.pos_frac) : "") + "," + (any ? num(r.mean) : "") +
         "," + (any ? num(r.std) : "") + "," + std::to_string(r.diverged) + "\n";
  }
  return s;
}

std::string risk_csv(const std::vector<RiskRow>& rows) {
  std::string s = "threshold,good_ratio,subopt_ratio\n";
  for (const auto& r : rows) s += num(r.threshold) + "," + opt(r.good_ratio) + "," + opt(r.subopt_ratio) + "\n";
  return s;
}

std::string sim_csv(const std::vector<SimRow>& rows) {
  std::string s = "K,p,trial,best_nfid\n";
  for (const auto& r : rows)
    s += std::to_string(r.k) + "," + num(r.p) + "," + std::to_string(r.trial) + "," + num(r.best_nfid) + "\n";
  return s;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

void write_reports(const Ledger& ledger, const std::filesystem::path& out_dir, std::uint64_t seed, int trials) {
  std::filesystem::create_directories(out_dir);
  checkpoint::write_file_atomic(out_dir / "g2d.csv", g2d_csv(g2d_report(ledger)));
  checkpoint::write_file_atomic(out_dir / "actions.csv", actions_csv(action_stats(ledger)));
  checkpoint::write_file_atomic(out_dir / "risk.csv", risk_csv(pruning_risk(ledger, default_thresholds())));
  std::vector<SimRow> sim;
  if (ledger.size() > 0) {
    const int k = std::max(1, recorded_k(ledger));
    for (int ks = 1; ks <= k; ++ks)
      for (double p : {0.25, 0.5, 0.75, 1.0}) {
        const auto ts = simulate_kp(ledger, ks, p, seed, trials);
        for (int i = 0; i < trials; ++i) sim.push_back({ks, p, i, ts[i].best_nfid});
      }
  }
  checkpoint::write_file_atomic(out_dir / "sim.csv", sim_csv(sim));
}

}  // namespace dggan::analysis
