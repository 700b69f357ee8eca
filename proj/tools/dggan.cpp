#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "dggan/analysis.hpp"
#include "dggan/checkpoint.hpp"
#include "dggan/config.hpp"
#include "dggan/errors.hpp"
#include "dggan/fid.hpp"
#include "dggan/search.hpp"

using namespace dggan;
namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

void add_common(CLI::App* cmd, Overrides& o, bool need_config) {
  auto* c = cmd->add_option("--config", o.config, "run configuration (flat JSON)");
  if (need_config) c->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory (overrides out_dir)");
  cmd->add_option("--seed", o.seed, "global seed (overrides seed)");
  cmd->add_option("--workers", o.workers, "parallel training jobs (overrides workers)");
}

config::RunConfig resolve(const Overrides& o) {
  auto cfg = o.config.empty() ? config::RunConfig{} : config::RunConfig::load(o.config);
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  cfg.validate();
  return cfg;
}

std::string score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return std::isfinite(v) ? buf : "inf";
}

void print_kept(int depth, const std::vector<search::Candidate>& kept) {
  std::cout << "depth " << depth << ": kept";
  for (const auto& c : kept) std::cout << " " << c.id << " (r" << c.resolution << ", nfid " << score(c.nfid) << ")";
  std::cout << std::endl;
}

int run_search(const config::RunConfig& cfg) {
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  const fs::path saved = out / "config.json";
  if (fs::exists(saved)) {
    auto prev = config::RunConfig::load(saved);
    prev.workers = cfg.workers;
    prev.out_dir = cfg.out_dir;
    if (prev.to_json() != cfg.to_json()) {
      throw ContractError(out.string() + " holds a run with a different configuration");
    }
  }
  cfg.save(saved);
  const auto ds = cfg.dataset();
  search::GanBackend backend(ds, cfg.backend(), out / "reference");
  const auto r = search::run_search(cfg.search(), backend, out, print_kept);
  std::cout << "best " << r.best.id << " at " << r.best.resolution << "x" << r.best.resolution << ": fid "
            << score(r.best.fid) << ", nfid " << score(r.best.nfid) << "\n";
  if (r.final_model) {
    std::cout << "final model (" << r.final_model->iters << " iters): fid " << score(r.final_model->fid) << ", nfid "
              << score(r.final_model->nfid) << "\n";
  }
  std::cout << "ledger: " << (out / "ledger.jsonl").string() << " (" << r.ledger.size() << " candidates)\n";
  return 0;
}

struct Loaded {
  arch::ArchPair pair;
  arch::PairWeights weights;
};

Loaded load_checkpoint(const fs::path& dir) {
  Loaded l;
  try {
    l.pair = arch::arch_from_json(nlohmann::json::parse(checkpoint::read_file(dir / "arch.json")));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "arch.json").string() + ": " + e.what());
  }
  l.weights = search::split_weights(checkpoint::load(dir / "weights.dgck"));
  const auto expect = arch::instantiate(l.pair, 0);
  if (expect.g.size() != l.weights.g.size()) throw FormatError("generator weights do not match arch.json");
  for (const auto& [name, t] : expect.g) {
    auto it = l.weights.g.find(name);
    if (it == l.weights.g.end() || it->second.shape() != t.shape()) {
      throw FormatError("generator weight '" + name + "' does not match arch.json");
    }
  }
  return l;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamically grown GANs: architecture search over growth actions"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "write a synthetic image dataset");
  std::string family = "gaussian-blobs";
  int count = 1024, resolution = 32;
  std::uint64_t synth_seed = 1;
  bool gray = false;
  std::string synth_out;
  synth->add_option("--family", family, "gaussian-blobs | rects | rings");
  synth->add_option("--count", count, "number of images");
  synth->add_option("--resolution", resolution, "image side in pixels");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_flag("--grayscale", gray, "write P5 images");
  synth->add_option("--out", synth_out, "output directory")->required();

  Overrides base_o, search_o, eval_o;
  auto* baseline = app.add_subcommand("baseline", "train the reference schedule and record baseline FIDs");
  add_common(baseline, base_o, true);

  auto* search_cmd = app.add_subcommand("search", "run the growth search");
  add_common(search_cmd, search_o, true);

  auto* resume = app.add_subcommand("resume", "continue a search from its output directory");
  std::string resume_dir;
  std::optional<int> resume_workers;
  resume->add_option("--out", resume_dir, "search output directory")->required()->check(CLI::ExistingDirectory);
  resume->add_option("--workers", resume_workers, "parallel training jobs");

  auto* evaluate = app.add_subcommand("evaluate", "score a saved candidate");
  std::string eval_ckpt;
  add_common(evaluate, eval_o, true);
  evaluate->add_option("--checkpoint", eval_ckpt, "directory with arch.json and weights.dgck")
      ->required()
      ->check(CLI::ExistingDirectory);

  auto* sample = app.add_subcommand("sample", "write generated images");
  std::string sample_ckpt, sample_out;
  int sample_n = 16;
  std::uint64_t sample_seed = 1;
  sample->add_option("--checkpoint", sample_ckpt, "directory with arch.json and weights.dgck")->required();
  sample->add_option("--n", sample_n, "number of images");
  sample->add_option("--seed", sample_seed, "latent seed");
  sample->add_option("--out", sample_out, "output directory")->required();

  auto* analyze = app.add_subcommand("analyze", "write g2d.csv, actions.csv, risk.csv and sim.csv");
  std::string an_ledger, an_out;
  std::uint64_t an_seed = 1;
  int an_trials = 32;
  analyze->add_option("--ledger", an_ledger, "ledger.jsonl")->required();
  analyze->add_option("--out", an_out, "output directory")->required();
  analyze->add_option("--seed", an_seed, "simulation seed");
  analyze->add_option("--trials", an_trials, "simulation trials per (K, p)");

  auto* simulate = app.add_subcommand("simulate", "replay the search with smaller K or p");
  std::string sim_ledger, sim_out;
  int sim_k = 1, sim_trials = 32;
  double sim_p = 1.0;
  std::uint64_t sim_seed = 1;
  simulate->add_option("--ledger", sim_ledger, "ledger.jsonl")->required();
  simulate->add_option("--K", sim_k, "simulated K");
  simulate->add_option("--p", sim_p, "simulated p");
  simulate->add_option("--trials", sim_trials, "number of trials");
  simulate->add_option("--seed", sim_seed, "simulation seed");
  simulate->add_option("--out", sim_out, "directory for sim.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const data::SynthSpec spec{data::family_from_string(family), count, resolution, synth_seed, gray};
      data::write_images(synth_out, data::synthesize(spec));
      std::cout << "wrote " << count << " images to " << synth_out << "\n";
    } else if (baseline->parsed()) {
      const auto cfg = resolve(base_o);
      const fs::path out = cfg.out_dir;
      const auto ds = cfg.dataset();
      search::GanBackend backend(ds, cfg.backend(), out / "reference");
      fid::BaselineTable table;
      for (int r = cfg.d0; r <= cfg.target_resolution; r *= 2) {
        table.set(r, backend.baseline(r));
        std::cout << "baseline " << r << "x" << r << ": fid " << score(table.at(r)) << std::endl;
      }
      checkpoint::write_file_atomic(out / "baselines.json", table.to_json().dump(2));
    } else if (search_cmd->parsed()) {
      return run_search(resolve(search_o));
    } else if (resume->parsed()) {
      auto cfg = config::RunConfig::load(fs::path(resume_dir) / "config.json");
      cfg.out_dir = resume_dir;
      if (resume_workers) cfg.workers = *resume_workers;
      cfg.validate();
      return run_search(cfg);
    } else if (evaluate->parsed()) {
      const auto cfg = resolve(eval_o);
      const auto ck = load_checkpoint(eval_ckpt);
      const auto ds = cfg.dataset();
      const fs::path out = cfg.out_dir;
      fid::FeatureExtractor fx(cfg.extractor_seed);
      fid::RealStats real(ds, fx, cfg.n_samples, out / "reference" / "real_stats");
      const auto f = fid::evaluate_candidate(ck.weights.g, ck.pair, fx, real.at(ck.pair.resolution()), cfg.n_samples,
                                             cfg.seed);
      std::cout << "resolution " << f.resolution() << ": fid " << score(f.value());
      if (fs::exists(out / "baselines.json")) {
        const auto table =
            fid::BaselineTable::from_json(nlohmann::json::parse(checkpoint::read_file(out / "baselines.json")));
        if (table.has(f.resolution())) std::cout << ", nfid " << score(fid::normalized_fid(f, table).value());
      }
      std::cout << "\n";
    } else if (sample->parsed()) {
      if (sample_n < 0) throw ContractError("--n must be >= 0");
      const auto ck = load_checkpoint(sample_ckpt);
      std::vector<data::Image> images;
      if (sample_n > 0) {
        const auto batch = fid::generate_images(ck.weights.g, ck.pair.g, sample_n, sample_seed);
        for (int i = 0; i < sample_n; ++i) images.push_back(data::to_image(batch, i));
      }
      data::write_images(sample_out, images);
      std::cout << "wrote " << sample_n << " images (" << ck.pair.resolution() << "x" << ck.pair.resolution()
                << ") to " << sample_out << "\n";
    } else if (analyze->parsed()) {
      const auto ledger = search::Ledger::load(an_ledger);
      analysis::write_reports(ledger, an_out, an_seed, an_trials);
      std::cout << "wrote reports for " << ledger.size() << " candidates to " << an_out << "\n";
    } else if (simulate->parsed()) {
      const auto ledger = search::Ledger::load(sim_ledger);
      const auto trials = analysis::simulate_kp(ledger, sim_k, sim_p, sim_seed, sim_trials);
      std::vector<double> best;
      std::vector<analysis::SimRow> rows;
      for (int i = 0; i < sim_trials; ++i) {
        best.push_back(trials[i].best_nfid);
        rows.push_back({sim_k, sim_p, i, trials[i].best_nfid});
      }
      if (!sim_out.empty()) {
        fs::create_directories(sim_out);
        checkpoint::write_file_atomic(fs::path(sim_out) / "sim.csv", analysis::sim_csv(rows));
      }
      std::cout << "median best nfid (K=" << sim_k << ", p=" << sim_p << ", " << sim_trials
                << " trials): " << (best.empty() ? std::string("n/a") : score(analysis::median(best))) << "\n";
    }
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
