#include "dggan/config.hpp"

#include <set>

#include "dggan/checkpoint.hpp"
#include "dggan/errors.hpp"

namespace dggan::config {

namespace {

bool pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

template <typename T>
void field(const nlohmann::json& j, const char* name, T& out) {
  if (!j.contains(name)) return;
  try {
    out = j.at(name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config field '") + name + "': " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& f, const std::string& why) { throw ContractError("config field '" + f + "' " + why); };
  if (d0 < 4 || !pow2(d0)) fail("d0", "must be a power of two >= 4, got " + std::to_string(d0));
  if (target_resolution < d0 || target_resolution % d0 != 0 || !pow2(target_resolution / d0)) {
    fail("target_resolution", "must be d0 * 2^s, got " + std::to_string(target_resolution));
  }
  if (latent_dim <= 0) fail("latent_dim", "must be positive");
  if (base_channels <= 0) fail("base_channels", "must be positive");
  if (filter_sizes.empty()) fail("filter_sizes", "must not be empty");
  for (int k : filter_sizes)
    if (k <= 0 || k % 2 == 0) fail("filter_sizes", "entries must be odd and positive");
  if (filter_counts.empty()) fail("filter_counts", "must not be empty");
  for (int n : filter_counts)
    if (n <= 0) fail("filter_counts", "entries must be positive");
  if (K <= 0) fail("K", "must be positive");
  if (!(p > 0 && p <= 1)) fail("p", "must lie in (0, 1]");
  if (max_layers < 0) fail("max_layers", "must be >= 0");
  if (n_initial <= 0) fail("n_initial", "must be positive");
  if (iters < 0) fail("iters", "must be >= 0");
  if (final_multiplier < 0) fail("final_multiplier", "must be >= 0");
  if (lambda_gp < 0) fail("lambda_gp", "must be >= 0");
  if (!(lr > 0)) fail("lr", "must be positive");
  if (beta1 < 0 || beta1 >= 1) fail("beta1", "must lie in [0, 1)");
  if (beta2 < 0 || beta2 >= 1) fail("beta2", "must lie in [0, 1)");
  if (batch_size <= 0) fail("batch_size", "must be positive");
  if (n_critic <= 0) fail("n_critic", "must be positive");
  if (fade_in_fraction < 0 || fade_in_fraction > 1) fail("fade_in_fraction", "must lie in [0, 1]");
  if (loss != "wgan_gp" && loss != "wgan_clip") fail("loss", "must be wgan_gp or wgan_clip");
  if (!(clip > 0)) fail("clip", "must be positive");
  if (n_samples < 2) fail("n_samples", "must be >= 2");
  if (workers <= 0) fail("workers", "must be positive");
  if (dataset_dir.empty()) {
    try {
      (void)data::family_from_string(dataset_family);
    } catch (const std::exception&) {
      fail("dataset_family", "must be gaussian-blobs, rects or rings");
    }
    if (dataset_count < n_samples) fail("dataset_count", "must be >= n_samples");
    if (dataset_resolution != 0 && dataset_resolution < target_resolution) {
      fail("dataset_resolution", "must be >= target_resolution");
    }
  }
  if (out_dir.empty()) fail("out_dir", "must not be empty");
}

search::SearchConfig RunConfig::search() const {
  search::SearchConfig s;
  s.base = {d0, latent_dim, base_channels};
  s.space.filter_sizes = filter_sizes;
  s.space.filter_counts = filter_counts;
  s.space.target_resolution = target_resolution;
  s.space.allow_grow_both = allow_grow_both;
  s.K = K;
  s.p = p;
  s.max_layers = max_layers;
  s.n_initial = n_initial;
  s.iters = iters;
  s.final_multiplier = final_multiplier;
  s.seed = seed;
  s.workers = workers;
  return s;
}

search::GanBackendConfig RunConfig::backend() const {
  search::GanBackendConfig b;
  b.train.iters = iters;
  b.train.batch_size = batch_size;
  b.train.lr = lr;
  b.train.beta1 = beta1;
  b.train.beta2 = beta2;
  b.train.lambda_gp = lambda_gp;
  b.train.n_critic = n_critic;
  b.train.fade_in_fraction = fade_in_fraction;
  b.train.loss_kind = train::loss_kind_from_string(loss);
  b.train.clip = clip;
  b.n_samples = n_samples;
  b.extractor_seed = extractor_seed;
  b.seed = seed;
  const auto s = search();
  b.base = s.base;
  b.space = s.space;
  return b;
}

data::SynthSpec RunConfig::synth_spec() const {
  return {data::family_from_string(dataset_family), dataset_count,
          dataset_resolution ? dataset_resolution : target_resolution, dataset_seed, dataset_grayscale};
}

data::Dataset RunConfig::dataset() const {
  auto ds = dataset_dir.empty() ? data::Dataset::from_images(data::synthesize(synth_spec()))
                                : data::Dataset::load_dir(dataset_dir);
  if (ds.resolution() < target_resolution) {
    throw ContractError("dataset resolution " + std::to_string(ds.resolution()) + " is below target_resolution " +
                        std::to_string(target_resolution));
  }
  if (ds.size() < n_samples) {
    throw ContractError("dataset has " + std::to_string(ds.size()) + " images, fewer than n_samples");
  }
  return ds;
}

nlohmann::json RunConfig::to_json() const {
  return {{"d0", d0},
          {"target_resolution", target_resolution},
          {"latent_dim", latent_dim},
          {"base_channels", base_channels},
          {"filter_sizes", filter_sizes},
          {"filter_counts", filter_counts},
          {"allow_grow_both", allow_grow_both},
          {"K", K},
          {"p", p},
          {"max_layers", max_layers},
          {"n_initial", n_initial},
          {"iters", iters},
          {"final_multiplier", final_multiplier},
          {"lambda_gp", lambda_gp},
          {"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"batch_size", batch_size},
          {"n_critic", n_critic},
          {"fade_in_fraction", fade_in_fraction},
          {"loss", loss},
          {"clip", clip},
          {"n_samples", n_samples},
          {"extractor_seed", extractor_seed},
          {"seed", seed},
          {"workers", workers},
          {"dataset_dir", dataset_dir},
          {"dataset_family", dataset_family},
          {"dataset_count", dataset_count},
          {"dataset_resolution", dataset_resolution},
          {"dataset_seed", dataset_seed},
          {"dataset_grayscale", dataset_grayscale},
          {"out_dir", out_dir}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  RunConfig c;
  const auto known = c.to_json();
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw FormatError("unknown config field '" + k + "'");
  field(j, "d0", c.d0);
  field(j, "target_resolution", c.target_resolution);
  field(j, "latent_dim", c.latent_dim);
  field(j, "base_channels", c.base_channels);
  field(j, "filter_sizes", c.filter_sizes);
  field(j, "filter_counts", c.filter_counts);
  field(j, "allow_grow_both", c.allow_grow_both);
  field(j, "K", c.K);
  field(j, "p", c.p);
  field(j, "max_layers", c.max_layers);
  field(j, "n_initial", c.n_initial);
  field(j, "iters", c.iters);
  field(j, "final_multiplier", c.final_multiplier);
  field(j, "lambda_gp", c.lambda_gp);
  field(j, "lr", c.lr);
  field(j, "beta1", c.beta1);
  field(j, "beta2", c.beta2);
  field(j, "batch_size", c.batch_size);
  field(j, "n_critic", c.n_critic);
  field(j, "fade_in_fraction", c.fade_in_fraction);
  field(j, "loss", c.loss);
  field(j, "clip", c.clip);
  field(j, "n_samples", c.n_samples);
  field(j, "extractor_seed", c.extractor_seed);
  field(j, "seed", c.seed);
  field(j, "workers", c.workers);
  field(j, "dataset_dir", c.dataset_dir);
  field(j, "dataset_family", c.dataset_family);
  field(j, "dataset_count", c.dataset_count);
  field(j, "dataset_resolution", c.dataset_resolution);
  field(j, "dataset_seed", c.dataset_seed);
  field(j, "dataset_grayscale", c.dataset_grayscale);
  field(j, "out_dir", c.out_dir);
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(checkpoint::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

void RunConfig::save(const std::filesystem::path& path) const {
  checkpoint::write_file_atomic(path, to_json().dump(2) + "\n");
}

}  // namespace dggan::config
