#pragma once

// Flat JSON run configuration shared by every command.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dggan/data.hpp"
#include "dggan/search.hpp"
#include "json.hpp"

namespace dggan::config {

struct RunConfig {
  // architecture
  int d0 = 8;
  int target_resolution = 16;
  int latent_dim = 16;
  int base_channels = 8;
  std::vector<int> filter_sizes{3};
  std::vector<int> filter_counts{4, 8, 16, 32};
  bool allow_grow_both = true;
  // search
  int K = 4;
  double p = 0.5;
  int max_layers = 6;
  int n_initial = 1;
  long iters = 1000;
  double final_multiplier = 5.0;
  // training
  double lambda_gp = 10.0;
  double lr = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  int batch_size = 16;
  int n_critic = 1;
  double fade_in_fraction = 0.5;
  std::string loss = "wgan_gp";
  double clip = 0.01;
  // evaluation
  int n_samples = 512;
  std::uint64_t extractor_seed = 2019;
  // run
  std::uint64_t seed = 1;
  int workers = 1;
  // dataset: an image directory, or a synthetic family when empty
  std::string dataset_dir;
  std::string dataset_family = "gaussian-blobs";
  int dataset_count = 2048;
  int dataset_resolution = 0;  // 0: target_resolution
  std::uint64_t dataset_seed = 1;
  bool dataset_grayscale = false;
  std::string out_dir = "run";

  // Names the offending field on failure.
  void validate() const;

  search::SearchConfig search() const;
  search::GanBackendConfig backend() const;
  data::SynthSpec synth_spec() const;
  // Loads or synthesises the dataset and checks it covers target_resolution.
  data::Dataset dataset() const;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);  // unknown keys rejected
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

}  // namespace dggan::config
