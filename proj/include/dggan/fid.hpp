#pragma once

// Frechet distance between feature statistics of real and generated images.

#include <Eigen/Dense>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>

#include "dggan/arch.hpp"
#include "dggan/data.hpp"
#include "json.hpp"

namespace dggan::fid {

inline constexpr int kFeatureDim = 64;
inline constexpr int kFeatureResolution = 32;

// Fixed random conv net: every input is resized to 32x32, then three
// conv3x3 + leaky ReLU + 2x2 pooling blocks and a final pool to 16x2x2.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(std::uint64_t seed = 2019);

  std::uint64_t seed() const { return seed_; }
  int dim() const { return kFeatureDim; }
  // [N, 3, R, R] -> N x F
  Eigen::MatrixXd features(const tensor::Tensor<float>& images) const;

 private:
  std::uint64_t seed_;
  arch::WeightSet weights_;
};

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased
  long n = 0;
};

// Rows are samples.
GaussianStats moments(const Eigen::MatrixXd& features);
GaussianStats extract_stats(const tensor::Tensor<float>& images, const FeatureExtractor& fx);

inline constexpr int kSqrtMaxIters = 100;

// Coupled Newton-Schulz iteration on the trace-normalised matrix, in fp64.
// Throws NumericError if the residual |R*R - S|_F stays above 1e-5 |S|_F.
Eigen::MatrixXd matrix_sqrt(const Eigen::MatrixXd& s);

// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2))
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// A Frechet distance measured at one resolution. Ordering is only defined
// between scores of the same resolution.
class RawFid {
 public:
  RawFid() = default;
  RawFid(double value, int resolution) : value_(value), resolution_(resolution) {}
  double value() const { return value_; }
  int resolution() const { return resolution_; }
  bool finite() const;
  bool operator<(const RawFid& other) const;
  bool operator==(const RawFid& other) const;

 private:
  double value_ = 0;
  int resolution_ = 0;
};

// Raw FID over the baseline FID of its resolution; comparable everywhere.
class NormalizedFid {
 public:
  NormalizedFid() = default;
  explicit NormalizedFid(double v) : value_(v) {}
  double value() const { return value_; }
  auto operator<=>(const NormalizedFid&) const = default;

 private:
  double value_ = 0;
};

class BaselineTable {
 public:
  void set(int resolution, double fid);
  bool has(int resolution) const { return table_.count(resolution) != 0; }
  double at(int resolution) const;
  const std::map<int, double>& entries() const { return table_; }

  nlohmann::json to_json() const;
  static BaselineTable from_json(const nlohmann::json& j);

 private:
  std::map<int, double> table_;
};

NormalizedFid normalized_fid(const RawFid& fid, const BaselineTable& table);
double normalized_fid(double fid, int resolution, const BaselineTable& table);

// Real-image statistics per resolution, computed once from the first
// n_samples images and persisted as DGCK blobs (mean, cov, n) keyed by
// extractor seed and dataset hash. Safe to share between threads.
class RealStats {
 public:
  RealStats(const data::Dataset& dataset, const FeatureExtractor& fx, int n_samples,
            std::filesystem::path cache_dir = {});

  const GaussianStats& at(int resolution);
  std::filesystem::path cache_path(int resolution) const;

 private:
  const data::Dataset& dataset_;
  const FeatureExtractor& fx_;
  int n_samples_;
  std::filesystem::path dir_;
  std::mutex mu_;
  std::map<int, std::unique_ptr<GaussianStats>> cache_;
};

// Generates n_samples images from latents drawn from `seed` and scores them
// against `real`. Non-finite pixels give +infinity.
RawFid evaluate_candidate(const arch::WeightSet& g_weights, const arch::ArchPair& pair, const FeatureExtractor& fx,
                          const GaussianStats& real, int n_samples, std::uint64_t seed);

// Scores a batch of images at their own resolution.
RawFid evaluate_images(const tensor::Tensor<float>& images, const FeatureExtractor& fx, const GaussianStats& real);

// Images from the generator, in batches; alpha 1.
tensor::Tensor<float> generate_images(const arch::WeightSet& g_weights, const arch::NetworkSpec& g, int n,
                                      std::uint64_t seed);

}  // namespace dggan::fid
