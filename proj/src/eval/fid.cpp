#include "dggan/fid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "dggan/checkpoint.hpp"
#include "dggan/errors.hpp"
#include "dggan/hashing.hpp"
#include "dggan/networks.hpp"

namespace dggan::fid {

using tensor::Tape;
using tensor::Tensor;

namespace {

struct ExtractorLayer {
  const char* name;
  int c_in;
  int c_out;
};

constexpr ExtractorLayer kLayers[] = {{"fx/conv0", 3, 16}, {"fx/conv1", 16, 32}, {"fx/conv2", 32, 16}};
constexpr int kChunk = 64;

}  // namespace

FeatureExtractor::FeatureExtractor(std::uint64_t seed) : seed_(seed) {
  for (const auto& l : kLayers) {
    std::mt19937_64 rng(derive_seed(seed, l.name));
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / (l.c_in * 9)));
    Tensor<float> w({l.c_out, l.c_in, 3, 3});
    for (auto& v : w.vec()) v = static_cast<float>(nd(rng));
    weights_[std::string(l.name) + "/weight"] = std::move(w);
    weights_[std::string(l.name) + "/bias"] = Tensor<float>({l.c_out});
  }
}

Eigen::MatrixXd FeatureExtractor::features(const Tensor<float>& images) const {
  if (images.ndim() != 4 || images.dim(1) != arch::kImageChannels || images.dim(2) != images.dim(3)) {
    throw ShapeError("feature extractor expects [N,3,R,R], got " + tensor::shape_str(images.shape()));
  }
  const int n = images.dim(0);
  const int r = images.dim(2);
  Eigen::MatrixXd out(n, kFeatureDim);
  const std::size_t per = images.size() / static_cast<std::size_t>(std::max(n, 1));
  for (int first = 0; first < n; first += kChunk) {
    const int count = std::min(kChunk, n - first);
    Tensor<float> chunk({count, arch::kImageChannels, r, r});
    std::copy_n(images.vec().begin() + static_cast<std::ptrdiff_t>(first * per), count * per, chunk.vec().begin());
    Tape<float> tape;
    auto h = tape.constant(data::resize_batch(chunk, kFeatureResolution));
    for (const auto& l : kLayers) {
      const std::string name(l.name);
      auto w = tape.constant(weights_.at(name + "/weight"));
      auto b = tape.constant(weights_.at(name + "/bias"));
      h = tensor::downsample2x(tensor::leaky_relu(tensor::conv2d(h, w, b, 1)));
    }
    h = tensor::downsample2x(h);  // 16 x 2 x 2
    const auto& v = h.value();
    if (v.size() != static_cast<std::size_t>(count) * kFeatureDim) throw ShapeError("feature size mismatch");
    for (int i = 0; i < count; ++i)
      for (int f = 0; f < kFeatureDim; ++f) out(first + i, f) = v[static_cast<std::size_t>(i) * kFeatureDim + f];
  }
  return out;
}

GaussianStats moments(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) throw ContractError("statistics need at least 2 samples, got " + std::to_string(x.rows()));
  GaussianStats s;
  s.n = static_cast<long>(x.rows());
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd c = x.rowwise() - s.mean.transpose();
  s.cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();
  return s;
}

GaussianStats extract_stats(const Tensor<float>& images, const FeatureExtractor& fx) {
  if (images.ndim() < 1 || images.dim(0) < 2) throw ContractError("statistics need at least 2 images");
  return moments(fx.features(images));
}

Eigen::MatrixXd matrix_sqrt(const Eigen::MatrixXd& s) {
  if (s.rows() != s.cols()) throw ShapeError("matrix_sqrt needs a square matrix");
  const long n = s.rows();
  const double norm = s.norm();
  if (norm == 0.0) return Eigen::MatrixXd::Zero(n, n);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd y = s / norm;
  Eigen::MatrixXd z = id;
  Eigen::MatrixXd best = y * std::sqrt(norm);
  double best_res = std::numeric_limits<double>::infinity();
  int worse = 0;
  for (int it = 0; it < kSqrtMaxIters; ++it) {
    const Eigen::MatrixXd t = 0.5 * (3.0 * id - z * y);
    y = (y * t).eval();
    z = (t * z).eval();
    Eigen::MatrixXd r = y * std::sqrt(norm);
    r = 0.5 * (r + r.transpose()).eval();
    const double res = (r * r - s).norm() / norm;
    if (!std::isfinite(res)) break;
    if (res < best_res) {
      best_res = res;
      best = r;
      worse = 0;
    } else if (++worse >= 3) {
      break;
    }
    if (res < 1e-14) break;
  }
  if (!(best_res < 1e-5)) {
    throw NumericError("matrix_sqrt did not converge: relative residual " + std::to_string(best_res));
  }
  return best;
}

namespace {

// Total order on stats so frechet_distance(a, b) and (b, a) run the same
// arithmetic.
bool canonical_less(const GaussianStats& a, const GaussianStats& b) {
  const auto cmp = [](const double* x, const double* y, long n) {
    for (long i = 0; i < n; ++i) {
      if (x[i] < y[i]) return -1;
      if (x[i] > y[i]) return 1;
    }
    return 0;
  };
  if (int c = cmp(a.mean.data(), b.mean.data(), a.mean.size())) return c < 0;
  return cmp(a.cov.data(), b.cov.data(), a.cov.size()) < 0;
}

}  // namespace

double frechet_distance(const GaussianStats& a_in, const GaussianStats& b_in) {
  if (a_in.mean.size() != b_in.mean.size() || a_in.cov.rows() != b_in.cov.rows() ||
      a_in.cov.rows() != a_in.mean.size()) {
    throw ShapeError("frechet_distance: feature dimensions differ");
  }
  if (a_in.mean == b_in.mean && a_in.cov == b_in.cov) return 0.0;
  const bool swap = canonical_less(b_in, a_in);
  const GaussianStats& a = swap ? b_in : a_in;
  const GaussianStats& b = swap ? a_in : b_in;

  const double dmu = (a.mean - b.mean).squaredNorm();
  const Eigen::MatrixXd ra = matrix_sqrt(a.cov);
  Eigen::MatrixXd m = ra * b.cov * ra;
  m = 0.5 * (m + m.transpose()).eval();
  const double tr_sqrt = matrix_sqrt(m).trace();
  const double d = dmu + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  if (d < 0) {
    if (d < -1e-6) throw NumericError("frechet_distance came out negative: " + std::to_string(d));
    return 0.0;
  }
  return d;
}

// ---- typed scores -------------------------------------------------------------

bool RawFid::finite() const { return std::isfinite(value_); }

bool RawFid::operator<(const RawFid& other) const {
  if (resolution_ != other.resolution_) {
    throw ContractError("raw FIDs at resolutions " + std::to_string(resolution_) + " and " +
                        std::to_string(other.resolution_) + " are not comparable");
  }
  return value_ < other.value_;
}

bool RawFid::operator==(const RawFid& other) const {
  return resolution_ == other.resolution_ && value_ == other.value_;
}

void BaselineTable::set(int resolution, double fid) {
  if (!(fid > 0) || !std::isfinite(fid)) {
    throw NumericError("baseline FID at " + std::to_string(resolution) + " must be finite and positive, got " +
                       std::to_string(fid));
  }
  table_[resolution] = fid;
}

double BaselineTable::at(int resolution) const {
  auto it = table_.find(resolution);
  if (it == table_.end()) throw ContractError("no baseline FID for resolution " + std::to_string(resolution));
  return it->second;
}

nlohmann::json BaselineTable::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [r, v] : table_) j[std::to_string(r)] = v;
  return j;
}

BaselineTable BaselineTable::from_json(const nlohmann::json& j) {
  BaselineTable t;
  for (const auto& [k, v] : j.items()) t.set(std::stoi(k), v.get<double>());
  return t;
}

NormalizedFid normalized_fid(const RawFid& fid, const BaselineTable& table) {
  return NormalizedFid(fid.value() / table.at(fid.resolution()));
}

double normalized_fid(double fid, int resolution, const BaselineTable& table) {
  return normalized_fid(RawFid(fid, resolution), table).value();
}

// ---- real statistics cache ----------------------------------------------------

RealStats::RealStats(const data::Dataset& dataset, const FeatureExtractor& fx, int n_samples,
                     std::filesystem::path cache_dir)
    : dataset_(dataset), fx_(fx), n_samples_(n_samples), dir_(std::move(cache_dir)) {
  if (n_samples < 2) throw ContractError("n_samples must be >= 2");
}

std::filesystem::path RealStats::cache_path(int resolution) const {
  return dir_ / ("real_r" + std::to_string(resolution) + "_fx" + hex64(fx_.seed()) + "_ds" + hex64(dataset_.hash()) +
                 "_n" + std::to_string(n_samples_) + ".dgck");
}

namespace {

// Stats travel through fp32 blobs; rounding fresh stats the same way keeps
// cached and recomputed runs bitwise identical.
GaussianStats from_blob(const checkpoint::TensorMap& m) {
  const auto& mean = m.at("mean");
  const auto& cov = m.at("cov");
  const int f = mean.dim(0);
  if (cov.shape() != tensor::Shape{f, f}) throw FormatError("real stats blob has inconsistent shapes");
  GaussianStats s;
  s.mean.resize(f);
  s.cov.resize(f, f);
  for (int i = 0; i < f; ++i) s.mean(i) = mean[static_cast<std::size_t>(i)];
  for (int i = 0; i < f; ++i)
    for (int j = 0; j < f; ++j) s.cov(i, j) = cov[static_cast<std::size_t>(i) * f + j];
  s.n = static_cast<long>(m.at("n")[0]);
  return s;
}

checkpoint::TensorMap to_blob(const GaussianStats& s) {
  const int f = static_cast<int>(s.mean.size());
  Tensor<float> mean({f}), cov({f, f});
  for (int i = 0; i < f; ++i) mean[static_cast<std::size_t>(i)] = static_cast<float>(s.mean(i));
  for (int i = 0; i < f; ++i)
    for (int j = 0; j < f; ++j) {
      // Symmetric by construction after rounding.
      const double v = i <= j ? s.cov(i, j) : s.cov(j, i);
      cov[static_cast<std::size_t>(i) * f + j] = static_cast<float>(v);
    }
  return {{"mean", mean}, {"cov", cov}, {"n", Tensor<float>({1}, {static_cast<float>(s.n)})}};
}

}  // namespace

const GaussianStats& RealStats::at(int resolution) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = cache_.find(resolution);
  if (it != cache_.end()) return *it->second;
  std::unique_ptr<GaussianStats> stats;
  const auto path = cache_path(resolution);
  if (!dir_.empty() && std::filesystem::exists(path)) {
    stats = std::make_unique<GaussianStats>(from_blob(checkpoint::load(path)));
  } else {
    const data::Dataset ds = dataset_.resampled(resolution);
    const int n = std::min(n_samples_, ds.size());
    if (n < 2) throw ContractError("dataset needs at least 2 images for statistics");
    auto blob = to_blob(extract_stats(ds.slice(0, n), fx_));
    stats = std::make_unique<GaussianStats>(from_blob(blob));
    if (!dir_.empty()) checkpoint::save(path, blob);
  }
  return *cache_.emplace(resolution, std::move(stats)).first->second;
}

// ---- generated samples ---------------------------------------------------------

Tensor<float> generate_images(const arch::WeightSet& g_weights, const arch::NetworkSpec& g, int n,
                              std::uint64_t seed) {
  const int r = g.resolution();
  Tensor<float> out({n, arch::kImageChannels, r, r});
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  const std::size_t per = static_cast<std::size_t>(arch::kImageChannels) * r * r;
  for (int first = 0; first < n; first += kChunk) {
    const int count = std::min(kChunk, n - first);
    Tensor<float> z({count, g.latent_dim});
    for (auto& v : z.vec()) v = nd(rng);
    Tape<float> tape;
    auto p = arch::bind(tape, g_weights, false);
    const auto& img = arch::generator_forward(g, p, tape.constant(z), 1.0f).value();
    std::copy(img.vec().begin(), img.vec().end(), out.vec().begin() + static_cast<std::ptrdiff_t>(first * per));
  }
  return out;
}

RawFid evaluate_images(const Tensor<float>& images, const FeatureExtractor& fx, const GaussianStats& real) {
  const int r = images.ndim() == 4 ? images.dim(2) : 0;
  for (float v : images.vec())
    if (!std::isfinite(v)) return RawFid(std::numeric_limits<double>::infinity(), r);
  const auto fake = extract_stats(images, fx);
  if (!fake.mean.allFinite() || !fake.cov.allFinite()) return RawFid(std::numeric_limits<double>::infinity(), r);
  return RawFid(frechet_distance(fake, real), r);
}

RawFid evaluate_candidate(const arch::WeightSet& g_weights, const arch::ArchPair& pair, const FeatureExtractor& fx,
                          const GaussianStats& real, int n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw ContractError("n_samples must be >= 2");
  return evaluate_images(generate_images(g_weights, pair.g, n_samples, seed), fx, real);
}

}  // namespace dggan::fid
