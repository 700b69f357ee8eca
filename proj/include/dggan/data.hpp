#pragma once

// Image datasets: binary PGM/PPM I/O, synthetic toy families and the
// float tensor view the trainer consumes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dggan/tensor.hpp"

namespace dggan::data {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;  // 1 (P5) or 3 (P6)
  std::vector<std::uint8_t> pixels;  // interleaved, row-major
};

void write_pnm(const std::filesystem::path& path, const Image& img);
Image read_pnm(const std::filesystem::path& path);

enum class Family { gaussian_blobs, rects, rings };
Family family_from_string(const std::string& name);
std::string to_string(Family f);

struct SynthSpec {
  Family family = Family::gaussian_blobs;
  int count = 1024;
  int resolution = 32;
  std::uint64_t seed = 1;
  bool grayscale = false;
};

// Deterministic in the spec: same spec, same pixels.
std::vector<Image> synthesize(const SynthSpec& spec);
// Writes img_00000.ppm (or .pgm), ... into `dir`.
void write_images(const std::filesystem::path& dir, const std::vector<Image>& images);

// [N, 3, R, R] in [-1, 1].
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(tensor::Tensor<float> images);

  static Dataset from_images(const std::vector<Image>& images);
  // Loads every .pgm/.ppm in `dir` in file-name order.
  static Dataset load_dir(const std::filesystem::path& dir);

  int size() const { return images_.empty() ? 0 : images_.dim(0); }
  int resolution() const { return images_.empty() ? 0 : images_.dim(2); }
  const tensor::Tensor<float>& images() const { return images_; }

  // Average-pooled copy at a lower power-of-two resolution.
  Dataset resampled(int resolution) const;
  // Rows [first, first + count).
  tensor::Tensor<float> slice(int first, int count) const;
  tensor::Tensor<float> gather(const std::vector<int>& indices) const;
  std::uint64_t hash() const;

 private:
  tensor::Tensor<float> images_;
};

// [-1, 1] floats to bytes and back.
std::uint8_t to_byte(float v);
float from_byte(std::uint8_t b);
// One [3, R, R] slab of a batch as an RGB image.
Image to_image(const tensor::Tensor<float>& batch, int index);

// Nearest-neighbour upsampling or 2x2 average pooling to the target size
// (both power-of-two related).
tensor::Tensor<float> resize_batch(const tensor::Tensor<float>& batch, int resolution);

}  // namespace dggan::data
