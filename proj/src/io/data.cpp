#include "dggan/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "dggan/hashing.hpp"

namespace dggan::data {

namespace fs = std::filesystem;

void write_pnm(const fs::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw FormatError("PNM images need 1 or 3 channels");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw IoError("short write to " + path.string());
}

namespace {

int read_header_int(std::istream& in, const fs::path& path) {
  int c = in.peek();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int v = -1;
  if (!(in >> v) || v <= 0) throw FormatError("bad PNM header in " + path.string());
  return v;
}

}  // namespace

Image read_pnm(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  char magic[2] = {};
  f.read(magic, 2);
  if (!f || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw FormatError("not a binary PGM/PPM: " + path.string());
  }
  Image img;
  img.channels = magic[1] == '5' ? 1 : 3;
  img.width = read_header_int(f, path);
  img.height = read_header_int(f, path);
  const int maxval = read_header_int(f, path);
  if (maxval != 255) throw FormatError("only 8-bit PNM supported: " + path.string());
  f.get();  // single whitespace before the raster
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw FormatError("truncated raster in " + path.string());
  return img;
}

Family family_from_string(const std::string& name) {
  if (name == "gaussian-blobs") return Family::gaussian_blobs;
  if (name == "rects") return Family::rects;
  if (name == "rings") return Family::rings;
  throw ContractError("unknown dataset family '" + name + "' (gaussian-blobs | rects | rings)");
}

std::string to_string(Family f) {
  switch (f) {
    case Family::gaussian_blobs: return "gaussian-blobs";
    case Family::rects: return "rects";
    case Family::rings: return "rings";
  }
  return "?";
}

namespace {

struct Canvas {
  int r;
  std::vector<double> rgb;  // [3][r][r] planar
  explicit Canvas(int res) : r(res), rgb(static_cast<std::size_t>(3) * res * res, 0.0) {}
  double& at(int c, int y, int x) { return rgb[(static_cast<std::size_t>(c) * r + y) * r + x]; }
};

Image finish(Canvas& cv, bool grayscale) {
  Image img;
  img.width = img.height = cv.r;
  img.channels = grayscale ? 1 : 3;
  img.pixels.resize(static_cast<std::size_t>(cv.r) * cv.r * img.channels);
  for (int y = 0; y < cv.r; ++y)
    for (int x = 0; x < cv.r; ++x) {
      if (grayscale) {
        const double v = (cv.at(0, y, x) + cv.at(1, y, x) + cv.at(2, y, x)) / 3.0;
        img.pixels[static_cast<std::size_t>(y) * cv.r + x] =
            static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      } else {
        for (int c = 0; c < 3; ++c) {
          img.pixels[(static_cast<std::size_t>(y) * cv.r + x) * 3 + c] =
              static_cast<std::uint8_t>(std::lround(std::clamp(cv.at(c, y, x), 0.0, 1.0) * 255.0));
        }
      }
    }
  return img;
}

// One Gaussian blob of a fixed warm hue: centre uniform in the middle half
// of the frame, sigma uniform in [R/12, R/7], brightness uniform in [0.7, 1].
Image render_blob(int r, std::mt19937_64& rng, bool gray) {
  std::uniform_real_distribution<double> centre(r * 0.25, r * 0.75);
  std::uniform_real_distribution<double> sig(r / 12.0, r / 7.0);
  std::uniform_real_distribution<double> bright(0.7, 1.0);
  const double cx = centre(rng), cy = centre(rng), s = sig(rng), b = bright(rng);
  const double hue[3] = {1.0, 0.65, 0.25};
  Canvas cv(r);
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double v = b * std::exp(-(dx * dx + dy * dy) / (2 * s * s));
      for (int c = 0; c < 3; ++c) cv.at(c, y, x) = v * hue[c];
    }
  return finish(cv, gray);
}

Image render_rect(int r, std::mt19937_64& rng, bool gray) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double w = r * (0.2 + 0.4 * u(rng)), h = r * (0.2 + 0.4 * u(rng));
  const double x0 = u(rng) * (r - w), y0 = u(rng) * (r - h);
  const double col[3] = {0.3 + 0.7 * u(rng), 0.3 + 0.7 * u(rng), 0.3 + 0.7 * u(rng)};
  Canvas cv(r);
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x) {
      const bool inside = x + 0.5 >= x0 && x + 0.5 <= x0 + w && y + 0.5 >= y0 && y + 0.5 <= y0 + h;
      for (int c = 0; c < 3; ++c) cv.at(c, y, x) = inside ? col[c] : 0.1;
    }
  return finish(cv, gray);
}

Image render_ring(int r, std::mt19937_64& rng, bool gray) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double rad = r * (0.15 + 0.2 * u(rng));
  const double width = std::max(1.0, r * 0.06);
  const double cx = r * 0.5 + (u(rng) - 0.5) * r * 0.3, cy = r * 0.5 + (u(rng) - 0.5) * r * 0.3;
  const double col[3] = {0.2 + 0.3 * u(rng), 0.6 + 0.4 * u(rng), 0.5 + 0.5 * u(rng)};
  Canvas cv(r);
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x) {
      const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
      const double v = std::exp(-std::pow((d - rad) / width, 2));
      for (int c = 0; c < 3; ++c) cv.at(c, y, x) = v * col[c];
    }
  return finish(cv, gray);
}

}  // namespace

std::vector<Image> synthesize(const SynthSpec& spec) {
  if (spec.count < 0) throw ContractError("image count must be >= 0");
  if (spec.resolution < 4) throw ContractError("resolution must be >= 4");
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  std::mt19937_64 rng(derive_seed(spec.seed, to_string(spec.family)));
  for (int i = 0; i < spec.count; ++i) {
    switch (spec.family) {
      case Family::gaussian_blobs: out.push_back(render_blob(spec.resolution, rng, spec.grayscale)); break;
      case Family::rects: out.push_back(render_rect(spec.resolution, rng, spec.grayscale)); break;
      case Family::rings: out.push_back(render_ring(spec.resolution, rng, spec.grayscale)); break;
    }
  }
  return out;
}

void write_images(const fs::path& dir, const std::vector<Image>& images) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.%s", i, images[i].channels == 1 ? "pgm" : "ppm");
    write_pnm(dir / name, images[i]);
  }
}

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, -1.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround((c + 1.0f) * 127.5f));
}

float from_byte(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

Image to_image(const tensor::Tensor<float>& batch, int index) {
  const int r = batch.dim(2);
  Image img;
  img.width = img.height = r;
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(r) * r * 3);
  const std::size_t base = static_cast<std::size_t>(index) * 3 * r * r;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x)
        img.pixels[(static_cast<std::size_t>(y) * r + x) * 3 + c] =
            to_byte(batch[base + (static_cast<std::size_t>(c) * r + y) * r + x]);
  return img;
}

Dataset::Dataset(tensor::Tensor<float> images) : images_(std::move(images)) {
  if (images_.ndim() != 4 || images_.dim(1) != 3 || images_.dim(2) != images_.dim(3)) {
    throw ShapeError("dataset tensor must be [N,3,R,R], got " + tensor::shape_str(images_.shape()));
  }
}

Dataset Dataset::from_images(const std::vector<Image>& images) {
  if (images.empty()) return Dataset();
  const int r = images.front().width;
  tensor::Tensor<float> t({static_cast<int>(images.size()), 3, r, r});
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = images[i];
    if (img.width != r || img.height != r) throw ShapeError("dataset images must all be square and the same size");
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < r; ++y)
        for (int x = 0; x < r; ++x) {
          const std::size_t src = (static_cast<std::size_t>(y) * r + x) * img.channels + (img.channels == 1 ? 0 : c);
          t[((i * 3 + c) * r + y) * r + x] = from_byte(img.pixels[src]);
        }
  }
  return Dataset(std::move(t));
}

Dataset Dataset::load_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> images;
  images.reserve(files.size());
  for (const auto& f : files) images.push_back(read_pnm(f));
  return from_images(images);
}

tensor::Tensor<float> resize_batch(const tensor::Tensor<float>& batch, int resolution) {
  tensor::Tape<float> tape;
  auto v = tape.constant(batch);
  int r = batch.dim(2);
  if (resolution <= 0) throw ContractError("resolution must be positive");
  while (r < resolution) {
    v = tensor::upsample2x(v);
    r *= 2;
  }
  while (r > resolution) {
    v = tensor::downsample2x(v);
    r /= 2;
  }
  if (r != resolution) throw ContractError("resolutions must differ by a power of two");
  return v.value();
}

Dataset Dataset::resampled(int resolution) const {
  if (images_.empty() || resolution == this->resolution()) return *this;
  if (resolution > this->resolution()) {
    throw ContractError("dataset resolution " + std::to_string(this->resolution()) + " is below " +
                        std::to_string(resolution));
  }
  return Dataset(resize_batch(images_, resolution));
}

tensor::Tensor<float> Dataset::slice(int first, int count) const {
  if (first < 0 || count <= 0 || first + count > size()) throw ContractError("dataset slice out of range");
  const std::size_t per = images_.size() / static_cast<std::size_t>(size());
  tensor::Shape s = images_.shape();
  s[0] = count;
  std::vector<float> out(images_.vec().begin() + static_cast<std::ptrdiff_t>(per * first),
                         images_.vec().begin() + static_cast<std::ptrdiff_t>(per * (first + count)));
  return tensor::Tensor<float>(s, std::move(out));
}

tensor::Tensor<float> Dataset::gather(const std::vector<int>& indices) const {
  const std::size_t per = images_.size() / static_cast<std::size_t>(size());
  tensor::Shape s = images_.shape();
  s[0] = static_cast<int>(indices.size());
  tensor::Tensor<float> out(s);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(images_.vec().begin() + static_cast<std::ptrdiff_t>(per * indices[i]), per,
                out.vec().begin() + static_cast<std::ptrdiff_t>(per * i));
  }
  return out;
}

std::uint64_t Dataset::hash() const {
  std::uint64_t h = kFnvOffset;
  for (int d : images_.shape()) h = fnv1a64(std::to_string(d) + ",", h);
  const auto* p = reinterpret_cast<const unsigned char*>(images_.data().data());
  return fnv1a64(std::span<const unsigned char>(p, images_.size() * sizeof(float)), h);
}

}  // namespace dggan::data
