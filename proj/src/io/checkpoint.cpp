#include "dggan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dggan::checkpoint {

namespace {

static_assert(std::endian::native == std::endian::little, "DGCK I/O assumes a little-endian host");

template <typename U>
void put(std::vector<unsigned char>& out, U v) {
  unsigned char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.insert(out.end(), buf, buf + sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : b_(b) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, b_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void floats(float* dst, std::size_t n) {
    need(n * sizeof(float));
    std::memcpy(dst, b_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }

  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw FormatError("DGCK blob truncated");
  }
  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode(const TensorMap& tensors) {
  std::vector<unsigned char> out = {'D', 'G', 'C', 'K'};
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF) throw FormatError("tensor name too long: " + name.substr(0, 32));
    if (t.ndim() > 0xFF) throw FormatError("too many dims for " + name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.ndim()));
    for (int d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    const auto* p = reinterpret_cast<const unsigned char*>(t.data().data());
    out.insert(out.end(), p, p + t.size() * sizeof(float));
  }
  return out;
}

TensorMap decode(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "DGCK", 4) != 0) throw FormatError("bad DGCK magic");
  Reader r(bytes);
  (void)r.str(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw FormatError("unsupported DGCK version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  TensorMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string name = r.str(len);
    const auto ndim = r.get<std::uint8_t>();
    tensor::Shape shape;
    for (int d = 0; d < ndim; ++d) {
      const auto e = r.get<std::uint32_t>();
      if (e == 0 || e > 0x7FFFFFFF) throw FormatError("bad extent in " + name);
      shape.push_back(static_cast<int>(e));
    }
    tensor::Tensor<float> t(shape);
    r.floats(t.data().data(), t.size());
    if (!out.emplace(std::move(name), std::move(t)).second) throw FormatError("duplicate DGCK entry");
  }
  if (!r.done()) throw FormatError("trailing bytes after DGCK entries");
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void save(const std::filesystem::path& path, const TensorMap& tensors) {
  const auto bytes = encode(tensors);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

TensorMap load(const std::filesystem::path& path) {
  const std::string s = read_file(path);
  return decode(std::vector<unsigned char>(s.begin(), s.end()));
}

}  // namespace dggan::checkpoint
