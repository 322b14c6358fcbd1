#include "leaffed/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace leaffed {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'Y', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointErrorKind::truncated, "checkpoint truncated while reading " + what);
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32(const std::string& what) {
    const auto b = take(4, what);
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  const std::string spec = model.spec().to_json();
  put_u32(out, static_cast<std::uint32_t>(spec.size()));
  out.insert(out.end(), spec.begin(), spec.end());
  for (const Tensor& p : model.parameters()) {
    put_u32(out, static_cast<std::uint32_t>(p.rank()));
    for (std::size_t d : p.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : p.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrorKind::bad_magic, "bad magic: not a leaffed checkpoint");
  }
  in.take(4, "magic");
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::version_mismatch,
                          "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t spec_len = in.u32("spec length");
  const auto spec_bytes = in.take(spec_len, "model spec");
  ModelSpec spec;
  try {
    spec = ModelSpec::from_json(std::string(spec_bytes.begin(), spec_bytes.end()));
    spec.validate();
  } catch (const ValidationError& e) {
    throw CheckpointError(CheckpointErrorKind::spec_mismatch, std::string("checkpoint spec invalid: ") + e.what());
  }
  Model model(spec);
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    Tensor& p = model.parameters()[i];
    const std::string& name = model.parameter_names()[i];
    const std::uint32_t rank = in.u32("rank of " + name);
    Shape shape(rank);
    for (auto& d : shape) d = in.u32("dims of " + name);
    if (shape != p.shape()) {
      throw CheckpointError(CheckpointErrorKind::spec_mismatch, "tensor " + name + " has shape " +
                                                                    shape_string(shape) + " but the spec needs " +
                                                                    shape_string(p.shape()));
    }
    const auto raw = in.take(p.size() * 4, "values of " + name);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * k]) |
                                 static_cast<std::uint32_t>(raw[4 * k + 1]) << 8 |
                                 static_cast<std::uint32_t>(raw[4 * k + 2]) << 16 |
                                 static_cast<std::uint32_t>(raw[4 * k + 3]) << 24;
      p[k] = std::bit_cast<float>(bits);
    }
  }
  if (in.remaining() != 0) {
    throw CheckpointError(CheckpointErrorKind::spec_mismatch,
                          std::to_string(in.remaining()) + " trailing bytes after the last tensor the spec describes");
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointErrorKind::io_failure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::io_failure, "short write to " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::io_failure, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace leaffed
