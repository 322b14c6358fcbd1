#include "leaffed/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <nlohmann/json.hpp>
#include <string>

namespace leaffed {
namespace fs = std::filesystem;

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  // Skips whitespace and '#' comments, then parses a decimal token.
  std::size_t number(const char* what) {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      ++pos_;
      if (++digits > 9) throw malformed(std::string(what) + " is too large");
    }
    if (digits == 0) throw malformed(std::string("expected ") + what);
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw malformed("missing whitespace after maxval");
    }
    ++pos_;
  }

  std::size_t position() const noexcept { return pos_; }

  static DataError malformed(const std::string& why) {
    return DataError(DataErrorKind::malformed_header, "malformed PNM header: " + why);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::io_failure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint8_t quantize(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

bool is_pnm(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".ppm";
}

Tensor convert_channels(const Tensor& image, std::size_t channels) {
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (c == channels) return image;
  Tensor out({h, w, channels}, 0.0f);
  for (std::size_t i = 0; i < h * w; ++i) {
    if (channels == 3) {
      for (std::size_t k = 0; k < 3; ++k) out[i * 3 + k] = image[i];
    } else {
      const double mean = (double(image[i * 3]) + image[i * 3 + 1] + image[i * 3 + 2]) / 3.0;
      out[i] = static_cast<float>(mean);
    }
  }
  return out;
}

}  // namespace

Tensor decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') {
    throw DataError(DataErrorKind::unsupported_magic, "not a binary PGM/PPM file (bad magic)");
  }
  std::size_t channels = 0;
  if (bytes[1] == '5') {
    channels = 1;
  } else if (bytes[1] == '6') {
    channels = 3;
  } else {
    throw DataError(DataErrorKind::unsupported_magic,
                    std::string("unsupported PNM magic 'P") + static_cast<char>(bytes[1]) + "' (expected P5 or P6)");
  }
  HeaderReader reader(bytes.subspan(2));
  const std::size_t width = reader.number("width");
  const std::size_t height = reader.number("height");
  const std::size_t maxval = reader.number("maxval");
  if (width == 0 || height == 0) throw HeaderReader::malformed("zero image dimension");
  if (maxval == 0 || maxval > 255) {
    throw HeaderReader::malformed("maxval " + std::to_string(maxval) + " outside 1..255");
  }
  reader.single_space();
  const std::size_t offset = 2 + reader.position();
  const std::size_t count = width * height * channels;
  if (bytes.size() - offset < count) {
    throw DataError(DataErrorKind::truncated_pixels, "PNM raster truncated: expected " + std::to_string(count) +
                                                         " bytes, found " + std::to_string(bytes.size() - offset));
  }
  Tensor image({height, width, channels}, 0.0f);
  const float scale = static_cast<float>(maxval);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t v = bytes[offset + i];
    if (v > maxval) throw DataError(DataErrorKind::truncated_pixels, "PNM sample exceeds maxval");
    image[i] = static_cast<float>(v) / scale;
  }
  return image;
}

std::vector<std::uint8_t> encode_pnm(const Tensor& image) {
  if (image.rank() != 3 || (image.dim(2) != 1 && image.dim(2) != 3)) {
    throw ShapeError("PNM encoding needs an (H, W, 1) or (H, W, 3) image, got " + shape_string(image.shape()));
  }
  const std::string header = std::string(image.dim(2) == 1 ? "P5" : "P6") + "\n" + std::to_string(image.dim(1)) +
                             " " + std::to_string(image.dim(0)) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.size());
  for (float v : image.data()) out.push_back(quantize(v));
  return out;
}

Tensor read_pnm(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_pnm(bytes);
  } catch (const DataError& e) {
    throw DataError(e.kind(), path.string() + ": " + e.what());
  }
}

void write_pnm(const fs::path& path, const Tensor& image) {
  const auto bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(DataErrorKind::io_failure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(DataErrorKind::io_failure, "short write to " + path.string());
}

Tensor resize_area(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) throw ShapeError("resize expects an (H, W, C) image, got " + shape_string(image.shape()));
  if (height == 0 || width == 0) throw ValidationError("resize target must be positive");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (h == height && w == width) return image;

  // Source-pixel coverage of each output cell along one axis.
  struct Span {
    std::size_t index;
    double weight;
  };
  auto coverage = [](std::size_t src, std::size_t dst) {
    std::vector<std::vector<Span>> table(dst);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t o = 0; o < dst; ++o) {
      const double lo = o * scale, hi = (o + 1) * scale;
      for (auto s = static_cast<std::size_t>(std::floor(lo)); s < src && static_cast<double>(s) < hi; ++s) {
        const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
        if (overlap > 0.0) table[o].push_back({s, overlap / scale});
      }
    }
    return table;
  };
  const auto rows = coverage(h, height);
  const auto cols = coverage(w, width);

  Tensor out({height, width, c}, 0.0f);
  for (std::size_t oy = 0; oy < height; ++oy) {
    for (std::size_t ox = 0; ox < width; ++ox) {
      for (std::size_t k = 0; k < c; ++k) {
        double acc = 0.0;
        for (const Span& ry : rows[oy]) {
          for (const Span& rx : cols[ox]) acc += ry.weight * rx.weight * image[(ry.index * w + rx.index) * c + k];
        }
        out[(oy * width + ox) * c + k] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
  return out;
}

Dataset load_dataset(const fs::path& root, std::size_t height, std::size_t width) {
  if (!fs::is_directory(root)) throw DataError(DataErrorKind::io_failure, root.string() + " is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  if (class_dirs.empty()) throw DataError(DataErrorKind::no_classes, "no class directories under " + root.string());
  std::sort(class_dirs.begin(), class_dirs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

  Dataset ds;
  ds.provenance = Provenance::directory;
  std::vector<float> pixels;
  std::size_t channels = 0;
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[label])) {
      if (entry.is_regular_file() && is_pnm(entry.path())) files.push_back(entry.path());
    }
    if (files.empty()) {
      throw DataError(DataErrorKind::empty_class_directory,
                      "class directory " + class_dirs[label].string() + " contains no .pgm/.ppm images");
    }
    std::sort(files.begin(), files.end());
    ds.class_names.push_back(class_dirs[label].filename().string());
    for (const auto& file : files) {
      Tensor image = read_pnm(file);
      if (channels == 0) channels = image.dim(2);
      image = resize_area(convert_channels(image, channels), height, width);
      pixels.insert(pixels.end(), image.data().begin(), image.data().end());
      ds.labels.push_back(static_cast<int>(label));
    }
  }
  ds.images = Tensor({ds.labels.size(), height, width, channels}, std::move(pixels));
  return ds;
}

std::string dataset_manifest(const Dataset& dataset) {
  nlohmann::ordered_json j;
  j["provenance"] = provenance_name(dataset.provenance);
  j["samples"] = dataset.size();
  j["image_shape"] = {dataset.height(), dataset.width(), dataset.channels()};
  j["class_names"] = dataset.class_names;
  j["class_counts"] = dataset.class_counts();
  return j.dump(2) + "\n";
}

void write_dataset(const Dataset& dataset, const fs::path& root) {
  dataset.validate();
  fs::create_directories(root);
  const char* ext = dataset.channels() == 1 ? ".pgm" : ".ppm";
  std::vector<std::size_t> next(dataset.class_count(), 0);
  for (const auto& name : dataset.class_names) fs::create_directories(root / name);
  const std::size_t digits = std::max<std::size_t>(5, std::to_string(dataset.size()).size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto label = static_cast<std::size_t>(dataset.labels[i]);
    std::string stem = std::to_string(next[label]++);
    stem.insert(0, digits - stem.size(), '0');
    const auto img = dataset.image(i);
    Tensor image({dataset.height(), dataset.width(), dataset.channels()}, std::vector<float>(img.begin(), img.end()));
    write_pnm(root / dataset.class_names[label] / (stem + ext), image);
  }
  std::ofstream manifest(root / "manifest.json");
  manifest << dataset_manifest(dataset);
  if (!manifest) throw DataError(DataErrorKind::io_failure, "cannot write manifest in " + root.string());
}

}  // namespace leaffed
