#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <string>

#include "doctest.h"
#include "leaffed/augment.hpp"
#include "leaffed/image_io.hpp"
#include "leaffed/split.hpp"
#include "leaffed/synthetic.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace leaffed;
using leaffed::testing::bitwise_equal;
using leaffed::testing::augment_inverse_error;
using leaffed::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& header, std::initializer_list<int> pixels) {
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (int p : pixels) out.push_back(static_cast<std::uint8_t>(p));
  return out;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

DataErrorKind decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_pnm(bytes);
  } catch (const DataError& e) {
    return e.kind();
  }
  FAIL("decode unexpectedly succeeded");
  return DataErrorKind::io_failure;
}

// Exact area average: replicate each source pixel dst times along each axis,
// then take block means of src x src replicas.
Tensor resize_oracle(const Tensor& img, std::size_t th, std::size_t tw) {
  const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
  Tensor out({th, tw, c}, 0.0f);
  for (std::size_t oy = 0; oy < th; ++oy) {
    for (std::size_t ox = 0; ox < tw; ++ox) {
      for (std::size_t k = 0; k < c; ++k) {
        double acc = 0.0;
        for (std::size_t sy = oy * h; sy < (oy + 1) * h; ++sy) {
          for (std::size_t sx = ox * w; sx < (ox + 1) * w; ++sx) acc += img[((sy / th) * w + sx / tw) * c + k];
        }
        out[(oy * tw + ox) * c + k] = static_cast<float>(acc / static_cast<double>(h * w));
      }
    }
  }
  return out;
}

std::multiset<std::size_t> as_multiset(const std::vector<std::vector<std::size_t>>& parts) {
  std::multiset<std::size_t> all;
  for (const auto& p : parts) all.insert(p.begin(), p.end());
  return all;
}

Tensor image_of(const Dataset& ds, std::size_t i) {
  const auto px = ds.image(i);
  return Tensor({ds.height(), ds.width(), ds.channels()}, std::vector<float>(px.begin(), px.end()));
}

}  // namespace

TEST_CASE("decode P5 maps bytes to value/255") {
  const Tensor img = decode_pnm(bytes_of("P5 2 2 255\n", {0, 51, 204, 255}));
  REQUIRE(img.shape() == Shape{2, 2, 1});
  CHECK(img[0] == 0.0f);
  CHECK(img[1] == 51.0f / 255.0f);
  CHECK(img[2] == 204.0f / 255.0f);
  CHECK(img[3] == 1.0f);
}

TEST_CASE("decode P6 with header comments and a smaller maxval") {
  const Tensor img = decode_pnm(bytes_of("P6\n# made by hand\n1 2\n# max\n15\n", {15, 0, 5, 3, 6, 9}));
  REQUIRE(img.shape() == Shape{2, 1, 3});
  CHECK(img[0] == 1.0f);
  CHECK(img[2] == 5.0f / 15.0f);
  CHECK(img[5] == 9.0f / 15.0f);
}

TEST_CASE("decode errors are distinct") {
  CHECK(decode_error(bytes_of("P3 2 2 255\n", {0, 0, 0, 0})) == DataErrorKind::unsupported_magic);
  CHECK(decode_error(bytes_of("GIF89a", {})) == DataErrorKind::unsupported_magic);
  CHECK(decode_error(bytes_of("P5 2 x 255\n", {0, 0, 0, 0})) == DataErrorKind::malformed_header);
  CHECK(decode_error(bytes_of("P5 2 2 65535\n", {0, 0, 0, 0})) == DataErrorKind::malformed_header);
  CHECK(decode_error(bytes_of("P5 2 2 255", {})) == DataErrorKind::malformed_header);
  CHECK(decode_error(bytes_of("P5 2 2 255\n", {1, 2, 3})) == DataErrorKind::truncated_pixels);
}

TEST_CASE("encode then decode is lossless for 8-bit values") {
  Rng rng(3);
  for (std::size_t ch : {1u, 3u}) {
    Tensor img({5, 7, ch}, 0.0f);
    for (auto& v : img.data()) v = static_cast<float>(rng.below(256)) / 255.0f;
    CHECK(bitwise_equal(decode_pnm(encode_pnm(img)), img));
  }
}

TEST_CASE("area resize") {
  SUBCASE("2x2 of {0, 0, 255, 255} to 1x1 is 0.5") {
    const Tensor img = decode_pnm(bytes_of("P5 2 2 255\n", {0, 0, 255, 255}));
    const Tensor out = resize_area(img, 1, 1);
    CHECK(out.shape() == Shape{1, 1, 1});
    CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-7));
  }
  SUBCASE("same size is returned unchanged") {
    Rng rng(1);
    const Tensor img = leaffed::testing::random_tensor<float>({6, 5, 3}, rng, 0.0, 1.0);
    CHECK(bitwise_equal(resize_area(img, 6, 5), img));
  }
  SUBCASE("fractional ratios match the replication oracle") {
    Rng rng(2);
    const std::vector<std::array<std::size_t, 4>> cases{{7, 5, 3, 2}, {4, 4, 6, 3}, {9, 13, 4, 5}, {3, 3, 7, 7}};
    for (const auto& [h, w, th, tw] : cases) {
      const Tensor img = leaffed::testing::random_tensor<float>({h, w, 3}, rng, 0.0, 1.0);
      const Tensor got = resize_area(img, th, tw);
      const Tensor want = resize_oracle(img, th, tw);
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("load_dataset assigns labels by sorted directory name") {
  TempDir dir("load");
  fs::create_directories(dir.path() / "banana");
  fs::create_directories(dir.path() / "apple");
  write_bytes(dir.path() / "banana" / "b1.pgm", bytes_of("P5 2 2 255\n", {255, 255, 255, 255}));
  write_bytes(dir.path() / "apple" / "a1.pgm", bytes_of("P5 2 2 255\n", {0, 0, 255, 255}));
  write_bytes(dir.path() / "apple" / "a2.pgm", bytes_of("P5 4 4 255\n", {0, 0, 0, 0, 0, 0, 0, 0, 255, 255, 255, 255,
                                                                          255, 255, 255, 255}));
  write_bytes(dir.path() / "apple" / "notes.txt", bytes_of("ignored", {}));

  const Dataset ds = load_dataset(dir.path(), 2, 2);
  CHECK(ds.provenance == Provenance::directory);
  REQUIRE(ds.class_names == std::vector<std::string>{"apple", "banana"});
  CHECK(ds.labels == std::vector<int>{0, 0, 1});
  CHECK(ds.images.shape() == Shape{3, 2, 2, 1});
  // The 4x4 image averages down to the 2x2 one.
  for (std::size_t i = 0; i < 4; ++i) CHECK(ds.image(1)[i] == ds.image(0)[i]);
  CHECK(ds.image(2)[3] == 1.0f);

  const Dataset small = load_dataset(dir.path(), 1, 1);
  CHECK(small.image(0)[0] == doctest::Approx(0.5));
}

TEST_CASE("load_dataset error cases") {
  TempDir dir("load_err");
  auto kind_of = [&](std::size_t h) {
    try {
      load_dataset(dir.path(), h, h);
    } catch (const DataError& e) {
      return e.kind();
    }
    FAIL("load unexpectedly succeeded");
    return DataErrorKind::io_failure;
  };
  CHECK(kind_of(2) == DataErrorKind::no_classes);
  fs::create_directories(dir.path() / "empty_class");
  CHECK(kind_of(2) == DataErrorKind::empty_class_directory);
  write_bytes(dir.path() / "empty_class" / "x.pgm", bytes_of("P2 1 1 255\n", {1}));
  CHECK(kind_of(2) == DataErrorKind::unsupported_magic);
}

TEST_CASE("synthetic generator contract") {
  SyntheticSpec spec;
  const Dataset ds = generate_synthetic_dataset(spec);
  CHECK(ds.size() == 800);
  CHECK(ds.class_counts() == std::vector<std::size_t>(8, 100));
  CHECK(ds.images.shape() == Shape{800, 32, 32, 1});
  CHECK(ds.class_names.front() == "class_00");
  CHECK(ds.provenance == Provenance::synthetic);
  CHECK_NOTHROW(ds.validate());

  const Dataset again = generate_synthetic_dataset(spec);
  CHECK(bitwise_equal(ds.images, again.images));
  CHECK(ds.labels == again.labels);

  spec.seed = 7;
  CHECK_FALSE(bitwise_equal(generate_synthetic_dataset(spec).images, ds.images));

  CHECK_THROWS_AS(generate_synthetic_dataset({.classes = 1}), ValidationError);
  CHECK_THROWS_AS(generate_synthetic_dataset({.per_class = 0}), ValidationError);
}

TEST_CASE("synthetic classes are linearly separable in pixel space") {
  const Dataset ds = generate_synthetic_dataset({});
  const std::size_t n = ds.size(), d = ds.sample_size(), classes = ds.class_count();
  // Test-local softmax regression with full-batch gradient descent.
  std::vector<double> w(classes * (d + 1), 0.0);
  auto scores = [&](std::size_t i, std::vector<double>& s) {
    const auto x = ds.image(i);
    for (std::size_t c = 0; c < classes; ++c) {
      const double* wc = &w[c * (d + 1)];
      double acc = wc[d];
      for (std::size_t j = 0; j < d; ++j) acc += wc[j] * x[j];
      s[c] = acc;
    }
  };
  std::vector<double> s(classes), grad(w.size());
  for (int epoch = 0; epoch < 40; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      scores(i, s);
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (auto& v : s) z += (v = std::exp(v - mx));
      const auto x = ds.image(i);
      for (std::size_t c = 0; c < classes; ++c) {
        const double r = s[c] / z - (ds.labels[i] == static_cast<int>(c) ? 1.0 : 0.0);
        double* gc = &grad[c * (d + 1)];
        for (std::size_t j = 0; j < d; ++j) gc[j] += r * x[j];
        gc[d] += r;
      }
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= 0.5 * grad[k] / static_cast<double>(n);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    scores(i, s);
    correct += static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin()) == ds.labels[i];
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(n) >= 0.9);
}

TEST_CASE("written synthetic datasets reload bit-for-bit") {
  TempDir dir("roundtrip");
  for (std::size_t ch : {1u, 3u}) {
    const Dataset ds = generate_synthetic_dataset({.classes = 3, .per_class = 4, .height = 12, .width = 10,
                                                   .channels = ch});
    const fs::path root = dir.path() / std::to_string(ch);
    write_dataset(ds, root);
    CHECK(fs::exists(root / "manifest.json"));
    CHECK(fs::exists(root / "class_00" / (ch == 1 ? "00000.pgm" : "00000.ppm")));
    const Dataset back = load_dataset(root, 12, 10);
    CHECK(bitwise_equal(back.images, ds.images));
    CHECK(back.labels == ds.labels);
    CHECK(back.class_names == ds.class_names);
  }
}

TEST_CASE("largest remainder rounding") {
  const std::vector<double> thirds{1, 1, 1};
  CHECK(largest_remainder(10, thirds) == std::vector<std::size_t>{4, 3, 3});
  const std::vector<double> ratio{0.7, 0.1, 0.2};
  CHECK(largest_remainder(1000, ratio) == std::vector<std::size_t>{700, 100, 200});
  CHECK(largest_remainder(100, ratio) == std::vector<std::size_t>{70, 10, 20});
  CHECK(largest_remainder(13, ratio) == std::vector<std::size_t>{9, 1, 3});
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> wts(1 + rng.below(6));
    for (auto& v : wts) v = rng.uniform(0.0, 3.0);
    const std::size_t total = rng.below(500);
    const auto counts = largest_remainder(total, wts);
    std::size_t sum = 0;
    double wsum = 0.0;
    for (double v : wts) wsum += v;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      sum += counts[i];
      CHECK(std::abs(static_cast<double>(counts[i]) - total * wts[i] / wsum) < 1.0);
    }
    CHECK(sum == total);
  }
}

TEST_CASE("split_dataset 70:10:20") {
  SUBCASE("1000 samples give 700/100/200") {
    const Dataset ds = generate_synthetic_dataset({.classes = 10, .per_class = 100, .height = 4, .width = 4});
    for (bool stratified : {true, false}) {
      const auto s = split_dataset(ds, {.stratified = stratified});
      CHECK(s.train.size() == 700);
      CHECK(s.val.size() == 100);
      CHECK(s.test.size() == 200);
    }
  }
  SUBCASE("stratified 8 x 100 keeps 70/10/20 per class") {
    const Dataset ds = generate_synthetic_dataset({.height = 4, .width = 4});
    const auto s = split_dataset(ds, {});
    CHECK(s.train.class_counts() == std::vector<std::size_t>(8, 70));
    CHECK(s.val.class_counts() == std::vector<std::size_t>(8, 10));
    CHECK(s.test.class_counts() == std::vector<std::size_t>(8, 20));
  }
  SUBCASE("indices partition the dataset and are deterministic") {
    std::vector<int> labels;
    for (int i = 0; i < 157; ++i) labels.push_back(i % 3);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto a = split_indices(labels, 3, {.seed = seed});
      const auto b = split_indices(labels, 3, {.seed = seed});
      CHECK(a.train == b.train);
      CHECK(a.test == b.test);
      const auto all = as_multiset({a.train, a.val, a.test});
      CHECK(all == as_multiset({iota_indices(labels.size())}));
    }
  }
  SUBCASE("small classes are named in the error") {
    std::vector<int> labels(30, 0);
    labels.resize(39, 1);
    const std::vector<std::string> names{"healthy", "rust"};
    try {
      split_indices(labels, 2, {}, names);
      FAIL("expected error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("'rust'") != std::string::npos);
    }
    CHECK_NOTHROW(split_indices(labels, 2, {.stratified = false}));
  }
  SUBCASE("fractions must be positive and sum to one") {
    std::vector<int> labels(100, 0);
    CHECK_THROWS_AS(split_indices(labels, 1, {.train = 0.8, .val = 0.1, .test = 0.2}), ValidationError);
    CHECK_THROWS_AS(split_indices(labels, 1, {.train = 1.0, .val = 0.0, .test = 0.0}), ValidationError);
  }
}

TEST_CASE("shard_to_clients") {
  std::vector<int> labels;
  for (int i = 0; i < 1000; ++i) labels.push_back(i % 10);

  SUBCASE("iid gives equal shards") {
    const auto plan = shard_to_clients(labels, 10, 5, {});
    for (const auto& s : plan.shards) CHECK(s.size() == 200);
    CHECK(as_multiset(plan.shards) == as_multiset({iota_indices(1000)}));
    const auto uneven = shard_to_clients(std::span(labels).first(13), 10, 5, {});
    for (const auto& s : uneven.shards) CHECK((s.size() == 2 || s.size() == 3));
  }
  SUBCASE("every strategy yields a nonempty partition") {
    for (ShardStrategy st : {ShardStrategy::iid, ShardStrategy::dirichlet, ShardStrategy::label_skew}) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto plan = shard_to_clients(labels, 10, 7, {.strategy = st, .alpha = 0.3, .seed = seed});
        CHECK(plan.clients() == 7);
        for (const auto& s : plan.shards) {
          CHECK_FALSE(s.empty());
          CHECK(std::is_sorted(s.begin(), s.end()));
        }
        CHECK(as_multiset(plan.shards) == as_multiset({iota_indices(1000)}));
        CHECK(shard_to_clients(labels, 10, 7, {.strategy = st, .alpha = 0.3, .seed = seed}).shards == plan.shards);
      }
    }
  }
  SUBCASE("dirichlet with huge alpha is near uniform") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto plan = shard_to_clients(labels, 10, 5, {.strategy = ShardStrategy::dirichlet, .alpha = 1e6,
                                                         .seed = seed});
      for (const auto& s : plan.shards) {
        std::vector<double> per_class(10, 0.0);
        for (auto i : s) per_class[labels[i]] += 1.0;
        for (double count : per_class) CHECK(std::abs(count / 100.0 - 0.2) <= 0.05);
      }
    }
  }
  SUBCASE("dirichlet with small alpha is skewed") {
    const auto plan = shard_to_clients(labels, 10, 5, {.strategy = ShardStrategy::dirichlet, .alpha = 0.1});
    double worst = 0.0;
    for (const auto& s : plan.shards) {
      std::vector<double> per_class(10, 0.0);
      for (auto i : s) per_class[labels[i]] += 1.0;
      for (double count : per_class) worst = std::max(worst, std::abs(count / 100.0 - 0.2));
    }
    CHECK(worst > 0.2);
  }
  SUBCASE("label skew gives each client exactly c classes") {
    for (std::size_t c : {1u, 2u, 3u}) {
      const auto plan = shard_to_clients(labels, 10, 10, {.strategy = ShardStrategy::label_skew,
                                                          .classes_per_client = c});
      for (const auto& s : plan.shards) {
        std::set<int> seen;
        for (auto i : s) seen.insert(labels[i]);
        CHECK(seen.size() == c);
      }
    }
  }
  SUBCASE("infeasible parameters are rejected") {
    CHECK_THROWS_AS(shard_to_clients(std::span(labels).first(3), 10, 5, {}), ValidationError);
    CHECK_THROWS_AS(shard_to_clients(labels, 10, 0, {}), ValidationError);
    CHECK_THROWS_AS(shard_to_clients(labels, 10, 3, {.strategy = ShardStrategy::label_skew,
                                                     .classes_per_client = 2}),
                    ValidationError);
    CHECK_THROWS_AS(shard_to_clients(labels, 10, 3, {.strategy = ShardStrategy::dirichlet, .alpha = 0.0}),
                    ValidationError);
  }
}

TEST_CASE("balance_with_augmentation") {
  const Dataset base = generate_synthetic_dataset({.classes = 2, .per_class = 80, .height = 20, .width = 20});
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (base.labels[i] == 1 || i < 50) keep.push_back(i);
  }
  const Dataset ds = base.subset(keep);
  REQUIRE(ds.class_counts() == std::vector<std::size_t>{50, 80});

  SUBCASE("classes reach the target exactly") {
    const Dataset out = balance_with_augmentation(ds, {.target_per_class = 80});
    CHECK(out.class_counts() == std::vector<std::size_t>{80, 80});
    const Dataset more = balance_with_augmentation(ds, {.target_per_class = 97});
    CHECK(more.class_counts() == std::vector<std::size_t>{97, 97});
  }
  SUBCASE("target equal to current counts leaves the dataset unchanged") {
    const Dataset balanced = base;
    const Dataset out = balance_with_augmentation(balanced, {.target_per_class = 80});
    CHECK(bitwise_equal(out.images, balanced.images));
    CHECK(out.labels == balanced.labels);
    CHECK(out.augmentation.empty());
  }
  SUBCASE("originals are retained and appended samples match their transform") {
    const Dataset out = balance_with_augmentation(ds, {.target_per_class = 120, .seed = 9});
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK_FALSE(out.augmentation[i].has_value());
      CHECK(std::equal(ds.image(i).begin(), ds.image(i).end(), out.image(i).begin()));
    }
    const std::size_t h = ds.height(), w = ds.width(), ch = ds.channels();
    std::map<Transform, int> used;
    for (std::size_t i = ds.size(); i < out.size(); ++i) {
      REQUIRE(out.augmentation[i].has_value());
      const AugmentRecord& r = *out.augmentation[i];
      CHECK(out.labels[i] == ds.labels[r.source]);
      used[r.transform] += 1;
      if (r.transform == Transform::translation) {
        CHECK(std::abs(r.shift_x) <= 2);
        CHECK(std::abs(r.shift_y) <= 2);
      } else if (r.transform == Transform::rotation) {
        CHECK(std::abs(r.rotation_degrees) <= 15.0);
      }
      const double worst = augment_inverse_error(ds.image(r.source), out.image(i), r, h, w, ch);
      CHECK(worst <= 2.0 / 255.0);
    }
    CHECK(used.size() == 3);
  }
  SUBCASE("flip and translation invert exactly") {
    const Dataset out = balance_with_augmentation(ds, {.target_per_class = 100, .seed = 4});
    for (std::size_t i = ds.size(); i < out.size(); ++i) {
      const AugmentRecord& r = *out.augmentation[i];
      const Tensor src = image_of(ds, r.source);
      if (r.transform == Transform::horizontal_flip) {
        CHECK(bitwise_equal(flip_horizontal(image_of(out, i)), src));
      } else if (r.transform == Transform::translation) {
        const Tensor back = translate(image_of(out, i), -r.shift_x, -r.shift_y);
        CHECK(bitwise_equal(translate(back, r.shift_x, r.shift_y), image_of(out, i)));
      }
    }
  }
  SUBCASE("deterministic per seed") {
    const Dataset a = balance_with_augmentation(ds, {.target_per_class = 90, .seed = 1});
    const Dataset b = balance_with_augmentation(ds, {.target_per_class = 90, .seed = 1});
    CHECK(bitwise_equal(a.images, b.images));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(balance_with_augmentation(ds, {.target_per_class = 79}), ValidationError);
    Dataset missing = ds;
    missing.class_names.push_back("empty");
    CHECK_THROWS_AS(balance_with_augmentation(missing, {}), ValidationError);
    CHECK_THROWS_AS(balance_with_augmentation(ds, {.transforms = {}}), ValidationError);
    CHECK_THROWS_AS(balance_with_augmentation(ds, {.max_rotation_degrees = 30.0}), ValidationError);
  }
}

TEST_CASE("rotation by zero degrees is the identity") {
  Rng rng(8);
  const Tensor img = leaffed::testing::random_tensor<float>({9, 6, 3}, rng, 0.0, 1.0);
  CHECK(bitwise_equal(rotate(img, 0.0), img));
}
