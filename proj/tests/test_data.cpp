#include "testing.hpp"

#include <fstream>
#include <map>
#include <set>

#include "sskd/data.hpp"
#include "sskd/errors.hpp"
#include "sskd/rng.hpp"
#include "sskd/synthetic.hpp"

using namespace sskd;
using namespace sskd::data;
using testing_util::TempDir;

namespace {

// Pad with zeros to (H+8, W+8), cut the window at (dy, dx), mirror it, normalize.
Image reference_augment(const Image& img, const DatasetSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  const auto dy = static_cast<int>(rng.uniform_int(0, 8));
  const auto dx = static_cast<int>(rng.uniform_int(0, 8));
  const bool flip = rng.uniform() < 0.5;
  const int h = img.height, w = img.width, ch = img.channels;
  std::vector<float> padded(static_cast<std::size_t>(h + 8) * (w + 8) * ch, 0.0f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) padded[((y + 4) * (w + 8) + x + 4) * ch + c] = img.at(y, x, c);
  Image crop(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) crop.at(y, x, c) = padded[((y + dy) * (w + 8) + x + dx) * ch + c];
  Image out(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        const float v = flip ? crop.at(y, w - 1 - x, c) : crop.at(y, x, c);
        out.at(y, x, c) = static_cast<float>((v - spec.channel_mean[c]) / spec.channel_std[c]);
      }
  return out;
}

bool draws_flip(std::uint64_t seed) {
  Rng rng(seed);
  rng.uniform_int(0, 8);
  rng.uniform_int(0, 8);
  return rng.uniform() < 0.5;
}

// Labels only; 1x1 grayscale pixels keep large sets cheap.
Dataset label_set(std::int64_t n, int classes) {
  DatasetSpec spec = DatasetSpec::synthetic(n, 0);
  spec.num_classes = classes;
  spec.channels = 1;
  spec.image_size = 1;
  spec.channel_mean = {0.5};
  spec.channel_std = {0.25};
  std::vector<std::uint8_t> px(n);
  std::vector<std::int64_t> labels(n), idx(n);
  for (std::int64_t i = 0; i < n; ++i) {
    labels[i] = i % classes;
    idx[i] = i;
    px[i] = static_cast<std::uint8_t>(i % 251);
  }
  return Dataset(spec, 1, 1, 1, px, labels, idx);
}

std::map<std::int64_t, std::int64_t> tally(const Dataset& d) {
  std::map<std::int64_t, std::int64_t> t;
  for (std::size_t i = 0; i < d.size(); ++i) ++t[d.label(i)];
  return t;
}

}  // namespace

TEST_CASE("dataset spec invariants") {
  CHECK_NOTHROW(DatasetSpec::cifar100("x").validate());
  auto s = DatasetSpec::synthetic(10, 10);
  s.channel_std = {0.2, 0.0, 0.2};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.channel_std = {0.2, 0.2};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK(DatasetSpec::cifar100("x").num_classes == 100);
  CHECK(DatasetSpec::cifar10("x").num_classes == 10);
}

TEST_CASE("load errors name the path") {
  auto spec = DatasetSpec::cifar100("");
  CHECK_THROWS_AS(load_dataset(spec, Split::Train), LoadError);
  spec.root = "/definitely/not/here";
  try {
    load_dataset(spec, Split::Train);
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("/definitely/not/here") != std::string::npos);
  }

  TempDir dir("load");
  std::ofstream(dir / "train.bin", std::ios::binary) << "short";
  spec.root = dir.path();
  try {
    load_dataset(spec, Split::Train);
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("train.bin") != std::string::npos);
  }
}

TEST_CASE("cifar10 binary round trip") {
  const auto synth = generate_synthetic(DatasetSpec::synthetic(50, 20), Split::Train);
  const auto test = generate_synthetic(DatasetSpec::synthetic(50, 20), Split::Test);
  TempDir dir("cifar10");
  for (int b = 1; b <= 5; ++b) {
    std::vector<std::size_t> pos;
    for (std::size_t i = (b - 1) * 10; i < static_cast<std::size_t>(b) * 10; ++i) pos.push_back(i);
    write_cifar10_binary(synth.subset(pos), dir / ("data_batch_" + std::to_string(b) + ".bin"));
  }
  write_cifar10_binary(test, dir / "test_batch.bin");

  auto spec = DatasetSpec::cifar10(dir.path());
  spec.train_size = 50;
  spec.test_size = 20;
  const auto loaded = load_dataset(spec, Split::Train);
  REQUIRE(loaded.size() == 50);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded.label(i) == synth.label(i));
    CHECK(loaded.index(i) == static_cast<std::int64_t>(i));
    const auto a = loaded.raw_pixels(i), b = synth.raw_pixels(i);
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  CHECK(load_dataset(spec, Split::Test).size() == 20);
  spec.test_size = 21;
  CHECK_THROWS_AS(load_dataset(spec, Split::Test), LoadError);
}

TEST_CASE("synthetic generator") {
  const auto small = generate_synthetic(DatasetSpec::synthetic(40, 10), Split::Train);
  const auto large = generate_synthetic(DatasetSpec::synthetic(120, 10), Split::Train);
  REQUIRE(small.size() == 40);
  for (std::size_t i = 0; i < small.size(); ++i) {
    CHECK(small.label(i) == static_cast<std::int64_t>(i % 10));
    const auto a = small.raw_pixels(i), b = large.raw_pixels(i);
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  const auto test = generate_synthetic(DatasetSpec::synthetic(40, 10), Split::Test);
  const auto a = test.raw_pixels(0), b = small.raw_pixels(0);
  CHECK_FALSE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
}

TEST_CASE("synthetic normalization constants match the generated data") {
  const auto train = generate_synthetic(DatasetSpec::synthetic(5000, 10), Split::Train);
  const auto [mean, std] = channel_statistics(train);
  for (int c = 0; c < 3; ++c) {
    CHECK(mean[c] == doctest::Approx(kSyntheticMean[c]).epsilon(0.01));
    CHECK(std[c] == doctest::Approx(kSyntheticStd[c]).epsilon(0.01));
  }
  const auto spec = DatasetSpec::synthetic(10, 10);
  CHECK(spec.channel_mean == kSyntheticMean);
  CHECK(spec.channel_std == kSyntheticStd);
}

TEST_CASE("standard augmentation matches an independent reference") {
  const auto spec = DatasetSpec::synthetic(20, 10);
  const auto ds = generate_synthetic(spec, Split::Train);
  int flips = 0, plain = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto img = ds.image(seed % ds.size());
    Rng rng(seed);
    const auto got = standard_augment(img, spec, rng);
    const auto want = reference_augment(img, spec, seed);
    CHECK(got.pixels == want.pixels);
    (draws_flip(seed) ? flips : plain)++;
  }
  CHECK(flips > 0);
  CHECK(plain > 0);
}

TEST_CASE("augmentation edge cases") {
  const auto spec = DatasetSpec::synthetic(20, 10);
  Image zero(32, 32, 3, 0.0f);
  const auto n = normalize(zero, spec);
  for (int y = 0; y < 32; ++y)
    for (int c = 0; c < 3; ++c)
      CHECK(n.at(y, 5, c) == static_cast<float>(-spec.channel_mean[c] / spec.channel_std[c]));

  const auto ds = generate_synthetic(spec, Split::Train);
  Rng a(77), b(77);
  CHECK(standard_augment(ds.image(3), spec, a).pixels == standard_augment(ds.image(3), spec, b).pixels);
  CHECK_THROWS_AS(normalize(Image(4, 4, 2), spec), DimensionError);
}

TEST_CASE("few-shot sampling") {
  const auto train = label_set(5000, 10);
  Rng r1(1);
  CHECK(make_few_shot(train, 1.0, r1).labels() == train.labels());

  Rng r2(2), r3(3);
  const auto a = make_few_shot(train, 0.25, r2), b = make_few_shot(train, 0.25, r3);
  for (auto [cls, count] : tally(a)) CHECK(count == 125);
  CHECK(tally(a) == tally(b));
  CHECK(a.indices() != b.indices());
  CHECK(std::is_sorted(a.indices().begin(), a.indices().end()));

  Rng r4(2);
  CHECK(make_few_shot(train, 0.25, r4).indices() == a.indices());

  Rng r5(5);
  for (auto [cls, count] : tally(make_few_shot(train, 1e-6, r5))) CHECK(count == 1);

  Rng r6(6);
  CHECK_THROWS_AS(make_few_shot(train, 0.0, r6), ConfigError);
  CHECK_THROWS_AS(make_few_shot(train, 1.5, r6), ConfigError);
}

TEST_CASE("few-shot strata stay balanced for every fraction") {
  // unequal class sizes: class c has 20 + 3c items
  std::vector<std::int64_t> labels;
  for (int c = 0; c < 6; ++c)
    for (int i = 0; i < 20 + 3 * c; ++i) labels.push_back(c);
  const auto base = label_set(static_cast<std::int64_t>(labels.size()), 6).with_labels(labels);
  const auto full = tally(base);
  for (int pct = 1; pct <= 100; ++pct) {
    Rng rng(pct);
    const double f = pct / 100.0;
    for (auto [cls, count] : tally(make_few_shot(base, f, rng))) {
      const auto want = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(f * full.at(cls))));
      CHECK(count == want);
    }
  }
}

TEST_CASE("label perturbation") {
  const auto train = label_set(50000, 100);
  Rng r0(0);
  const auto none = perturb_labels(train, 0.0, r0);
  CHECK(none.audit.empty());
  CHECK(none.data.labels() == train.labels());

  Rng r1(1);
  const auto half = perturb_labels(train, 0.5, r1);
  REQUIRE(half.audit.size() == 25000);
  std::int64_t changed = 0;
  std::set<std::int64_t> audited;
  for (auto [idx, label] : half.audit) {
    audited.insert(idx);
    CHECK(label != train.label(static_cast<std::size_t>(idx)));
    CHECK(half.data.label(static_cast<std::size_t>(idx)) == label);
  }
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (half.data.label(i) != train.label(i)) {
      ++changed;
      CHECK(audited.contains(static_cast<std::int64_t>(i)));
    }
  }
  CHECK(changed == 25000);
  CHECK(audited.size() == 25000);
  CHECK(std::is_sorted(half.audit.begin(), half.audit.end()));

  Rng r2(2);
  CHECK(perturb_labels(train, 0.1, r2).audit.size() == 5000);
  Rng r3(1);
  CHECK(perturb_labels(train, 0.5, r3).audit == half.audit);
  Rng r4(4);
  CHECK_THROWS_AS(perturb_labels(train, -0.1, r4), ConfigError);
  CHECK_THROWS_AS(perturb_labels(train, 1.1, r4), ConfigError);
}

TEST_CASE("relabelling covers the other classes uniformly") {
  const auto train = label_set(40000, 5);
  Rng rng(9);
  const auto all = perturb_labels(train, 1.0, rng);
  std::map<std::pair<std::int64_t, std::int64_t>, int> moves;
  for (auto [idx, label] : all.audit) ++moves[{train.label(static_cast<std::size_t>(idx)), label}];
  CHECK(moves.size() == 20);
  for (auto [pair, count] : moves) CHECK(std::abs(count - 2000) < 200);
}

TEST_CASE("corruption is reproducible and audited") {
  const auto train = label_set(1000, 10);
  CorruptionSpec spec{0.5, 0.3, 42};
  const auto a = apply_corruption(train, spec), b = apply_corruption(train, spec);
  CHECK(a.data.size() == 500);
  CHECK(a.audit.size() == 150);
  CHECK(a.audit == b.audit);
  CHECK(a.data.indices() == b.data.indices());
  spec.seed = 43;
  CHECK(apply_corruption(train, spec).audit != a.audit);

  TempDir dir("audit");
  write_corruption_audit(dir / "audit.txt", a.audit);
  std::ifstream in(dir / "audit.txt");
  std::int64_t idx = 0, label = 0;
  std::size_t lines = 0;
  while (in >> idx >> label) {
    CHECK(idx == a.audit[lines].first);
    CHECK(label == a.audit[lines].second);
    ++lines;
  }
  CHECK(lines == a.audit.size());
  CHECK_THROWS_AS((CorruptionSpec{0.0, 0.0, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((CorruptionSpec{1.0, 2.0, 1}.validate()), ConfigError);
}

TEST_CASE("image batch invariants") {
  ImageBatch b{torch::zeros({2, 3, 4, 4}), torch::tensor({0, 9}, torch::kInt64), {0, 1}};
  CHECK_NOTHROW(b.validate(10));
  CHECK_THROWS_AS(b.validate(9), DomainError);
  ImageBatch one{torch::zeros({1, 3, 4, 4}), torch::tensor({0}, torch::kInt64), {0}};
  CHECK_THROWS_AS(one.validate(10), DimensionError);
  auto bad = torch::zeros({2, 3, 4, 4});
  bad[1][0][0][0] = std::nanf("");
  ImageBatch nan{bad, torch::tensor({0, 1}, torch::kInt64), {0, 1}};
  CHECK_THROWS_AS(nan.validate(10), NumericError);
}
