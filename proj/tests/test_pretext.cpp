#include "testing.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "oracles.hpp"
#include "sskd/data.hpp"
#include "sskd/errors.hpp"
#include "sskd/pretext.hpp"
#include "sskd/rng.hpp"
#include "sskd/synthetic.hpp"

using namespace sskd;
using namespace sskd::pretext;
using data::Image;

namespace {

Image random_image(std::uint64_t seed, int h, int w) {
  Rng rng(seed);
  Image img(h, w, 3);
  for (auto& v : img.pixels) v = static_cast<float>(rng.uniform());
  return img;
}

// Cell k (row-major in the 2x2 grid) of the output holds patch perm[k] of the input.
bool jigsaw_matches(const Image& in, const Image& out, const std::array<int, 4>& perm) {
  const int ph = in.height / 2, pw = in.width / 2;
  for (int k = 0; k < 4; ++k) {
    const int src = perm[k];
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x)
        for (int c = 0; c < 3; ++c) {
          const float want = in.at((src / 2) * ph + y, (src % 2) * pw + x, c);
          if (out.at((k / 2) * ph + y, (k % 2) * pw + x, c) != want) return false;
        }
  }
  return true;
}

}  // namespace

TEST_CASE("pretext names and task arities") {
  for (auto k : {PretextKind::Contrastive, PretextKind::Exemplar, PretextKind::Jigsaw, PretextKind::Rotation})
    CHECK(parse_pretext(to_string(k)) == k);
  CHECK_THROWS_AS(parse_pretext("colorize"), ConfigError);

  CHECK(PretextTask::make(PretextKind::Jigsaw, 128, 500).head_arity == 24);
  CHECK(PretextTask::make(PretextKind::Rotation, 128, 500).head_arity == 4);
  CHECK(PretextTask::make(PretextKind::Exemplar, 128, 500).head_arity == 500);
  const auto c = PretextTask::make(PretextKind::Contrastive, 96, 500);
  CHECK(c.head_arity == 96);
  CHECK(c.payload == TransferPayload::ProbabilityMatrix);
  CHECK(PretextTask::make(PretextKind::Rotation, 128, 500).payload == TransferPayload::Logits);

  PretextTask bad;
  bad.kind = PretextKind::Jigsaw;
  bad.head_arity = 23;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.kind = PretextKind::Rotation;
  bad.head_arity = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("permutation indices are a bijection") {
  std::set<std::array<int, 4>> seen;
  for (std::int64_t i = 0; i < 24; ++i) {
    const auto p = permutation_from_index(i);
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::array<int, 4>{0, 1, 2, 3});
    CHECK(permutation_index(p) == i);
    seen.insert(p);
  }
  CHECK(seen.size() == 24);
  CHECK(permutation_from_index(0) == std::array<int, 4>{0, 1, 2, 3});
  std::array<int, 4> p{0, 1, 2, 3};
  std::int64_t count = 0;
  do {
    CHECK(permutation_from_index(permutation_index(p)) == p);
    ++count;
  } while (std::next_permutation(p.begin(), p.end()));
  CHECK(count == 24);
  CHECK_THROWS(permutation_from_index(24));
  CHECK_THROWS(permutation_from_index(-1));
}

TEST_CASE("jigsaw reassembly") {
  const auto img = random_image(1, 8, 10);
  CHECK(jigsaw(img, 0).pixels == img.pixels);
  for (std::int64_t i = 0; i < 24; ++i) {
    const auto shuffled = jigsaw(img, i);
    CHECK(jigsaw_matches(img, shuffled, permutation_from_index(i)));
    CHECK(jigsaw_inverse(shuffled, i).pixels == img.pixels);
  }
  for (std::uint64_t seed = 2; seed < 20; ++seed) {
    const auto other = random_image(seed, 32, 32);
    const auto idx = static_cast<std::int64_t>(seed % 24);
    CHECK(jigsaw_inverse(jigsaw(other, idx), idx).pixels == other.pixels);
  }
  // odd sides are padded, never rejected
  const auto odd = random_image(30, 7, 9);
  for (std::int64_t i = 0; i < 24; ++i) {
    const auto out = jigsaw(odd, i);
    CHECK(out.same_shape(odd));
  }
  CHECK(jigsaw(odd, 0).pixels == odd.pixels);
}

TEST_CASE("rotation pretext inputs") {
  const auto img = random_image(3, 32, 32);
  std::map<std::int64_t, int> freq;
  Rng rng(11);
  ss::TransformPool pool;
  bool checked_identity = false;
  for (int i = 0; i < 10000; ++i) {
    std::int64_t label = -1;
    const auto out = make_pretext_input(img, i, PretextKind::Rotation, rng, pool, 16, label);
    ++freq[label];
    if (i < 64) {
      CHECK(out.pixels == ss::rotate_quarter_turns(img, static_cast<int>(label)).pixels);
      if (label == 0) {
        CHECK(out.pixels == img.pixels);
        checked_identity = true;
      }
    }
  }
  CHECK(checked_identity);
  REQUIRE(freq.size() == 4);
  for (auto [label, n] : freq) CHECK(std::fabs(n / 10000.0 - 0.25) <= 0.02);
}

TEST_CASE("jigsaw and exemplar pretext inputs") {
  const auto img = random_image(4, 32, 32);
  Rng rng(12);
  ss::TransformPool pool;
  std::set<std::int64_t> labels;
  for (int i = 0; i < 500; ++i) {
    std::int64_t label = -1;
    const auto out = make_pretext_input(img, i, PretextKind::Jigsaw, rng, pool, 16, label);
    CHECK((label >= 0 && label < 24));
    if (i < 30) CHECK(out.pixels == jigsaw(img, label).pixels);
    labels.insert(label);
  }
  CHECK(labels.size() == 24);

  for (std::int64_t idx : {0, 5, 1023, 1024, 4097}) {
    std::int64_t label = -1;
    make_pretext_input(img, idx, PretextKind::Exemplar, rng, pool, 1024, label);
    CHECK(label == idx % 1024);
  }
  std::int64_t label = 0;
  CHECK_THROWS_AS(make_pretext_input(img, 0, PretextKind::Exemplar, rng, pool, 1, label), ConfigError);
  CHECK_THROWS_AS(make_pretext_input(img, 0, PretextKind::Contrastive, rng, pool, 16, label), ConfigError);
}

TEST_CASE("pretext batches") {
  const auto spec = data::DatasetSpec::synthetic(8, 2);
  const auto ds = data::generate_synthetic(spec, data::Split::Train);
  std::vector<Image> imgs;
  std::vector<std::int64_t> idx;
  for (std::size_t i = 0; i < 8; ++i) {
    imgs.push_back(ds.image(i));
    idx.push_back(ds.index(i));
  }
  Rng a(1), b(1);
  const auto x = make_pretext_batch(imgs, idx, PretextKind::Rotation, spec, a);
  const auto y = make_pretext_batch(imgs, idx, PretextKind::Rotation, spec, b);
  CHECK(x.inputs.sizes() == torch::IntArrayRef({8, 3, 32, 32}));
  CHECK(x.labels.sizes() == torch::IntArrayRef({8}));
  CHECK(torch::equal(x.inputs, y.inputs));
  CHECK(torch::equal(x.labels, y.labels));
  CHECK_THROWS_AS(make_pretext_batch(imgs, idx, PretextKind::Contrastive, spec, a), ConfigError);
  std::vector<std::int64_t> short_idx(idx.begin(), idx.begin() + 3);
  CHECK_THROWS(make_pretext_batch(imgs, short_idx, PretextKind::Jigsaw, spec, a));
}

TEST_CASE("pretext distillation loss") {
  auto t = torch::tensor({0.5, -1.0, 2.0, 0.1, 1.0, 1.0, -0.5, 0.0}, torch::kFloat64).reshape({2, 4});
  auto s = torch::tensor({-0.2, 0.3, 0.9, 1.5, 0.0, 2.0, 0.4, -1.0}, torch::kFloat64).reshape({2, 4});
  CHECK(oracle::rel_err(pretext_distill_loss(t, s, 4.0).item<double>(), oracle::kd(oracle::to_mat(t), oracle::to_mat(s), 4.0L)) <
        1e-12);
  long double h = 0;
  for (const auto& row : oracle::to_mat(t))
    for (auto p : oracle::softmax(row, 4.0L)) h -= p * std::log(p);
  CHECK(pretext_distill_loss(t, t, 4.0).item<double>() == doctest::Approx(static_cast<double>(16 * h / 2)).epsilon(1e-12));
  CHECK_THROWS_AS(pretext_distill_loss(t, torch::zeros({2, 24}, torch::kFloat64), 4.0), DimensionError);
}
