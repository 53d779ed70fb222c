#include "testing.hpp"

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "sskd/errors.hpp"
#include "sskd/losses.hpp"
#include "suites.hpp"

using namespace sskd;
namespace L = sskd::losses;

namespace {

torch::Tensor d(std::initializer_list<double> v) { return torch::tensor(std::vector<double>(v), torch::kFloat64); }

torch::Tensor d2(std::vector<std::vector<double>> rows) {
  const auto r = static_cast<std::int64_t>(rows.size()), c = static_cast<std::int64_t>(rows[0].size());
  std::vector<double> flat;
  for (auto& row : rows) flat.insert(flat.end(), row.begin(), row.end());
  return torch::tensor(flat, torch::kFloat64).reshape({r, c});
}

double entropy_tau2(const torch::Tensor& logits, double tau) {
  const auto m = oracle::to_mat(logits);
  long double h = 0;
  for (const auto& row : m) {
    for (auto p : oracle::softmax(row, tau)) h -= p * std::log(p);
  }
  return static_cast<double>(tau * tau * h / m.size());
}

}  // namespace

TEST_CASE("temperature_softmax examples") {
  auto p = L::temperature_softmax(d({0, 0}), 1.0);
  CHECK(p[0].item<double>() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p[1].item<double>() == doctest::Approx(0.5).epsilon(1e-15));

  auto q = L::temperature_softmax(d2({{2, 1, 0}}), 4.0);
  const auto ref = oracle::softmax({2, 1, 0}, 4.0L);
  for (int i = 0; i < 3; ++i) CHECK(oracle::rel_err(q[0][i].item<double>(), ref[i]) < 1e-12);

  auto wide = L::temperature_softmax(d2({{7, -3, 0.5, 12}}), 1e6);
  for (int i = 0; i < 4; ++i) CHECK(std::fabs(wide[0][i].item<double>() - 0.25) < 1e-5);

  CHECK_THROWS_AS(L::temperature_softmax(d({1, 2}), 0.0), DomainError);
  CHECK_THROWS_AS(L::temperature_softmax(d({1, 2}), -1.0), DomainError);
  CHECK_THROWS_AS(L::temperature_softmax(d({1, std::numeric_limits<double>::quiet_NaN()}), 1.0), NumericError);
}

TEST_CASE("temperature_softmax rows sum to one across temperatures") {
  std::mt19937_64 gen(11);
  for (double tau = 1e-3; tau <= 1e6; tau *= 10) {
    auto x = oracle::random_matrix(gen, 6, 9, 50.0).to(torch::kFloat32);
    auto sums = L::temperature_softmax(x, tau).to(torch::kFloat64).sum(-1);
    CHECK((sums - 1).abs().max().item<double>() <= 1e-6);
    CHECK(L::temperature_softmax(x, tau).min().item<float>() >= 0.0f);
  }
}

TEST_CASE("kd_loss examples") {
  const double tau = 3.0;
  auto t = d2({{1.5, -0.5, 0.2}, {0.1, 0.3, 2.0}});
  CHECK(L::kd_loss(t, t, tau).item<double>() == doctest::Approx(entropy_tau2(t, tau)).epsilon(1e-12));

  // near one-hot teacher, uniform student: cross-entropy log 4
  auto sharp = d2({{200, 0, 0, 0}, {0, 0, 200, 0}});
  CHECK(L::kd_loss(sharp, torch::zeros({2, 4}, torch::kFloat64), 1.0).item<double>() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  auto tt = d2({{1, 0}}), ss = d2({{0, 1}});
  CHECK(oracle::rel_err(L::kd_loss(tt, ss, 4.0).item<double>(), oracle::kd(oracle::to_mat(tt), oracle::to_mat(ss), 4.0L)) <
        1e-12);

  CHECK_THROWS_AS(L::kd_loss(d2({{1, 2}}), d2({{1, 2, 3}}), 1.0), DimensionError);
  CHECK_THROWS_AS(L::kd_loss(tt, ss, 0.0), DomainError);
}

TEST_CASE("kd_loss is bounded below by the teacher entropy term") {
  std::mt19937_64 gen(5);
  for (int i = 0; i < 50; ++i) {
    auto t = oracle::random_matrix(gen, 3, 5), s = oracle::random_matrix(gen, 3, 5);
    CHECK(L::kd_loss(t, s, 2.0).item<double>() >= entropy_tau2(t, 2.0) - 1e-12);
  }
}

TEST_CASE("distillation losses are minimized where the student matches the teacher") {
  // direct minimization over the student argument from a random start
  std::mt19937_64 gen(17);
  auto t = oracle::random_matrix(gen, 2, 3);
  auto s = oracle::random_matrix(gen, 2, 3).requires_grad_(true);
  torch::optim::LBFGS opt({s}, torch::optim::LBFGSOptions(1.0).max_iter(500).tolerance_grad(1e-12).tolerance_change(1e-15).line_search_fn("strong_wolfe"));
  auto closure = [&] {
    opt.zero_grad();
    auto l = L::kd_loss(t, s, 2.0);
    l.backward();
    return l;
  };
  for (int i = 0; i < 5; ++i) opt.step(closure);
  auto pt = L::temperature_softmax(t, 2.0), ps = L::temperature_softmax(s.detach(), 2.0);
  CHECK((pt - ps).abs().max().item<double>() < 1e-6);

  auto bt = L::probability_matrix(oracle::random_matrix(gen, 3, 3), 0.5);
  auto a = oracle::random_matrix(gen, 3, 3).requires_grad_(true);
  torch::optim::LBFGS opt2({a}, torch::optim::LBFGSOptions(1.0).max_iter(500).tolerance_grad(1e-12).tolerance_change(1e-15).line_search_fn("strong_wolfe"));
  auto closure2 = [&] {
    opt2.zero_grad();
    auto l = L::ss_loss(bt, L::probability_matrix(a, 0.5), 0.5);
    l.backward();
    return l;
  };
  for (int i = 0; i < 5; ++i) opt2.step(closure2);
  CHECK((L::probability_matrix(a.detach(), 0.5) - bt).abs().max().item<double>() < 1e-6);
  CHECK(L::ss_loss(bt, bt, 0.5).item<double>() <= L::ss_loss(bt, L::probability_matrix(a.detach(), 0.5), 0.5).item<double>() + 1e-12);
}

TEST_CASE("similarity_matrix examples") {
  auto eye = torch::eye(3, torch::kFloat64);
  CHECK(torch::allclose(L::similarity_matrix(eye, eye), eye, 0, 1e-15));

  std::mt19937_64 gen(3);
  auto z = oracle::random_matrix(gen, 4, 3);
  auto anti = L::similarity_matrix(-z, z);
  for (int i = 0; i < 4; ++i) CHECK(anti[i][i].item<double>() == doctest::Approx(-1.0).epsilon(1e-14));

  auto zt = oracle::random_matrix(gen, 4, 3);
  CHECK(oracle::rel_err(oracle::to_mat(L::similarity_matrix(zt, z)), oracle::cosine(oracle::to_mat(zt), oracle::to_mat(z))) <
        1e-12);

  auto a = L::similarity_matrix(oracle::random_matrix(gen, 6, 5), oracle::random_matrix(gen, 6, 5));
  CHECK(a.abs().max().item<double>() <= 1.0 + 1e-6);

  auto zero_row = z.clone();
  zero_row[1].zero_();
  CHECK_THROWS_AS(L::similarity_matrix(zero_row, z), DegenerateInputError);
  CHECK_THROWS_AS(L::similarity_matrix(z, zero_row), DegenerateInputError);
}

TEST_CASE("similarity_matrix ignores positive row rescaling") {
  std::mt19937_64 gen(8);
  for (int i = 0; i < 20; ++i) {
    auto zt = oracle::random_matrix(gen, 4, 3), z = oracle::random_matrix(gen, 4, 3);
    auto scale_t = oracle::random_matrix(gen, 4, 1).abs() + 0.01;
    auto scale = oracle::random_matrix(gen, 4, 1).abs() * 100 + 0.01;
    CHECK(torch::allclose(L::similarity_matrix(zt * scale_t, z * scale), L::similarity_matrix(zt, z), 0, 1e-12));
  }
}

TEST_CASE("contrastive_loss examples") {
  for (int n : {2, 3, 7}) {
    auto a = torch::full({n, n}, 0.3, torch::kFloat64);
    CHECK(L::contrastive_loss(a, 0.5).item<double>() == doctest::Approx(n * std::log(n)).epsilon(1e-12));
  }
  CHECK(L::contrastive_loss(torch::eye(4, torch::kFloat64), 1e-3).item<double>() < 1e-100);

  auto a3 = d2({{0.9, -0.2, 0.4}, {0.1, 0.5, -0.7}, {0.3, 0.3, -0.1}});
  CHECK(oracle::rel_err(L::contrastive_loss(a3, 0.5).item<double>(), oracle::contrastive(oracle::to_mat(a3), 0.5L)) < 1e-12);

  CHECK(L::contrastive_loss(a3, 0.5).item<double>() > 0);
  CHECK_THROWS_AS(L::contrastive_loss(torch::zeros({2, 3}, torch::kFloat64), 0.5), DimensionError);
}

TEST_CASE("contrastive_loss decreases as the diagonal grows") {
  std::mt19937_64 gen(21);
  for (int i = 0; i < 30; ++i) {
    auto a = L::similarity_matrix(oracle::random_matrix(gen, 5, 3), oracle::random_matrix(gen, 5, 3));
    const int row = i % 5;
    auto b = a.clone();
    b[row][row] += 0.05;
    CHECK(L::contrastive_loss(b, 0.5).item<double>() < L::contrastive_loss(a, 0.5).item<double>());
  }
}

TEST_CASE("probability_matrix examples") {
  auto one_hot = L::probability_matrix(torch::eye(3, torch::kFloat64), 1e-3);
  CHECK(torch::allclose(one_hot, torch::eye(3, torch::kFloat64), 0, 1e-12));
  auto flat = L::probability_matrix(torch::zeros({4, 4}, torch::kFloat64), 0.5);
  CHECK(torch::allclose(flat, torch::full({4, 4}, 0.25, torch::kFloat64), 0, 1e-15));

  std::mt19937_64 gen(4);
  auto a = L::similarity_matrix(oracle::random_matrix(gen, 5, 3), oracle::random_matrix(gen, 5, 3));
  auto b = L::probability_matrix(a, 0.5);
  CHECK(oracle::rel_err(oracle::to_mat(b), oracle::softmax_rows(oracle::to_mat(a), 0.5L)) < 1e-12);
  CHECK((b.sum(-1) - 1).abs().max().item<double>() < 1e-6);
}

TEST_CASE("ss_loss examples") {
  std::mt19937_64 gen(6);
  auto bt = L::probability_matrix(oracle::random_matrix(gen, 3, 3), 0.5);
  long double h = 0;
  for (const auto& row : oracle::to_mat(bt))
    for (auto p : row) h -= p * std::log(p);
  CHECK(L::ss_loss(bt, bt, 0.5).item<double>() == doctest::Approx(static_cast<double>(0.25L * h / 3)).epsilon(1e-12));

  auto bs = L::probability_matrix(oracle::random_matrix(gen, 3, 3), 0.5);
  CHECK(L::ss_loss(bt, bs, 0.5, L::mask_tensor({false, false, false})).item<double>() == 0.0);
  CHECK(oracle::rel_err(L::ss_loss(bt, bs, 0.5, L::mask_tensor({true, true, true})).item<double>(),
                        oracle::ss(oracle::to_mat(bt), oracle::to_mat(bs), 0.5L)) < 1e-12);

  CHECK_THROWS_AS(L::ss_loss(bt, torch::full({2, 2}, 0.5, torch::kFloat64), 0.5), DimensionError);
  CHECK_THROWS_AS(L::ss_loss(bt, bs, 0.5, L::mask_tensor({true, false})), DimensionError);
}

TEST_CASE("ss_loss survives saturated student probabilities") {
  auto bt = torch::full({2, 2}, 0.5, torch::kFloat64);
  auto bs = d2({{1.0, 0.0}, {0.0, 1.0}});
  const double v = L::ss_loss(bt, bs, 0.5).item<double>();
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(0.25 * 0.5 * -std::log(1e-12)).epsilon(1e-9));
}

TEST_CASE("transformed_kd_loss examples") {
  auto t = d2({{0.3, 1.2, -0.4}, {2.0, 0.0, 0.5}});
  CHECK(L::transformed_kd_loss(t, t, 4.0).item<double>() == doctest::Approx(entropy_tau2(t, 4.0)).epsilon(1e-12));
  auto s = d2({{-1.0, 0.2, 0.9}, {0.4, 0.4, -2.0}});
  CHECK(L::transformed_kd_loss(t, s, 4.0, L::mask_tensor({false, false})).item<double>() == 0.0);
  CHECK(oracle::rel_err(L::transformed_kd_loss(t, s, 4.0).item<double>(),
                        oracle::kd(oracle::to_mat(t), oracle::to_mat(s), 4.0L)) < 1e-12);
  CHECK(oracle::rel_err(L::transformed_kd_loss(t, s, 4.0, L::mask_tensor({false, true})).item<double>(),
                        oracle::kd(oracle::to_mat(t), oracle::to_mat(s), 4.0L, {false, true})) < 1e-12);
  CHECK(L::transformed_kd_loss(t, s, 4.0, L::mask_tensor({true, true})).item<double>() ==
        L::kd_loss(t, s, 4.0).item<double>());
}

TEST_CASE("total_student_loss") {
  const L::LossWeights paper{};
  CHECK(L::total_student_loss(1, 1, 1, 1, paper) == doctest::Approx(13.7).epsilon(1e-15));
  auto one = torch::ones({}, torch::kFloat64);
  CHECK(L::total_student_loss({one, one, one, one}, paper).item<double>() == doctest::Approx(13.7).epsilon(1e-15));

  CHECK_THROWS_AS((L::LossWeights{0, 0, 0, 0}.validate()), ConfigError);
  CHECK_THROWS_AS((L::LossWeights{-1, 1, 0, 0}.validate()), ConfigError);
  CHECK(L::total_student_loss(0.4, 2.5, 7.0, 9.0, L::LossWeights{0, 1, 0, 0}) == 2.5);
  CHECK(L::total_student_loss(0.4, 2.5, 7.0, 9.0, L::LossWeights{0, 0, 0, 1}) == 9.0);

  try {
    L::total_student_loss(1, 1, std::nan(""), 1, paper);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("ss") != std::string::npos);
  }
  auto nan = torch::full({}, std::nan(""), torch::kFloat64);
  CHECK_THROWS_AS(L::total_student_loss({one, nan, one, one}, paper), NumericError);
  CHECK(L::total_student_loss({one, one, torch::Tensor(), torch::Tensor()}, paper).item<double>() ==
        doctest::Approx(1.0));
}

TEST_CASE("temperatures must be positive") {
  CHECK_NOTHROW(L::Temperatures{}.validate());
  CHECK_THROWS_AS((L::Temperatures{0.0, 0.5}.validate()), ConfigError);
  CHECK_THROWS_AS((L::Temperatures{4.0, -1.0}.validate()), ConfigError);
}

TEST_CASE("random oracle agreement") {
  const auto w = suites::loss_oracles(20, 99);
  INFO("worst at " << w.where);
  CHECK(w.error < 1e-6);
}

TEST_CASE("random gradient checks") {
  const auto w = suites::gradient_checks(8, 123);
  INFO("worst at " << w.where);
  CHECK(w.error < 1e-4);
}
