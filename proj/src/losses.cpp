#include "sskd/losses.hpp"

#include <cmath>
#include <string>

#include "sskd/errors.hpp"

namespace sskd::losses {

namespace {

void require_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw DomainError("temperature must be > 0, got " + std::to_string(tau));
  }
}

std::string shape_str(const torch::Tensor& t) {
  std::string s = "(";
  for (std::int64_t d = 0; d < t.dim(); ++d) s += (d ? ", " : "") + std::to_string(t.size(d));
  return s + ")";
}

void require_same_2d(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.dim() != 2 || b.dim() != 2 || a.sizes() != b.sizes()) {
    throw DimensionError(std::string(what) + ": expected matching 2-d shapes, got " + shape_str(a) +
                         " and " + shape_str(b));
  }
}

void require_square(const torch::Tensor& a, const char* what) {
  if (a.dim() != 2 || a.size(0) != a.size(1)) {
    throw DimensionError(std::string(what) + ": expected a square matrix, got " + shape_str(a));
  }
}

// Per-row cross-entropy -sum_c p(c) log q(c), q floored at kLogFloor.
torch::Tensor row_cross_entropy(const torch::Tensor& p, const torch::Tensor& q) {
  return -(p * torch::log(torch::clamp_min(q, kLogFloor))).sum(-1);
}

torch::Tensor masked_mean(const torch::Tensor& per_row, const std::optional<torch::Tensor>& mask) {
  if (!mask) return per_row.mean();
  const torch::Tensor& m = *mask;
  if (m.dim() != 1 || m.size(0) != per_row.size(0)) {
    throw DimensionError("mask length " + shape_str(m) + " does not match " +
                         std::to_string(per_row.size(0)) + " rows");
  }
  const auto selected = m.to(torch::kBool);
  const std::int64_t count = selected.sum().item<std::int64_t>();
  if (count == 0) return (per_row * 0.0).sum();
  return per_row.masked_select(selected).sum() / static_cast<double>(count);
}

}  // namespace

void Temperatures::validate() const {
  if (!(tau_kd > 0.0)) throw ConfigError("loss.tau_kd must be > 0");
  if (!(tau_ss > 0.0)) throw ConfigError("loss.tau_ss must be > 0");
}

void LossWeights::validate() const {
  for (double w : {ce, kd, ss, t}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
  if (ce == 0.0 && kd == 0.0 && ss == 0.0 && t == 0.0) {
    throw ConfigError("loss weights must not all be zero");
  }
}

torch::Tensor temperature_softmax(const torch::Tensor& logits, double tau) {
  require_tau(tau);
  if (!torch::isfinite(logits).all().item<bool>()) throw NumericError("temperature_softmax: non-finite logits");
  auto scaled = logits / tau;
  auto shifted = scaled - std::get<0>(scaled.max(-1, /*keepdim=*/true)).detach();
  auto e = torch::exp(shifted);
  return e / e.sum(-1, /*keepdim=*/true);
}

torch::Tensor kd_loss(const torch::Tensor& teacher_logits, const torch::Tensor& student_logits,
                      double tau) {
  require_tau(tau);
  require_same_2d(teacher_logits, student_logits, "kd_loss");
  const auto p_t = temperature_softmax(teacher_logits.detach(), tau);
  const auto p_s = temperature_softmax(student_logits, tau);
  return tau * tau * row_cross_entropy(p_t, p_s).mean();
}

torch::Tensor similarity_matrix(const torch::Tensor& z_tilde, const torch::Tensor& z) {
  require_same_2d(z_tilde, z, "similarity_matrix");
  const auto nt = z_tilde.norm(2, 1, /*keepdim=*/true);
  const auto nz = z.norm(2, 1, /*keepdim=*/true);
  if ((nt <= 1e-12).any().item<bool>() || (nz <= 1e-12).any().item<bool>()) {
    throw DegenerateInputError("similarity_matrix: zero-norm latent row");
  }
  return torch::matmul(z_tilde / nt, (z / nz).transpose(0, 1));
}

torch::Tensor contrastive_loss(const torch::Tensor& similarity, double tau) {
  require_tau(tau);
  require_square(similarity, "contrastive_loss");
  const auto scaled = similarity / tau;
  const auto row_max = std::get<0>(scaled.max(1, /*keepdim=*/true)).detach();
  const auto log_norm = torch::log(torch::exp(scaled - row_max).sum(1)) + row_max.squeeze(1);
  return (log_norm - scaled.diagonal()).sum();
}

torch::Tensor probability_matrix(const torch::Tensor& similarity, double tau) {
  require_square(similarity, "probability_matrix");
  return temperature_softmax(similarity, tau);
}

torch::Tensor ss_loss(const torch::Tensor& teacher_prob, const torch::Tensor& student_prob,
                      double tau, const std::optional<torch::Tensor>& mask) {
  require_tau(tau);
  require_same_2d(teacher_prob, student_prob, "ss_loss");
  require_square(teacher_prob, "ss_loss");
  const auto per_row = row_cross_entropy(teacher_prob.detach(), student_prob);
  return tau * tau * masked_mean(per_row, mask);
}

torch::Tensor transformed_kd_loss(const torch::Tensor& teacher_logits,
                                  const torch::Tensor& student_logits, double tau,
                                  const std::optional<torch::Tensor>& mask) {
  require_tau(tau);
  require_same_2d(teacher_logits, student_logits, "transformed_kd_loss");
  const auto p_t = temperature_softmax(teacher_logits.detach(), tau);
  const auto p_s = temperature_softmax(student_logits, tau);
  return tau * tau * masked_mean(row_cross_entropy(p_t, p_s), mask);
}

torch::Tensor total_student_loss(const LossTerms& terms, const LossWeights& weights) {
  weights.validate();
  const std::pair<const char*, const torch::Tensor*> named[] = {
      {"l_ce", &terms.ce}, {"l_kd", &terms.kd}, {"l_ss", &terms.ss}, {"l_t", &terms.t}};
  const double w[] = {weights.ce, weights.kd, weights.ss, weights.t};
  torch::Tensor total;
  for (std::size_t i = 0; i < 4; ++i) {
    const torch::Tensor& term = *named[i].second;
    if (!term.defined()) continue;
    if (!torch::isfinite(term).all().item<bool>()) {
      throw NumericError(std::string("non-finite loss term ") + named[i].first);
    }
    auto weighted = w[i] * term;
    total = total.defined() ? total + weighted : weighted;
  }
  if (!total.defined()) throw NumericError("total_student_loss: no loss terms given");
  return total;
}

double total_student_loss(double ce, double kd, double ss, double t, const LossWeights& weights) {
  weights.validate();
  const std::pair<const char*, double> named[] = {{"l_ce", ce}, {"l_kd", kd}, {"l_ss", ss}, {"l_t", t}};
  for (const auto& [name, v] : named) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss term ") + name);
  }
  return weights.ce * ce + weights.kd * kd + weights.ss * ss + weights.t * t;
}

torch::Tensor mask_tensor(const std::vector<bool>& selected) {
  auto out = torch::empty({static_cast<std::int64_t>(selected.size())}, torch::kBool);
  auto* p = out.data_ptr<bool>();
  for (std::size_t i = 0; i < selected.size(); ++i) p[i] = selected[i];
  return out;
}

}  // namespace sskd::losses
