#pragma once

#include <optional>
#include <vector>

#include <torch/torch.h>

namespace sskd::losses {

// Log arguments are clamped here so saturated softmax outputs never yield -inf.
inline constexpr double kLogFloor = 1e-12;

struct Temperatures {
  double tau_kd = 4.0;   // classification distillation (normal and transformed data)
  double tau_ss = 0.5;   // similarity-matrix softmax

  void validate() const;
};

struct LossWeights {
  double ce = 0.1;
  double kd = 0.9;
  double ss = 2.7;
  double t = 10.0;

  // All weights >= 0 and at least one > 0; throws ConfigError otherwise.
  void validate() const;
};

// Row-wise softmax(logits / tau) over the last dimension, computed with the
// row maximum subtracted. Throws DomainError for tau <= 0 and NumericError
// for non-finite logits.
torch::Tensor temperature_softmax(const torch::Tensor& logits, double tau);

// tau^2 * mean_n [ -sum_c p_t(c) log p_s(c) ] with both distributions at
// temperature tau. Teacher logits are treated as constants.
torch::Tensor kd_loss(const torch::Tensor& teacher_logits, const torch::Tensor& student_logits,
                      double tau);

// A[i, j] = cos(z_tilde_i, z_j). Rows i index transformed samples, columns j
// index normal samples. Throws DegenerateInputError for a row norm <= 1e-12.
torch::Tensor similarity_matrix(const torch::Tensor& z_tilde, const torch::Tensor& z);

// -sum_i log softmax(A[i, :] / tau)[i]  (summed, not averaged, over rows).
torch::Tensor contrastive_loss(const torch::Tensor& similarity, double tau);

// Row-wise temperature_softmax of A.
torch::Tensor probability_matrix(const torch::Tensor& similarity, double tau);

// tau^2 * mean over selected rows i of -sum_j B_t[i, j] log B_s[i, j].
// Returns a zero scalar when the mask selects nothing; no mask = all rows.
torch::Tensor ss_loss(const torch::Tensor& teacher_prob, const torch::Tensor& student_prob,
                      double tau, const std::optional<torch::Tensor>& mask = std::nullopt);

// kd_loss over transformed samples, optionally restricted to masked rows
// (mean over selected rows; zero when nothing is selected).
torch::Tensor transformed_kd_loss(const torch::Tensor& teacher_logits,
                                  const torch::Tensor& student_logits, double tau,
                                  const std::optional<torch::Tensor>& mask = std::nullopt);

struct LossTerms {
  torch::Tensor ce;
  torch::Tensor kd;
  torch::Tensor ss;
  torch::Tensor t;
};

// w.ce*ce + w.kd*kd + w.ss*ss + w.t*t, summed left to right. Undefined terms
// count as zero. Throws NumericError naming the first non-finite term.
torch::Tensor total_student_loss(const LossTerms& terms, const LossWeights& weights);
double total_student_loss(double ce, double kd, double ss, double t, const LossWeights& weights);

// Converts a selection vector into a bool tensor of shape (N).
torch::Tensor mask_tensor(const std::vector<bool>& selected);

}  // namespace sskd::losses
