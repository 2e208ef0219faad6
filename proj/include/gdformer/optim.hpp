#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gdformer/tensor.hpp"

namespace gdformer {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moment buffers are kept
// by index, aligned with the list passed at construction; the same list
// (same shapes, same order) must be passed to every step().
class AdamState {
 public:
  AdamState() = default;
  AdamState(const std::vector<Tensor*>& params, AdamConfig cfg);

  // One update from the gradients currently stored in params.
  void step(const std::vector<Tensor*>& params);

  std::uint64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // Exposed for checkpoint serialization.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::vector<std::vector<double>> m, std::vector<std::vector<double>> v,
               std::uint64_t step);

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

// Compares backward() gradients of `make_loss` against central finite
// differences with step h, perturbing each parameter element in place.
// Returns the max relative error with denominator max(|a|, |b|, 1e-8).
double finite_diff_check(const std::function<Tensor()>& make_loss,
                         const std::vector<Tensor*>& params, double h);

// Same, but also reports the per-parameter maxima (aligned with params).
double finite_diff_check(const std::function<Tensor()>& make_loss,
                         const std::vector<Tensor*>& params, double h,
                         std::vector<double>* per_param_max);

}  // namespace gdformer
