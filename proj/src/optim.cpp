#include "gdformer/optim.hpp"

#include <cmath>

namespace gdformer {

AdamState::AdamState(const std::vector<Tensor*>& params, AdamConfig cfg) : cfg_(cfg) {
  if (cfg_.lr <= 0.0) throw TensorError("adam: learning rate must be positive");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor* p : params) {
    m_.emplace_back(p->numel(), 0.0);
    v_.emplace_back(p->numel(), 0.0);
  }
}

void AdamState::step(const std::vector<Tensor*>& params) {
  if (params.size() != m_.size())
    throw TensorError("adam: parameter list size changed: " + std::to_string(params.size()) +
                      " vs " + std::to_string(m_.size()));
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (p.numel() != m_[i].size())
      throw TensorError("adam: shape mismatch for parameter " + std::to_string(i) + ": " +
                        shape_str(p.shape) + " vs stored length " +
                        std::to_string(m_[i].size()));
    if (!p.grad) throw TensorError("adam: parameter " + std::to_string(i) + " has no gradient");
    for (std::size_t j = 0; j < m_[i].size(); ++j) {
      const double g = (*p.grad)[j];
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      (*p.values)[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void AdamState::restore(std::vector<std::vector<double>> m, std::vector<std::vector<double>> v,
                        std::uint64_t step) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw TensorError("adam: restored moment count does not match parameter list");
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i].size() != m_[i].size() || v[i].size() != v_[i].size())
      throw TensorError("adam: restored moment shape mismatch at parameter " + std::to_string(i));
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = step;
}

double finite_diff_check(const std::function<Tensor()>& make_loss,
                         const std::vector<Tensor*>& params, double h) {
  return finite_diff_check(make_loss, params, h, nullptr);
}

double finite_diff_check(const std::function<Tensor()>& make_loss,
                         const std::vector<Tensor*>& params, double h,
                         std::vector<double>* per_param_max) {
  if (h <= 0.0) throw TensorError("finite_diff_check: h must be positive");
  for (Tensor* p : params) p->zero_grad();
  Tensor loss = make_loss();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) analytic.push_back(*p->grad);

  if (per_param_max) per_param_max->assign(params.size(), 0.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double saved = (*p.values)[j];
      double up, down;
      {
        NoGradGuard ng;
        (*p.values)[j] = saved + h;
        up = make_loss().value();
        (*p.values)[j] = saved - h;
        down = make_loss().value();
        (*p.values)[j] = saved;
      }
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i][j];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(a - numeric) / denom;
      worst = std::max(worst, rel);
      if (per_param_max) (*per_param_max)[i] = std::max((*per_param_max)[i], rel);
    }
  }
  return worst;
}

}  // namespace gdformer
