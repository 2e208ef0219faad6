#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdformer {

// Errors raised by tensor ops (shape mismatches, tape misuse).
struct TensorError : std::runtime_error {
  explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

struct Tensor;

// One recorded operation. `parents` keeps the inputs alive; `backprop`
// reads the output's gradient and accumulates into the parents' gradients.
struct TapeNode {
  std::vector<Tensor> parents;
  std::function<void(const Tensor& out)> backprop;
  bool consumed = false;
};

// Dense row-major 64-bit float tensor. Value semantics with shared storage:
// copies alias the same buffers, so parameters can be held both by the model
// and by recorded tape nodes. A gradient buffer exists iff requires_grad.
struct Tensor {
  std::vector<std::size_t> shape;
  std::shared_ptr<std::vector<double>> values;
  std::shared_ptr<std::vector<double>> grad;
  bool requires_grad = false;
  std::shared_ptr<TapeNode> node;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double v, bool requires_grad = false);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  std::size_t numel() const;
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only

  double& at(std::size_t i) { return (*values)[i]; }
  double at(std::size_t i) const { return (*values)[i]; }
  double& at(std::size_t r, std::size_t c) { return (*values)[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return (*values)[r * cols() + c]; }

  double value() const;  // scalar tensors only
  void zero_grad();
  bool is_leaf() const { return requires_grad && !node; }

  // Deep copy of values; detached from the tape, requires_grad preserved
  // only if asked for.
  Tensor clone(bool requires_grad = false) const;
};

std::string shape_str(const std::vector<std::size_t>& shape);

// Thread-local switch; when disabled, ops run without recording the tape.
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// ---- forward ops (all participate in the tape when an input requires grad)

Tensor matmul(const Tensor& a, const Tensor& b);     // [m x k] * [k x n]
Tensor transpose(const Tensor& a);                   // 2-D
Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor add_rowvec(const Tensor& a, const Tensor& v); // [r x c] + [c] per row
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise
Tensor mul_rowvec(const Tensor& a, const Tensor& v); // [r x c] * [c] per row
Tensor scale(const Tensor& a, double s);
Tensor softmax(const Tensor& a, std::size_t axis);   // max-subtracted
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);                       // rows of [t x d]
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);                        // exact erf form
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);  // [c0, c1)
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor sum(const Tensor& a);                         // -> scalar
Tensor sum_axis(const Tensor& a, std::size_t axis);  // 2-D -> 1-D
Tensor mean(const Tensor& a);                        // -> scalar
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);

// Similarity between rows of two stochastic matrices m [t x n] and
// e [p x n]: negated KL(m_t || e_p) or negated Jensen-Shannon divergence,
// natural log, probabilities clamped at 1e-12 inside the logs.
Tensor neg_kl_scores(const Tensor& m, const Tensor& e);
Tensor neg_js_scores(const Tensor& m, const Tensor& e);

// Reverse-mode pass from a scalar loss. Gradients accumulate into every
// tensor on the tape that requires grad; leaves keep theirs across calls
// until zero_grad(). A tape can be walked once; repeating is an error.
void backward(Tensor& loss);

}  // namespace gdformer
