#include "gdformer/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace gdformer {

namespace {

thread_local int g_no_grad_depth = 0;

inline bool want_grad(const Tensor& t) {
  return grad_enabled() && t.requires_grad;
}

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

Tensor make_out(std::vector<std::size_t> shape, bool requires_grad) {
  Tensor t;
  t.shape = std::move(shape);
  const std::size_t n = product(t.shape);
  t.values = std::make_shared<std::vector<double>>(n, 0.0);
  t.requires_grad = requires_grad;
  if (requires_grad) t.grad = std::make_shared<std::vector<double>>(n, 0.0);
  return t;
}

void attach(Tensor& out, std::vector<Tensor> parents,
            std::function<void(const Tensor&)> backprop) {
  if (!out.requires_grad) return;
  out.node = std::make_shared<TapeNode>();
  out.node->parents = std::move(parents);
  out.node->backprop = std::move(backprop);
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw TensorError(std::string(op) + ": expected a 2-d tensor, got " + shape_str(t.shape));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape)
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                      shape_str(b.shape));
}

constexpr double kLogClamp = 1e-12;

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

bool grad_enabled() { return g_no_grad_depth == 0; }
NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  return make_out(std::move(shape), requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v, bool requires_grad) {
  Tensor t = make_out(std::move(shape), requires_grad);
  for (auto& x : *t.values) x = v;
  return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> data,
                    bool requires_grad) {
  if (product(shape) != data.size())
    throw TensorError("tensor: shape " + shape_str(shape) + " does not match data length " +
                      std::to_string(data.size()));
  Tensor t;
  t.shape = std::move(shape);
  t.values = std::make_shared<std::vector<double>>(std::move(data));
  t.requires_grad = requires_grad;
  if (requires_grad) t.grad = std::make_shared<std::vector<double>>(t.values->size(), 0.0);
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

std::size_t Tensor::numel() const { return values ? values->size() : 0; }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw TensorError("rows: tensor is not 2-d: " + shape_str(shape));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw TensorError("cols: tensor is not 2-d: " + shape_str(shape));
  return shape[1];
}

double Tensor::value() const {
  if (numel() != 1) throw TensorError("value: tensor is not scalar: " + shape_str(shape));
  return (*values)[0];
}

void Tensor::zero_grad() {
  if (grad)
    for (auto& g : *grad) g = 0.0;
}

Tensor Tensor::clone(bool rg) const {
  Tensor t;
  t.shape = shape;
  t.values = std::make_shared<std::vector<double>>(*values);
  t.requires_grad = rg;
  if (rg) t.grad = std::make_shared<std::vector<double>>(t.values->size(), 0.0);
  return t;
}

// ---------------------------------------------------------------- matmul

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows())
    throw TensorError("matmul: inner dimensions disagree: " + shape_str(a.shape) + " vs " +
                      shape_str(b.shape));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = make_out({m, n}, want_grad(a) || want_grad(b));
  const double* pa = a.values->data();
  const double* pb = b.values->data();
  double* po = out.values->data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  attach(out, {a, b}, [m, k, n](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    const Tensor& b_ = o.node->parents[1];
    const double* g = o.grad->data();
    if (a_.requires_grad) {
      // dA += dC * B^T; B is transposed up front so the inner loop is
      // a contiguous axpy.
      double* ga = a_.grad->data();
      const double* pb_ = b_.values->data();
      std::vector<double> bt(k * n);
      for (std::size_t kk = 0; kk < k; ++kk)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + kk] = pb_[kk * n + j];
      for (std::size_t i = 0; i < m; ++i) {
        double* garow = ga + i * k;
        const double* grow = g + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          const double gv = grow[j];
          if (gv == 0.0) continue;
          const double* btrow = bt.data() + j * k;
          for (std::size_t kk = 0; kk < k; ++kk) garow[kk] += gv * btrow[kk];
        }
      }
    }
    if (b_.requires_grad) {
      double* gb = b_.grad->data();
      const double* pa_ = a_.values->data();
      for (std::size_t kk = 0; kk < k; ++kk)
        for (std::size_t i = 0; i < m; ++i) {
          const double av = pa_[i * k + kk];
          if (av == 0.0) continue;
          const double* grow = g + i * n;
          double* brow = gb + kk * n;
          for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
        }
    }
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = make_out({c, r}, want_grad(a));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  attach(out, {a}, [r, c](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    if (!a_.requires_grad) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*a_.grad)[i * c + j] += (*o.grad)[j * r + i];
  });
  return out;
}

// ---------------------------------------------------------------- add/mul

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = make_out(a.shape, want_grad(a) || want_grad(b));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.values)[i] = (*a.values)[i] + (*b.values)[i];
  attach(out, {a, b}, [n](const Tensor& o) {
    for (int p = 0; p < 2; ++p) {
      const Tensor& t = o.node->parents[p];
      if (!t.requires_grad) continue;
      for (std::size_t i = 0; i < n; ++i) (*t.grad)[i] += (*o.grad)[i];
    }
  });
  return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  require_rank2(a, "add_rowvec");
  if (v.rank() != 1 || v.shape[0] != a.cols())
    throw TensorError("add_rowvec: shape mismatch " + shape_str(a.shape) + " vs " +
                      shape_str(v.shape));
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = make_out(a.shape, want_grad(a) || want_grad(v));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = a.at(i, j) + v.at(j);
  attach(out, {a, v}, [r, c](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    const Tensor& v_ = o.node->parents[1];
    if (a_.requires_grad)
      for (std::size_t i = 0; i < r * c; ++i) (*a_.grad)[i] += (*o.grad)[i];
    if (v_.requires_grad)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*v_.grad)[j] += (*o.grad)[i * c + j];
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = make_out(a.shape, want_grad(a) || want_grad(b));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.values)[i] = (*a.values)[i] - (*b.values)[i];
  attach(out, {a, b}, [n](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    const Tensor& b_ = o.node->parents[1];
    if (a_.requires_grad)
      for (std::size_t i = 0; i < n; ++i) (*a_.grad)[i] += (*o.grad)[i];
    if (b_.requires_grad)
      for (std::size_t i = 0; i < n; ++i) (*b_.grad)[i] -= (*o.grad)[i];
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = make_out(a.shape, want_grad(a) || want_grad(b));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.values)[i] = (*a.values)[i] * (*b.values)[i];
  attach(out, {a, b}, [n](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    const Tensor& b_ = o.node->parents[1];
    if (a_.requires_grad)
      for (std::size_t i = 0; i < n; ++i) (*a_.grad)[i] += (*o.grad)[i] * (*b_.values)[i];
    if (b_.requires_grad)
      for (std::size_t i = 0; i < n; ++i) (*b_.grad)[i] += (*o.grad)[i] * (*a_.values)[i];
  });
  return out;
}

Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
  require_rank2(a, "mul_rowvec");
  if (v.rank() != 1 || v.shape[0] != a.cols())
    throw TensorError("mul_rowvec: shape mismatch " + shape_str(a.shape) + " vs " +
                      shape_str(v.shape));
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = make_out(a.shape, want_grad(a) || want_grad(v));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = a.at(i, j) * v.at(j);
  attach(out, {a, v}, [r, c](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    const Tensor& v_ = o.node->parents[1];
    if (a_.requires_grad)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          (*a_.grad)[i * c + j] += (*o.grad)[i * c + j] * (*v_.values)[j];
    if (v_.requires_grad)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          (*v_.grad)[j] += (*o.grad)[i * c + j] * (*a_.values)[i * c + j];
  });
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = make_out(a.shape, want_grad(a));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.values)[i] = (*a.values)[i] * s;
  attach(out, {a}, [n, s](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    if (!a_.requires_grad) return;
    for (std::size_t i = 0; i < n; ++i) (*a_.grad)[i] += (*o.grad)[i] * s;
  });
  return out;
}

// ---------------------------------------------------------------- softmax

Tensor softmax(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank())
    throw TensorError("softmax: axis " + std::to_string(axis) + " out of range for " +
                      shape_str(a.shape));
  const std::size_t len = a.shape[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape[i];
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape[i];

  Tensor out = make_out(a.shape, want_grad(a));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = (*a.values)[base];
      for (std::size_t j = 1; j < len; ++j)
        mx = std::max(mx, (*a.values)[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp((*a.values)[base + j * inner] - mx);
        (*out.values)[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) (*out.values)[base + j * inner] /= z;
    }

  attach(out, {a}, [outer, inner, len](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    if (!a_.requires_grad) return;
    for (std::size_t ou = 0; ou < outer; ++ou)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = ou * len * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j)
          dot += (*o.grad)[base + j * inner] * (*o.values)[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          (*a_.grad)[idx] += (*o.values)[idx] * ((*o.grad)[idx] - dot);
        }
      }
  });
  return out;
}

// ------------------------------------------------------------- layer_norm

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank2(x, "layer_norm");
  const std::size_t t = x.rows(), d = x.cols();
  if (gain.rank() != 1 || gain.shape[0] != d || bias.rank() != 1 || bias.shape[0] != d)
    throw TensorError("layer_norm: affine shapes " + shape_str(gain.shape) + ", " +
                      shape_str(bias.shape) + " do not match feature dim " + std::to_string(d));

  Tensor out = make_out(x.shape, want_grad(x) || want_grad(gain) || want_grad(bias));
  auto xhat = std::make_shared<std::vector<double>>(t * d);
  auto inv_s = std::make_shared<std::vector<double>>(t);
  for (std::size_t i = 0; i < t; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x.at(i, j);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x.at(i, j) - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_s)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xr = (x.at(i, j) - mu) * is;
      (*xhat)[i * d + j] = xr;
      out.at(i, j) = xr * gain.at(j) + bias.at(j);
    }
  }

  attach(out, {x, gain, bias}, [t, d, xhat, inv_s](const Tensor& o) {
    const Tensor& x_ = o.node->parents[0];
    const Tensor& g_ = o.node->parents[1];
    const Tensor& b_ = o.node->parents[2];
    for (std::size_t i = 0; i < t; ++i) {
      const double* dy = o.grad->data() + i * d;
      const double* xr = xhat->data() + i * d;
      if (x_.requires_grad) {
        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dxh = dy[j] * (*g_.values)[j];
          mean_dxh += dxh;
          mean_dxh_xh += dxh * xr[j];
        }
        mean_dxh /= static_cast<double>(d);
        mean_dxh_xh /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const double dxh = dy[j] * (*g_.values)[j];
          (*x_.grad)[i * d + j] += (*inv_s)[i] * (dxh - mean_dxh - xr[j] * mean_dxh_xh);
        }
      }
      if (g_.requires_grad)
        for (std::size_t j = 0; j < d; ++j) (*g_.grad)[j] += dy[j] * xr[j];
      if (b_.requires_grad)
        for (std::size_t j = 0; j < d; ++j) (*b_.grad)[j] += dy[j];
    }
  });
  return out;
}

// ------------------------------------------------------------ activations

Tensor relu(const Tensor& a) {
  Tensor out = make_out(a.shape, want_grad(a));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i)
    (*out.values)[i] = (*a.values)[i] > 0.0 ? (*a.values)[i] : 0.0;
  attach(out, {a}, [n](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    if (!a_.requires_grad) return;
    for (std::size_t i = 0; i < n; ++i)
      if ((*a_.values)[i] > 0.0) (*a_.grad)[i] += (*o.grad)[i];
  });
  return out;
}

Tensor gelu(const Tensor& a) {
  Tensor out = make_out(a.shape, want_grad(a));
  const std::size_t n = out.numel();
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  const bool taped = out.requires_grad;
  auto slope = taped ? std::make_shared<std::vector<double>>(n) : nullptr;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (*a.values)[i];
    const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
    (*out.values)[i] = x * cdf;
    if (taped) (*slope)[i] = cdf + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
  }
  attach(out, {a}, [n, slope](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    if (!a_.requires_grad) return;
    for (std::size_t i = 0; i < n; ++i) (*a_.grad)[i] += (*o.grad)[i] * (*slope)[i];
  });
  return out;
}

// ---------------------------------------------------------- slice/concat

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  require_rank2(a, "slice_cols");
  if (c0 >= c1 || c1 > a.cols())
    throw TensorError("slice_cols: invalid range [" + std::to_string(c0) + ", " +
                      std::to_string(c1) + ") for " + shape_str(a.shape));
  const std::size_t r = a.rows(), c = a.cols(), w = c1 - c0;
  Tensor out = make_out({r, w}, want_grad(a));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at(i, j) = a.at(i, c0 + j);
  attach(out, {a}, [r, c, c0, w](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    if (!a_.requires_grad) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) (*a_.grad)[i * c + c0 + j] += (*o.grad)[i * w + j];
  });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw TensorError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != r)
      throw TensorError("concat_cols: row mismatch " + shape_str(parts[0].shape) + " vs " +
                        shape_str(p.shape));
    total += p.cols();
    rg = rg || want_grad(p);
  }
  Tensor out = make_out({r, total}, rg);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) out.at(i, off + j) = p.at(i, j);
    off += w;
  }
  attach(out, parts, [r, total](const Tensor& o) {
    std::size_t off2 = 0;
    for (const auto& p : o.node->parents) {
      const std::size_t w = p.cols();
      if (p.requires_grad)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j)
            (*p.grad)[i * w + j] += (*o.grad)[i * total + off2 + j];
      off2 += w;
    }
  });
  return out;
}

// ----------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  Tensor out = make_out({1}, want_grad(a));
  double acc = 0.0;
  for (double v : *a.values) acc += v;
  (*out.values)[0] = acc;
  attach(out, {a}, [](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    if (!a_.requires_grad) return;
    const double g = (*o.grad)[0];
    for (auto& gv : *a_.grad) gv += g;
  });
  return out;
}

Tensor sum_axis(const Tensor& a, std::size_t axis) {
  require_rank2(a, "sum_axis");
  if (axis > 1) throw TensorError("sum_axis: axis out of range for " + shape_str(a.shape));
  const std::size_t r = a.rows(), c = a.cols();
  const std::size_t n = axis == 0 ? c : r;
  Tensor out = make_out({n}, want_grad(a));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) (*out.values)[axis == 0 ? j : i] += a.at(i, j);
  attach(out, {a}, [r, c, axis](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    if (!a_.requires_grad) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        (*a_.grad)[i * c + j] += (*o.grad)[axis == 0 ? j : i];
  });
  return out;
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  return scale(sum(a), 1.0 / n);
}

Tensor square(const Tensor& a) {
  Tensor out = make_out(a.shape, want_grad(a));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.values)[i] = (*a.values)[i] * (*a.values)[i];
  attach(out, {a}, [n](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    if (!a_.requires_grad) return;
    for (std::size_t i = 0; i < n; ++i)
      (*a_.grad)[i] += 2.0 * (*a_.values)[i] * (*o.grad)[i];
  });
  return out;
}

Tensor abs(const Tensor& a) {
  Tensor out = make_out(a.shape, want_grad(a));
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.values)[i] = std::fabs((*a.values)[i]);
  attach(out, {a}, [n](const Tensor& o) {
    const Tensor& a_ = o.node->parents[0];
    if (!a_.requires_grad) return;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = (*a_.values)[i];
      const double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
      (*a_.grad)[i] += s * (*o.grad)[i];
    }
  });
  return out;
}

// ------------------------------------------------- divergence similarities

namespace {

void require_prob_rows(const Tensor& m, const Tensor& e, const char* op) {
  require_rank2(m, op);
  require_rank2(e, op);
  if (m.cols() != e.cols())
    throw TensorError(std::string(op) + ": column mismatch " + shape_str(m.shape) + " vs " +
                      shape_str(e.shape));
}

inline double clamped(double v) { return v > kLogClamp ? v : kLogClamp; }

}  // namespace

Tensor neg_kl_scores(const Tensor& m, const Tensor& e) {
  require_prob_rows(m, e, "neg_kl_scores");
  const std::size_t t = m.rows(), n = m.cols(), p = e.rows();
  Tensor out = make_out({t, p}, want_grad(m) || want_grad(e));
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t q = 0; q < p; ++q) {
      double kl = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double mv = m.at(i, j);
        kl += mv * (std::log(clamped(mv)) - std::log(clamped(e.at(q, j))));
      }
      out.at(i, q) = -kl;
    }
  attach(out, {m, e}, [t, n, p](const Tensor& o) {
    const Tensor& m_ = o.node->parents[0];
    const Tensor& e_ = o.node->parents[1];
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t q = 0; q < p; ++q) {
        const double g = (*o.grad)[i * p + q];
        if (g == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) {
          const double mv = (*m_.values)[i * n + j];
          const double ev = (*e_.values)[q * n + j];
          if (m_.requires_grad) {
            const double term = std::log(clamped(mv)) - std::log(clamped(ev));
            const double through = mv > kLogClamp ? 1.0 : 0.0;
            (*m_.grad)[i * n + j] += g * (-(term + through));
          }
          if (e_.requires_grad && ev > kLogClamp)
            (*e_.grad)[q * n + j] += g * (mv / ev);
        }
      }
  });
  return out;
}

Tensor neg_js_scores(const Tensor& m, const Tensor& e) {
  require_prob_rows(m, e, "neg_js_scores");
  const std::size_t t = m.rows(), n = m.cols(), p = e.rows();
  Tensor out = make_out({t, p}, want_grad(m) || want_grad(e));
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t q = 0; q < p; ++q) {
      double js = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double a = m.at(i, j), b = e.at(q, j);
        const double mid = clamped(0.5 * (a + b));
        js += 0.5 * a * (std::log(clamped(a)) - std::log(mid));
        js += 0.5 * b * (std::log(clamped(b)) - std::log(mid));
      }
      out.at(i, q) = -js;
    }
  attach(out, {m, e}, [t, n, p](const Tensor& o) {
    const Tensor& m_ = o.node->parents[0];
    const Tensor& e_ = o.node->parents[1];
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t q = 0; q < p; ++q) {
        const double g = (*o.grad)[i * p + q];
        if (g == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) {
          const double a = (*m_.values)[i * n + j];
          const double b = (*e_.values)[q * n + j];
          const double mid = clamped(0.5 * (a + b));
          if (m_.requires_grad)
            (*m_.grad)[i * n + j] += g * (-0.5 * (std::log(clamped(a)) - std::log(mid)));
          if (e_.requires_grad)
            (*e_.grad)[q * n + j] += g * (-0.5 * (std::log(clamped(b)) - std::log(mid)));
        }
      }
  });
  return out;
}

// ---------------------------------------------------------------- backward

void backward(Tensor& loss) {
  if (loss.numel() != 1)
    throw TensorError("backward: loss must be a scalar, got " + shape_str(loss.shape));
  if (!loss.node)
    throw TensorError("backward: loss is detached from the tape");
  if (loss.node->consumed)
    throw TensorError("backward: tape already consumed; rebuild the graph before calling again");

  // Post-order over the tape (parents first), then walk it in reverse so
  // every consumer contributes to a node's gradient before it propagates.
  std::vector<Tensor> order;
  std::unordered_set<const TapeNode*> seen;
  struct Frame {
    Tensor t;
    std::size_t next;
  };
  std::vector<Frame> stack;
  seen.insert(loss.node.get());
  stack.push_back({loss, 0});
  while (!stack.empty()) {
    Frame& top = stack.back();
    const auto& parents = top.t.node->parents;
    bool descended = false;
    while (top.next < parents.size()) {
      const Tensor& par = parents[top.next++];
      if (par.node && !seen.contains(par.node.get())) {
        seen.insert(par.node.get());
        Tensor copy = par;
        stack.push_back({std::move(copy), 0});
        descended = true;
        break;
      }
    }
    if (descended) continue;
    order.push_back(stack.back().t);
    stack.pop_back();
  }

  (*loss.grad)[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    it->node->backprop(*it);
    it->node->consumed = true;
  }
}

}  // namespace gdformer
