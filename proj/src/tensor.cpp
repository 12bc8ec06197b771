#include "tslm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "tslm/error.hpp"

namespace tslm {

namespace {

thread_local Precision g_precision = Precision::f32;
thread_local bool g_grad_enabled = true;

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw ShapeError("negative dimension");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

void require_rank(const Tensor& t, std::int64_t r, const char* op) {
  if (t.rank() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void ensure_grad(detail::Storage& s) {
  if (s.grad.size() != s.values.size()) s.grad.assign(s.values.size(), 0.0);
}

// Accumulate g into t's gradient, rounding per t's precision.
void accum(const Tensor& t, std::int64_t idx, double g) {
  auto& s = t.storage();
  if (!s.requires_grad) return;
  ensure_grad(s);
  auto& slot = s.grad[static_cast<std::size_t>(idx)];
  slot = detail::round_to(slot + g, s.precision);
}

struct OutBuilder {
  std::shared_ptr<detail::Storage> s;

  OutBuilder(std::vector<std::int64_t> shape, std::initializer_list<Tensor> inputs) {
    s = std::make_shared<detail::Storage>();
    s->shape = std::move(shape);
    s->values.assign(static_cast<std::size_t>(shape_numel(s->shape)), 0.0);
    s->precision = g_precision;
    bool need = false;
    if (g_grad_enabled) {
      for (const Tensor& in : inputs) need = need || in.requires_grad();
    }
    s->requires_grad = need;
    if (need) {
      s->node = std::make_shared<detail::Node>();
      s->node->parents.assign(inputs.begin(), inputs.end());
    }
  }

  double* data() { return s->values.data(); }

  void set(std::int64_t i, double v) {
    s->values[static_cast<std::size_t>(i)] = detail::round_to(v, s->precision);
  }

  Tensor finish(const char* op, std::function<void(const Tensor&)> bw) {
    if (s->node) {
      s->node->op = op;
      s->node->backward = std::move(bw);
    }
    return Tensor::wrap(std::move(s));
  }
};

}  // namespace

namespace detail {

double round_to(double v, Precision p) {
  return p == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

}  // namespace detail

Precision current_precision() { return g_precision; }

PrecisionGuard::PrecisionGuard(Precision p) : saved_(g_precision) { g_precision = p; }
PrecisionGuard::~PrecisionGuard() { g_precision = saved_; }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

// ---- construction ----------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::int64_t> shape, bool requires_grad) {
  auto s = std::make_shared<detail::Storage>();
  std::int64_t n = shape_numel(shape);
  s->shape = std::move(shape);
  s->values.assign(static_cast<std::size_t>(n), 0.0);
  s->requires_grad = requires_grad;
  s->precision = g_precision;
  return wrap(std::move(s));
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  double v = detail::round_to(value, t.precision());
  std::fill(t.storage().values.begin(), t.storage().values.end(), v);
  return t;
}

Tensor Tensor::from_values(std::vector<std::int64_t> shape, std::vector<double> values,
                           bool requires_grad) {
  std::int64_t n = shape_numel(shape);
  if (n != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("from_values: " + shape_str(shape) + " needs " + std::to_string(n) +
                     " values, got " + std::to_string(values.size()));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("from_values: non-finite value");
  }
  auto s = std::make_shared<detail::Storage>();
  s->shape = std::move(shape);
  s->precision = g_precision;
  s->values.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    s->values[i] = detail::round_to(values[i], s->precision);
  }
  s->requires_grad = requires_grad;
  return wrap(std::move(s));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({}, {value}, requires_grad);
}

Tensor Tensor::rand_uniform(std::vector<std::int64_t> shape, double lo, double hi, Rng& rng,
                            bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  auto& vals = t.storage().values;
  for (auto& v : vals) v = detail::round_to(rng.uniform(lo, hi), t.precision());
  return t;
}

std::span<const double> Tensor::grad() const {
  ensure_grad(*s_);
  return s_->grad;
}

double Tensor::at(std::int64_t i) const { return s_->values[static_cast<std::size_t>(i)]; }

double Tensor::at(std::int64_t i, std::int64_t j) const {
  return s_->values[static_cast<std::size_t>(i * dim(1) + j)];
}

double Tensor::at(std::int64_t i, std::int64_t j, std::int64_t k) const {
  return s_->values[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
}

double Tensor::value() const {
  if (size() != 1) throw ContractError("value(): tensor is not scalar, shape " + shape_str(shape()));
  return s_->values[0];
}

void Tensor::zero_grad() {
  if (!s_) return;
  std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto s = std::make_shared<detail::Storage>();
  s->shape = s_->shape;
  s->values = s_->values;
  s->precision = s_->precision;
  return wrap(std::move(s));
}

// ---- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  OutBuilder out(a.shape(), {a, b});
  const auto av = a.values();
  const auto bv = b.values();
  for (std::int64_t i = 0; i < a.size(); ++i) out.set(i, av[i] + bv[i]);
  return out.finish("add", [](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    for (std::int64_t i = 0; i < o.size(); ++i) {
      accum(p[0], i, g[static_cast<std::size_t>(i)]);
      accum(p[1], i, g[static_cast<std::size_t>(i)]);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  OutBuilder out(a.shape(), {a, b});
  const auto av = a.values();
  const auto bv = b.values();
  for (std::int64_t i = 0; i < a.size(); ++i) out.set(i, av[i] - bv[i]);
  return out.finish("sub", [](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    for (std::int64_t i = 0; i < o.size(); ++i) {
      accum(p[0], i, g[static_cast<std::size_t>(i)]);
      accum(p[1], i, -g[static_cast<std::size_t>(i)]);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  OutBuilder out(a.shape(), {a, b});
  const auto av = a.values();
  const auto bv = b.values();
  for (std::int64_t i = 0; i < a.size(); ++i) out.set(i, av[i] * bv[i]);
  return out.finish("mul", [](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    const auto av = p[0].values();
    const auto bv = p[1].values();
    for (std::int64_t i = 0; i < o.size(); ++i) {
      accum(p[0], i, g[static_cast<std::size_t>(i)] * bv[i]);
      accum(p[1], i, g[static_cast<std::size_t>(i)] * av[i]);
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  OutBuilder out(a.shape(), {a});
  const auto av = a.values();
  for (std::int64_t i = 0; i < a.size(); ++i) out.set(i, av[i] * c);
  return out.finish("scale", [c](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    for (std::int64_t i = 0; i < o.size(); ++i) accum(p[0], i, g[static_cast<std::size_t>(i)] * c);
  });
}

Tensor add_row(const Tensor& m, const Tensor& row) {
  require_rank(m, 2, "add_row");
  require_rank(row, 1, "add_row");
  if (m.dim(1) != row.dim(0)) throw ShapeError("add_row: column count mismatch");
  const std::int64_t r = m.dim(0), c = m.dim(1);
  OutBuilder out({r, c}, {m, row});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out.set(i * c + j, m.at(i, j) + row.at(j));
  return out.finish("add_row", [r, c](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) {
        double gv = g[static_cast<std::size_t>(i * c + j)];
        accum(p[0], i * c + j, gv);
        accum(p[1], j, gv);
      }
  });
}

Tensor add_col(const Tensor& m, const Tensor& col) {
  require_rank(m, 2, "add_col");
  require_rank(col, 1, "add_col");
  if (m.dim(0) != col.dim(0)) throw ShapeError("add_col: row count mismatch");
  const std::int64_t r = m.dim(0), c = m.dim(1);
  OutBuilder out({r, c}, {m, col});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out.set(i * c + j, m.at(i, j) + col.at(i));
  return out.finish("add_col", [r, c](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) {
        double gv = g[static_cast<std::size_t>(i * c + j)];
        accum(p[0], i * c + j, gv);
        accum(p[1], i, gv);
      }
  });
}

Tensor reshape(const Tensor& a, std::vector<std::int64_t> shape) {
  if (shape_numel(shape) != a.size()) {
    throw ShapeError("reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                     shape_str(shape));
  }
  OutBuilder out(std::move(shape), {a});
  const auto av = a.values();
  for (std::int64_t i = 0; i < a.size(); ++i) out.set(i, av[i]);
  return out.finish("reshape", [](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    for (std::int64_t i = 0; i < o.size(); ++i) accum(p[0], i, g[static_cast<std::size_t>(i)]);
  });
}

Tensor relu(const Tensor& a) {
  OutBuilder out(a.shape(), {a});
  const auto av = a.values();
  for (std::int64_t i = 0; i < a.size(); ++i) out.set(i, av[i] > 0.0 ? av[i] : 0.0);
  return out.finish("relu", [](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    const auto av = p[0].values();
    for (std::int64_t i = 0; i < o.size(); ++i) {
      if (av[i] > 0.0) accum(p[0], i, g[static_cast<std::size_t>(i)]);
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  OutBuilder out(a.shape(), {a});
  const auto av = a.values();
  for (std::int64_t i = 0; i < a.size(); ++i) {
    double x = av[i];
    double y = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    out.set(i, y);
  }
  return out.finish("sigmoid", [](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    const auto yv = o.values();
    for (std::int64_t i = 0; i < o.size(); ++i) {
      accum(p[0], i, g[static_cast<std::size_t>(i)] * yv[i] * (1.0 - yv[i]));
    }
  });
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  OutBuilder out({m, n}, {a, b});
  const auto av = a.values();
  const auto bv = b.values();
  double* ov = out.data();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double aik = av[static_cast<std::size_t>(i * k + kk)];
      const double* brow = &bv[static_cast<std::size_t>(kk * n)];
      double* orow = &ov[i * n];
      for (std::int64_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  if (out.s->precision == Precision::f32) {
    for (std::int64_t i = 0; i < m * n; ++i) ov[i] = detail::round_to(ov[i], Precision::f32);
  }
  return out.finish("matmul", [m, k, n](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    const auto av = p[0].values();
    const auto bv = p[1].values();
    // dA = dC B^T: row_i(g) . row_kk(B), both contiguous
    if (p[0].requires_grad()) {
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t kk = 0; kk < k; ++kk) {
          const double* grow = &g[static_cast<std::size_t>(i * n)];
          const double* brow = &bv[static_cast<std::size_t>(kk * n)];
          double acc = 0.0;
          for (std::int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          accum(p[0], i * k + kk, acc);
        }
    }
    // dB = A^T dC, accumulated i-outer so the inner loop runs contiguously
    if (p[1].requires_grad()) {
      std::vector<double> db(static_cast<std::size_t>(k * n), 0.0);
      for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = &av[static_cast<std::size_t>(i * k)];
        const double* grow = &g[static_cast<std::size_t>(i * n)];
        for (std::int64_t kk = 0; kk < k; ++kk) {
          const double a_ik = arow[kk];
          double* drow = &db[static_cast<std::size_t>(kk * n)];
          for (std::int64_t j = 0; j < n; ++j) drow[j] += a_ik * grow[j];
        }
      }
      for (std::int64_t idx = 0; idx < k * n; ++idx) accum(p[1], idx, db[static_cast<std::size_t>(idx)]);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::int64_t r = a.dim(0), c = a.dim(1);
  OutBuilder out({c, r}, {a});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out.set(j * r + i, a.at(i, j));
  return out.finish("transpose", [r, c](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) accum(p[0], i * c + j, g[static_cast<std::size_t>(j * r + i)]);
  });
}

// ---- softmax ----------------------------------------------------------------

Tensor softmax(const Tensor& x, std::int64_t axis) {
  if (x.rank() < 1 || x.rank() > 2) throw ShapeError("softmax: rank must be 1 or 2");
  if (axis < 0 || axis >= x.rank()) throw ShapeError("softmax: invalid axis");
  if (x.dim(axis) == 0) throw ShapeError("softmax: empty axis");

  // Normalize to (slices x width) where softmax runs along width.
  const bool row_major_axis = (x.rank() == 1) || (axis == 1);
  const std::int64_t slices = x.rank() == 1 ? 1 : (row_major_axis ? x.dim(0) : x.dim(1));
  const std::int64_t width = x.rank() == 1 ? x.dim(0) : x.dim(axis);

  OutBuilder out(x.shape(), {x});
  const auto xv = x.values();
  auto idx = [&](std::int64_t s, std::int64_t w) -> std::int64_t {
    if (x.rank() == 1) return w;
    return row_major_axis ? s * width + w : w * slices + s;
  };
  for (std::int64_t s = 0; s < slices; ++s) {
    double mx = xv[static_cast<std::size_t>(idx(s, 0))];
    for (std::int64_t w = 1; w < width; ++w) mx = std::max(mx, xv[static_cast<std::size_t>(idx(s, w))]);
    double z = 0.0;
    for (std::int64_t w = 0; w < width; ++w) z += std::exp(xv[static_cast<std::size_t>(idx(s, w))] - mx);
    for (std::int64_t w = 0; w < width; ++w) {
      out.set(idx(s, w), std::exp(xv[static_cast<std::size_t>(idx(s, w))] - mx) / z);
    }
  }
  return out.finish("softmax", [slices, width, row_major_axis, rank = x.rank()](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    const auto yv = o.values();
    auto idx = [&](std::int64_t s, std::int64_t w) -> std::int64_t {
      if (rank == 1) return w;
      return row_major_axis ? s * width + w : w * slices + s;
    };
    for (std::int64_t s = 0; s < slices; ++s) {
      double dotv = 0.0;
      for (std::int64_t w = 0; w < width; ++w) {
        auto i = static_cast<std::size_t>(idx(s, w));
        dotv += g[i] * yv[i];
      }
      for (std::int64_t w = 0; w < width; ++w) {
        auto i = static_cast<std::size_t>(idx(s, w));
        accum(p[0], static_cast<std::int64_t>(i), yv[i] * (g[i] - dotv));
      }
    }
  });
}

// ---- convolution ------------------------------------------------------------

Tensor conv1d(const Tensor& input, const Tensor& kernels, std::int64_t stride,
              std::int64_t padding) {
  require_rank(input, 2, "conv1d");
  require_rank(kernels, 3, "conv1d");
  const std::int64_t c_in = input.dim(0), len = input.dim(1);
  const std::int64_t c_out = kernels.dim(0), k = kernels.dim(2);
  if (kernels.dim(1) != c_in) throw ShapeError("conv1d: kernel input channels mismatch");
  if (k < 1 || stride < 1 || padding < 0) throw ParameterError("conv1d: invalid stride/padding/kernel");
  if (len + 2 * padding < k) throw ShapeError("conv1d: window larger than padded input");
  const std::int64_t l_out = (len + 2 * padding - k) / stride + 1;

  OutBuilder out({c_out, l_out}, {input, kernels});
  for (std::int64_t o = 0; o < c_out; ++o)
    for (std::int64_t t = 0; t < l_out; ++t) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < c_in; ++i)
        for (std::int64_t j = 0; j < k; ++j) {
          const std::int64_t x = t * stride - padding + j;
          if (x >= 0 && x < len) acc += input.at(i, x) * kernels.at(o, i, j);
        }
      out.set(o * l_out + t, acc);
    }
  return out.finish("conv1d", [c_in, len, c_out, k, l_out, stride, padding](const Tensor& outT) {
    const auto& p = outT.storage().node->parents;
    const auto g = outT.storage().grad;
    const Tensor& in = p[0];
    const Tensor& ker = p[1];
    for (std::int64_t o = 0; o < c_out; ++o)
      for (std::int64_t t = 0; t < l_out; ++t) {
        const double gv = g[static_cast<std::size_t>(o * l_out + t)];
        for (std::int64_t i = 0; i < c_in; ++i)
          for (std::int64_t j = 0; j < k; ++j) {
            const std::int64_t x = t * stride - padding + j;
            if (x < 0 || x >= len) continue;
            accum(in, i * len + x, gv * ker.at(o, i, j));
            accum(ker, (o * c_in + i) * k + j, gv * in.at(i, x));
          }
      }
  });
}

Tensor conv1d_transpose(const Tensor& input, const Tensor& kernels, std::int64_t stride,
                        std::int64_t padding, std::int64_t output_padding) {
  require_rank(input, 2, "conv1d_transpose");
  require_rank(kernels, 3, "conv1d_transpose");
  const std::int64_t c_in = input.dim(0), len = input.dim(1);
  const std::int64_t c_out = kernels.dim(1), k = kernels.dim(2);
  if (kernels.dim(0) != c_in) throw ShapeError("conv1d_transpose: kernel input channels mismatch");
  if (k < 1 || stride < 1 || padding < 0) {
    throw ParameterError("conv1d_transpose: invalid stride/padding/kernel");
  }
  if (output_padding < 0 || output_padding >= stride) {
    throw ParameterError("conv1d_transpose: output_padding must be in [0, stride)");
  }
  const std::int64_t l_out = (len - 1) * stride - 2 * padding + k + output_padding;
  if (l_out < 1) throw ShapeError("conv1d_transpose: empty output");

  OutBuilder out({c_out, l_out}, {input, kernels});
  double* ov = out.data();
  for (std::int64_t i = 0; i < c_in; ++i)
    for (std::int64_t t = 0; t < len; ++t) {
      const double xv = input.at(i, t);
      for (std::int64_t o = 0; o < c_out; ++o)
        for (std::int64_t j = 0; j < k; ++j) {
          const std::int64_t pos = t * stride - padding + j;
          if (pos >= 0 && pos < l_out) ov[o * l_out + pos] += xv * kernels.at(i, o, j);
        }
    }
  if (out.s->precision == Precision::f32) {
    for (std::int64_t i = 0; i < c_out * l_out; ++i) ov[i] = detail::round_to(ov[i], Precision::f32);
  }
  return out.finish("conv1d_transpose",
                    [c_in, len, c_out, k, l_out, stride, padding](const Tensor& outT) {
    const auto& p = outT.storage().node->parents;
    const auto g = outT.storage().grad;
    const Tensor& in = p[0];
    const Tensor& ker = p[1];
    for (std::int64_t i = 0; i < c_in; ++i)
      for (std::int64_t t = 0; t < len; ++t)
        for (std::int64_t o = 0; o < c_out; ++o)
          for (std::int64_t j = 0; j < k; ++j) {
            const std::int64_t pos = t * stride - padding + j;
            if (pos < 0 || pos >= l_out) continue;
            const double gv = g[static_cast<std::size_t>(o * l_out + pos)];
            accum(in, i * len + t, gv * ker.at(i, o, j));
            accum(ker, (i * c_out + o) * k + j, gv * in.at(i, t));
          }
  });
}

// ---- losses -----------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& targets,
                     std::int64_t pad_id) {
  require_rank(logits, 2, "cross_entropy");
  const std::int64_t steps = logits.dim(0), vocab = logits.dim(1);
  if (static_cast<std::int64_t>(targets.size()) != steps) {
    throw ShapeError("cross_entropy: target length mismatch");
  }
  std::int64_t active = 0;
  for (std::int64_t t = 0; t < steps; ++t) {
    if (targets[static_cast<std::size_t>(t)] == pad_id) continue;
    if (targets[static_cast<std::size_t>(t)] < 0 || targets[static_cast<std::size_t>(t)] >= vocab) {
      throw IndexError("cross_entropy: target out of range at position " + std::to_string(t));
    }
    ++active;
  }
  if (active == 0) throw ParameterError("cross_entropy: all positions are pad (empty loss)");

  // Per-position softmax probabilities, reused by the backward pass.
  auto probs = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(steps * vocab), 0.0);
  const auto lv = logits.values();
  double loss = 0.0;
  for (std::int64_t t = 0; t < steps; ++t) {
    double mx = lv[static_cast<std::size_t>(t * vocab)];
    for (std::int64_t j = 1; j < vocab; ++j)
      mx = std::max(mx, lv[static_cast<std::size_t>(t * vocab + j)]);
    double z = 0.0;
    for (std::int64_t j = 0; j < vocab; ++j)
      z += std::exp(lv[static_cast<std::size_t>(t * vocab + j)] - mx);
    const double logz = std::log(z) + mx;
    for (std::int64_t j = 0; j < vocab; ++j) {
      (*probs)[static_cast<std::size_t>(t * vocab + j)] =
          std::exp(lv[static_cast<std::size_t>(t * vocab + j)] - logz);
    }
    const std::int64_t y = targets[static_cast<std::size_t>(t)];
    if (y != pad_id) loss += logz - lv[static_cast<std::size_t>(t * vocab + y)];
  }
  OutBuilder out({}, {logits});
  out.set(0, loss / static_cast<double>(active));
  return out.finish("cross_entropy",
                    [steps, vocab, targets, pad_id, active, probs](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const double g = o.storage().grad[0] / static_cast<double>(active);
    for (std::int64_t t = 0; t < steps; ++t) {
      const std::int64_t y = targets[static_cast<std::size_t>(t)];
      if (y == pad_id) continue;
      for (std::int64_t j = 0; j < vocab; ++j) {
        double d = (*probs)[static_cast<std::size_t>(t * vocab + j)] - (j == y ? 1.0 : 0.0);
        accum(p[0], t * vocab + j, g * d);
      }
    }
  });
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "l1_loss");
  const std::int64_t n = pred.size();
  if (n == 0) throw ShapeError("l1_loss: empty tensors");
  const auto pv = pred.values();
  const auto tv = target.values();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += std::abs(pv[i] - tv[i]);
  OutBuilder out({}, {pred, target});
  out.set(0, acc / static_cast<double>(n));
  return out.finish("l1_loss", [n](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const double g = o.storage().grad[0] / static_cast<double>(n);
    const auto pv = p[0].values();
    const auto tv = p[1].values();
    for (std::int64_t i = 0; i < n; ++i) {
      const double d = pv[i] - tv[i];
      const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      accum(p[0], i, g * s);
      accum(p[1], i, -g * s);
    }
  });
}

// ---- normalization ----------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "layer_norm");
  require_rank(gamma, 1, "layer_norm");
  require_rank(beta, 1, "layer_norm");
  const std::int64_t r = x.dim(0), c = x.dim(1);
  if (gamma.dim(0) != c || beta.dim(0) != c) throw ShapeError("layer_norm: gamma/beta width mismatch");

  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(r), 0.0);
  auto means = std::make_shared<std::vector<double>>(static_cast<std::size_t>(r), 0.0);
  OutBuilder out({r, c}, {x, gamma, beta});
  for (std::int64_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::int64_t j = 0; j < c; ++j) mu += x.at(i, j);
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      const double d = x.at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    (*means)[static_cast<std::size_t>(i)] = mu;
    (*inv_std)[static_cast<std::size_t>(i)] = is;
    for (std::int64_t j = 0; j < c; ++j) {
      out.set(i * c + j, (x.at(i, j) - mu) * is * gamma.at(j) + beta.at(j));
    }
  }
  return out.finish("layer_norm", [r, c, means, inv_std](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    const Tensor& x = p[0];
    const Tensor& gamma = p[1];
    for (std::int64_t i = 0; i < r; ++i) {
      const double mu = (*means)[static_cast<std::size_t>(i)];
      const double is = (*inv_std)[static_cast<std::size_t>(i)];
      double sum_gy = 0.0, sum_gyx = 0.0;
      for (std::int64_t j = 0; j < c; ++j) {
        const double xh = (x.at(i, j) - mu) * is;
        const double gy = g[static_cast<std::size_t>(i * c + j)] * gamma.at(j);
        sum_gy += gy;
        sum_gyx += gy * xh;
      }
      const double inv_c = 1.0 / static_cast<double>(c);
      for (std::int64_t j = 0; j < c; ++j) {
        const double xh = (x.at(i, j) - mu) * is;
        const double gv = g[static_cast<std::size_t>(i * c + j)];
        const double gy = gv * gamma.at(j);
        accum(x, i * c + j, is * (gy - inv_c * sum_gy - xh * inv_c * sum_gyx));
        accum(gamma, j, gv * xh);
        accum(p[2], j, gv);
      }
    }
  });
}

// ---- reshuffling ------------------------------------------------------------

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::int64_t c = parts[0].rank() == 2 ? parts[0].dim(1) : -1;
  std::int64_t rows = 0;
  for (const Tensor& t : parts) {
    require_rank(t, 2, "concat_rows");
    if (t.dim(1) != c) throw ShapeError("concat_rows: column count mismatch");
    rows += t.dim(0);
  }
  auto s = std::make_shared<detail::Storage>();
  s->shape = {rows, c};
  s->values.reserve(static_cast<std::size_t>(rows * c));
  s->precision = g_precision;
  bool need = false;
  for (const Tensor& t : parts) {
    s->values.insert(s->values.end(), t.values().begin(), t.values().end());
    if (g_grad_enabled && t.requires_grad()) need = true;
  }
  s->requires_grad = need;
  if (need) {
    s->node = std::make_shared<detail::Node>();
    s->node->parents = parts;
    s->node->op = "concat_rows";
    s->node->backward = [c](const Tensor& o) {
      const auto& ps = o.storage().node->parents;
      const auto g = o.storage().grad;
      std::int64_t offset = 0;
      for (const Tensor& t : ps) {
        const std::int64_t n = t.size();
        for (std::int64_t i = 0; i < n; ++i) accum(t, i, g[static_cast<std::size_t>(offset + i)]);
        offset += n;
      }
      (void)c;
    };
  }
  return Tensor::wrap(std::move(s));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::int64_t r = parts[0].rank() == 2 ? parts[0].dim(0) : -1;
  std::int64_t cols = 0;
  std::vector<std::int64_t> widths;
  for (const Tensor& t : parts) {
    require_rank(t, 2, "concat_cols");
    if (t.dim(0) != r) throw ShapeError("concat_cols: row count mismatch");
    widths.push_back(t.dim(1));
    cols += t.dim(1);
  }
  OutBuilder out({r, cols}, {});
  // OutBuilder with empty inputs can't track parents; rebuild storage manually.
  auto s = out.s;
  bool need = false;
  for (const Tensor& t : parts) {
    if (g_grad_enabled && t.requires_grad()) need = true;
  }
  std::int64_t col0 = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const Tensor& t = parts[pi];
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < widths[pi]; ++j)
        s->values[static_cast<std::size_t>(i * cols + col0 + j)] =
            detail::round_to(t.at(i, j), s->precision);
    col0 += widths[pi];
  }
  s->requires_grad = need;
  if (need) {
    s->node = std::make_shared<detail::Node>();
    s->node->parents = parts;
    s->node->op = "concat_cols";
    s->node->backward = [r, cols, widths](const Tensor& o) {
      const auto& ps = o.storage().node->parents;
      const auto g = o.storage().grad;
      std::int64_t col0 = 0;
      for (std::size_t pi = 0; pi < ps.size(); ++pi) {
        const std::int64_t w = widths[pi];
        for (std::int64_t i = 0; i < r; ++i)
          for (std::int64_t j = 0; j < w; ++j)
            accum(ps[pi], i * w + j, g[static_cast<std::size_t>(i * cols + col0 + j)]);
        col0 += w;
      }
    };
  }
  return Tensor::wrap(std::move(s));
}

Tensor slice_rows(const Tensor& x, std::int64_t start, std::int64_t count) {
  require_rank(x, 2, "slice_rows");
  if (start < 0 || count < 0 || start + count > x.dim(0)) {
    throw ShapeError("slice_rows: range out of bounds");
  }
  const std::int64_t c = x.dim(1);
  OutBuilder out({count, c}, {x});
  for (std::int64_t i = 0; i < count; ++i)
    for (std::int64_t j = 0; j < c; ++j) out.set(i * c + j, x.at(start + i, j));
  return out.finish("slice_rows", [start, count, c](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    for (std::int64_t i = 0; i < count; ++i)
      for (std::int64_t j = 0; j < c; ++j)
        accum(p[0], (start + i) * c + j, g[static_cast<std::size_t>(i * c + j)]);
  });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& ids) {
  require_rank(table, 2, "embedding_lookup");
  const std::int64_t vocab = table.dim(0), d = table.dim(1);
  for (std::int64_t id : ids) {
    if (id < 0 || id >= vocab) throw IndexError("embedding_lookup: id out of range: " + std::to_string(id));
  }
  const std::int64_t n = static_cast<std::int64_t>(ids.size());
  OutBuilder out({n, d}, {table});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j)
      out.set(i * d + j, table.at(ids[static_cast<std::size_t>(i)], j));
  return out.finish("embedding_lookup", [ids, d](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const auto g = o.storage().grad;
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::int64_t j = 0; j < d; ++j)
        accum(p[0], ids[i] * d + j, g[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)]);
  });
}

// ---- reductions -------------------------------------------------------------

Tensor sum(const Tensor& a) {
  const auto av = a.values();
  double acc = 0.0;
  for (double v : av) acc += v;
  OutBuilder out({}, {a});
  out.set(0, acc);
  return out.finish("sum", [](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const double g = o.storage().grad[0];
    for (std::int64_t i = 0; i < p[0].size(); ++i) accum(p[0], i, g);
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_rank(a, 1, "dot");
  require_rank(b, 1, "dot");
  if (a.dim(0) != b.dim(0)) throw ShapeError("dot: length mismatch");
  const auto av = a.values();
  const auto bv = b.values();
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += av[i] * bv[i];
  OutBuilder out({}, {a, b});
  out.set(0, acc);
  return out.finish("dot", [](const Tensor& o) {
    const auto& p = o.storage().node->parents;
    const double g = o.storage().grad[0];
    const auto av = p[0].values();
    const auto bv = p[1].values();
    for (std::int64_t i = 0; i < p[0].size(); ++i) {
      accum(p[0], i, g * bv[i]);
      accum(p[1], i, g * av[i]);
    }
  });
}

Tensor mean_scalars(const std::vector<Tensor>& losses) {
  if (losses.empty()) throw ShapeError("mean_scalars: no inputs");
  for (const Tensor& t : losses) {
    if (t.size() != 1) throw ContractError("mean_scalars: inputs must be scalars");
  }
  auto s = std::make_shared<detail::Storage>();
  s->shape = {};
  s->precision = g_precision;
  double acc = 0.0;
  bool need = false;
  for (const Tensor& t : losses) {
    acc += t.value();
    if (g_grad_enabled && t.requires_grad()) need = true;
  }
  s->values = {detail::round_to(acc / static_cast<double>(losses.size()), s->precision)};
  s->requires_grad = need;
  if (need) {
    s->node = std::make_shared<detail::Node>();
    s->node->parents = losses;
    s->node->op = "mean_scalars";
    s->node->backward = [](const Tensor& o) {
      const auto& ps = o.storage().node->parents;
      const double g = o.storage().grad[0] / static_cast<double>(ps.size());
      for (const Tensor& t : ps) accum(t, 0, g);
    };
  }
  return Tensor::wrap(std::move(s));
}

// ---- backward ---------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: root must be a scalar tensor");
  }
  if (!loss.requires_grad()) return;

  // Topological order via iterative post-order DFS; deterministic given the graph.
  std::vector<Tensor> order;
  std::unordered_set<const detail::Storage*> visited;
  std::vector<std::pair<Tensor, std::size_t>> stack;
  stack.emplace_back(loss, 0);
  visited.insert(&loss.storage());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    const auto& node = t.storage().node;
    if (!node || next >= node->parents.size()) {
      order.push_back(t);
      stack.pop_back();
      continue;
    }
    Tensor parent = node->parents[next++];
    if (parent.requires_grad() && !visited.count(&parent.storage())) {
      visited.insert(&parent.storage());
      stack.emplace_back(parent, 0);
    }
  }

  ensure_grad(loss.storage());
  loss.storage().grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& node = it->storage().node;
    if (node && node->backward) {
      ensure_grad(it->storage());
      node->backward(*it);
    }
  }
}

}  // namespace tslm
