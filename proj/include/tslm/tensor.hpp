#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tslm/rng.hpp"

namespace tslm {

// Compute precision. f32 rounds every produced value (outputs, gradients,
// optimizer state) through IEEE single precision; f64 keeps full doubles
// and is used by the gradient-check harness.
enum class Precision { f32, f64 };

Precision current_precision();

// RAII scope for switching precision.
class PrecisionGuard {
 public:
  explicit PrecisionGuard(Precision p);
  ~PrecisionGuard();
  PrecisionGuard(const PrecisionGuard&) = delete;
  PrecisionGuard& operator=(const PrecisionGuard&) = delete;

 private:
  Precision saved_;
};

bool grad_enabled();

// RAII scope that disables graph construction (inference / frozen models).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

class Tensor;

namespace detail {

struct Node {
  std::vector<Tensor> parents;
  // Accumulates into parents' grads given the output tensor.
  std::function<void(const Tensor&)> backward;
  const char* op = "";
};

struct Storage {
  std::vector<std::int64_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated lazily, same length as values
  bool requires_grad = false;
  Precision precision = Precision::f32;
  std::shared_ptr<Node> node;  // null for leaves
};

double round_to(double v, Precision p);

}  // namespace detail

// Dense row-major tensor with reverse-mode autodiff. Value-semantic handle:
// copies share storage, so a model struct can hand the same parameter to
// several consumers and one optimizer step updates all of them.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::int64_t> shape, double value, bool requires_grad = false);
  // Validates that every value is finite; this is the boundary where
  // external data enters the tensor world.
  static Tensor from_values(std::vector<std::int64_t> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // uniform(lo, hi) entries drawn from rng.
  static Tensor rand_uniform(std::vector<std::int64_t> shape, double lo, double hi, Rng& rng,
                             bool requires_grad = false);

  bool defined() const { return static_cast<bool>(s_); }
  const std::vector<std::int64_t>& shape() const { return s_->shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(s_->shape.size()); }
  std::int64_t dim(std::int64_t i) const { return s_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(s_->values.size()); }
  bool requires_grad() const { return s_->requires_grad; }
  Precision precision() const { return s_->precision; }

  std::span<const double> values() const { return s_->values; }
  std::span<double> mutable_values() { return s_->values; }
  std::span<const double> grad() const;

  double at(std::int64_t i) const;
  double at(std::int64_t i, std::int64_t j) const;
  double at(std::int64_t i, std::int64_t j, std::int64_t k) const;
  // Scalar extraction; throws ContractError when not a 1-element tensor.
  double value() const;

  void zero_grad();
  // Same values, detached from the graph, never requiring grad.
  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

  // internal
  detail::Storage& storage() const { return *s_; }
  static Tensor wrap(std::shared_ptr<detail::Storage> s) {
    Tensor t;
    t.s_ = std::move(s);
    return t;
  }

 private:
  std::shared_ptr<detail::Storage> s_;
};

// ---- differentiable operations -------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// (rows x cols) + (cols,) broadcast over rows.
Tensor add_row(const Tensor& m, const Tensor& row);
// (rows x cols) + (rows,) broadcast over columns (per-channel bias).
Tensor add_col(const Tensor& m, const Tensor& col);
// Same data, new shape with equal element count.
Tensor reshape(const Tensor& a, std::vector<std::int64_t> shape);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// Numerically stabilized; each slice along `axis` sums to 1.
Tensor softmax(const Tensor& x, std::int64_t axis);
// input (c_in x L), kernels (c_out x c_in x k) -> (c_out x L_out),
// L_out = floor((L + 2 pad - k) / stride) + 1, zero padding.
Tensor conv1d(const Tensor& input, const Tensor& kernels, std::int64_t stride,
              std::int64_t padding);
// Adjoint of conv1d with the same stride/padding. input (c_in x L),
// kernels (c_in x c_out x k) -> (c_out x L_out),
// L_out = (L-1) stride - 2 pad + k + output_padding.
Tensor conv1d_transpose(const Tensor& input, const Tensor& kernels, std::int64_t stride,
                        std::int64_t padding, std::int64_t output_padding);
// Mean negative log-likelihood over non-pad positions. logits (T x V),
// targets.size() == T; positions whose target == pad_id are skipped.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& targets,
                     std::int64_t pad_id);
// Mean absolute difference.
Tensor l1_loss(const Tensor& pred, const Tensor& target);
// Per-row layer norm: x (rows x cols), gamma/beta (cols,).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::int64_t start, std::int64_t count);
// table (V x d), ids -> (ids.size() x d); gradient scatter-adds into table.
Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& ids);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
// Mean of scalar tensors (batch loss aggregation).
Tensor mean_scalars(const std::vector<Tensor>& losses);

// Populates gradients for every requires_grad leaf reachable from `loss`.
// Deterministic accumulation order; throws ContractError on non-scalar root.
void backward(const Tensor& loss);

}  // namespace tslm
