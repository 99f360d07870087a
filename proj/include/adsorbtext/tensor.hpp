#pragma once

// Dense rank-1/rank-2 tensors with a define-by-run reverse-mode tape.
//
// Every op takes the Tape it should record on. A disabled tape (Tape::inference())
// runs the forward computation only. Backward closures run in exact reverse
// recording order and accumulate into input gradients additively.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace adsorbtext::tensor {

using Real = double;

struct Storage {
  std::vector<std::size_t> shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until first accumulation
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor from(std::vector<std::size_t> shape, std::vector<Real> values, bool requires_grad = false);
  static Tensor scalar(Real v, bool requires_grad = false) { return from({1}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(s_); }
  const std::vector<std::size_t>& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  /// Rank-1 tensors behave as a single row.
  std::size_t rows() const { return rank() == 2 ? s_->shape[0] : 1; }
  std::size_t cols() const { return s_->shape.back(); }
  std::size_t size() const { return s_->value.size(); }

  std::span<Real> values() { return s_->value; }
  std::span<const Real> values() const { return s_->value; }
  Real& operator()(std::size_t r, std::size_t c) { return s_->value[r * cols() + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return s_->value[r * cols() + c]; }
  Real item() const;

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on) { s_->requires_grad = on; }
  bool has_grad() const { return !s_->grad.empty(); }
  /// Allocates a zero gradient on first use.
  std::span<Real> grad();
  std::span<const Real> grad_or_empty() const { return s_->grad; }
  void zero_grad();

  /// Deep copy of values (no grad, same requires_grad flag).
  Tensor clone() const;

  const std::shared_ptr<Storage>& storage() const { return s_; }

 private:
  explicit Tensor(std::shared_ptr<Storage> s) : s_(std::move(s)) {}
  std::shared_ptr<Storage> s_;
};

class Tape {
 public:
  explicit Tape(bool enabled = true) : enabled_(enabled) {}
  static Tape inference() { return Tape(false); }

  bool enabled() const { return enabled_; }
  std::size_t size() const { return ops_.size(); }
  void record(std::function<void()> backward_fn);

  /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. A tape can be
  /// replayed once; throws Error if `loss` is not a single element or the
  /// tape was already consumed.
  void backward(const Tensor& loss);

 private:
  bool enabled_;
  bool consumed_ = false;
  std::vector<std::function<void()>> ops_;
};

enum class GeluKind { tanh_approx, erf_exact };

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
/// Adds a length-n bias to every row of an [m,n] tensor.
Tensor add_bias(Tape& tape, const Tensor& a, const Tensor& bias);
Tensor scale(Tape& tape, const Tensor& a, Real factor);
/// axis 1 normalises each row, axis 0 each column. -inf inputs map to exactly 0.
Tensor softmax(Tape& tape, const Tensor& x, int axis = 1);
/// Sets columns whose keep flag is 0 to -inf.
Tensor mask_columns(Tape& tape, const Tensor& x, std::span<const std::uint8_t> keep);
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps = 1e-5);
Tensor gelu(Tape& tape, const Tensor& x, GeluKind kind = GeluKind::tanh_approx);
Tensor tanh(Tape& tape, const Tensor& x);
Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids);
Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
/// Inverted dropout; identity when rate == 0 or rng is null.
Tensor dropout(Tape& tape, const Tensor& x, Real rate, std::mt19937_64* rng);
Tensor sum(Tape& tape, const Tensor& x);
/// mean |pred - target| over all elements.
Tensor l1_loss(Tape& tape, const Tensor& pred, std::span<const Real> target);
/// Mean cross-entropy of each logits row against its target class.
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets);

}  // namespace adsorbtext::tensor
