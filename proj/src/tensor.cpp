#include "adsorbtext/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Core>

#include "adsorbtext/io.hpp"

namespace adsorbtext::tensor {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

constexpr Real kNegInf = -std::numeric_limits<Real>::infinity();

ConstMatMap view(const Storage& s, std::size_t rows, std::size_t cols) {
  return ConstMatMap(s.value.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

std::vector<Real>& grad_of(Storage& s) {
  if (s.grad.empty()) s.grad.assign(s.value.size(), 0.0);
  return s.grad;
}

MatMap grad_view(Storage& s, std::size_t rows, std::size_t cols) {
  return MatMap(grad_of(s).data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

bool tracks(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape.enabled()) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Tracked outputs carry a zero gradient up front so backward closures can
// read it even when nothing downstream contributed.
Tensor make_output(std::vector<std::size_t> shape, bool requires_grad) {
  auto t = Tensor::zeros(std::move(shape), requires_grad);
  if (requires_grad) t.grad();
  return t;
}

std::vector<std::size_t> matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

void require(bool ok, const char* what) {
  if (!ok) throw Error(std::string("tensor: ") + what);
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  auto s = std::make_shared<Storage>();
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  s->shape = std::move(shape);
  s->value.assign(n, 0.0);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<Real> values, bool requires_grad) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  require(n == values.size(), "value count does not match shape");
  auto s = std::make_shared<Storage>();
  s->shape = std::move(shape);
  s->value = std::move(values);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

Real Tensor::item() const {
  require(size() == 1, "item() on a tensor with more than one element");
  return s_->value[0];
}

std::span<Real> Tensor::grad() { return grad_of(*s_); }

void Tensor::zero_grad() { std::fill(s_->grad.begin(), s_->grad.end(), 0.0); }

Tensor Tensor::clone() const {
  return from(s_->shape, s_->value, s_->requires_grad);
}

void Tape::record(std::function<void()> fn) {
  if (enabled_) ops_.push_back(std::move(fn));
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw Error("backward: tape already consumed");
  if (loss.size() != 1) throw Error("backward: loss must be a scalar");
  consumed_ = true;
  grad_of(*loss.storage())[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul shape mismatch");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  auto out = make_output(matrix_shape(m, n), tracks(tape, {&a, &b}));
  MatMap(out.values().data(), m, n).noalias() = view(*a.storage(), m, k) * view(*b.storage(), k, n);
  if (out.requires_grad()) {
    tape.record([sa = a.storage(), sb = b.storage(), so = out.storage(), m, k, n] {
      auto dc = ConstMatMap(so->grad.data(), m, n);
      if (sa->requires_grad) grad_view(*sa, m, k).noalias() += dc * view(*sb, k, n).transpose();
      if (sb->requires_grad) grad_view(*sb, k, n).noalias() += view(*sa, m, k).transpose() * dc;
    });
  }
  return out;
}

Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.cols() == b.cols(), "matmul_nt shape mismatch");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  auto out = make_output(matrix_shape(m, n), tracks(tape, {&a, &b}));
  MatMap(out.values().data(), m, n).noalias() = view(*a.storage(), m, k) * view(*b.storage(), n, k).transpose();
  if (out.requires_grad()) {
    tape.record([sa = a.storage(), sb = b.storage(), so = out.storage(), m, k, n] {
      auto dc = ConstMatMap(so->grad.data(), m, n);
      if (sa->requires_grad) grad_view(*sa, m, k).noalias() += dc * view(*sb, n, k);
      if (sb->requires_grad) grad_view(*sb, n, k).noalias() += dc.transpose() * view(*sa, m, k);
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add shape mismatch");
  auto out = make_output(a.shape(), tracks(tape, {&a, &b}));
  auto o = out.values();
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  if (out.requires_grad()) {
    tape.record([sa = a.storage(), sb = b.storage(), so = out.storage()] {
      for (auto* s : {sa.get(), sb.get()}) {
        if (!s->requires_grad) continue;
        auto& g = grad_of(*s);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += so->grad[i];
      }
    });
  }
  return out;
}

Tensor add_bias(Tape& tape, const Tensor& a, const Tensor& bias) {
  require(bias.size() == a.cols(), "add_bias width mismatch");
  const std::size_t m = a.rows(), n = a.cols();
  auto out = make_output(a.shape(), tracks(tape, {&a, &bias}));
  auto o = out.values();
  auto av = a.values(), bv = bias.values();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) o[r * n + c] = av[r * n + c] + bv[c];
  if (out.requires_grad()) {
    tape.record([sa = a.storage(), sb = bias.storage(), so = out.storage(), m, n] {
      if (sa->requires_grad) {
        auto& g = grad_of(*sa);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += so->grad[i];
      }
      if (sb->requires_grad) {
        auto& g = grad_of(*sb);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) g[c] += so->grad[r * n + c];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, Real factor) {
  auto out = make_output(a.shape(), tracks(tape, {&a}));
  auto o = out.values();
  auto av = a.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * factor;
  if (out.requires_grad()) {
    tape.record([sa = a.storage(), so = out.storage(), factor] {
      auto& g = grad_of(*sa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * so->grad[i];
    });
  }
  return out;
}

Tensor softmax(Tape& tape, const Tensor& x, int axis) {
  require(axis == 0 || axis == 1, "softmax axis must be 0 or 1");
  const std::size_t m = x.rows(), n = x.cols();
  // Walk "lines" along the softmax axis: line l, element e -> flat index.
  const std::size_t lines = axis == 1 ? m : n, len = axis == 1 ? n : m;
  const std::size_t line_stride = axis == 1 ? n : 1, elem_stride = axis == 1 ? 1 : n;
  auto out = make_output(x.shape(), tracks(tape, {&x}));
  auto xv = x.values();
  auto y = out.values();
  for (std::size_t l = 0; l < lines; ++l) {
    const std::size_t base = l * line_stride;
    Real mx = kNegInf;
    for (std::size_t e = 0; e < len; ++e) mx = std::max(mx, xv[base + e * elem_stride]);
    if (mx == kNegInf) continue;  // fully masked line stays zero
    Real z = 0.0;
    for (std::size_t e = 0; e < len; ++e) {
      Real v = std::exp(xv[base + e * elem_stride] - mx);
      y[base + e * elem_stride] = v;
      z += v;
    }
    for (std::size_t e = 0; e < len; ++e) y[base + e * elem_stride] /= z;
  }
  if (out.requires_grad()) {
    tape.record([sx = x.storage(), so = out.storage(), lines, len, line_stride, elem_stride] {
      auto& g = grad_of(*sx);
      const auto& yv = so->value;
      const auto& dy = so->grad;
      for (std::size_t l = 0; l < lines; ++l) {
        const std::size_t base = l * line_stride;
        Real dot = 0.0;
        for (std::size_t e = 0; e < len; ++e) dot += dy[base + e * elem_stride] * yv[base + e * elem_stride];
        for (std::size_t e = 0; e < len; ++e) {
          const std::size_t i = base + e * elem_stride;
          g[i] += yv[i] * (dy[i] - dot);
        }
      }
    });
  }
  return out;
}

Tensor mask_columns(Tape& tape, const Tensor& x, std::span<const std::uint8_t> keep) {
  require(keep.size() == x.cols(), "mask_columns width mismatch");
  const std::size_t m = x.rows(), n = x.cols();
  auto out = make_output(x.shape(), tracks(tape, {&x}));
  auto o = out.values();
  auto xv = x.values();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) o[r * n + c] = keep[c] ? xv[r * n + c] : kNegInf;
  if (out.requires_grad()) {
    std::vector<std::uint8_t> k(keep.begin(), keep.end());
    tape.record([sx = x.storage(), so = out.storage(), k = std::move(k), m, n] {
      auto& g = grad_of(*sx);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c)
          if (k[c]) g[r * n + c] += so->grad[r * n + c];
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  const std::size_t m = x.rows(), n = x.cols();
  require(n >= 2, "layer_norm needs at least two features");
  require(gain.size() == n && bias.size() == n, "layer_norm parameter width mismatch");
  require(eps > 0.0, "layer_norm eps must be positive");
  auto out = make_output(x.shape(), tracks(tape, {&x, &gain, &bias}));
  std::vector<Real> xhat(m * n), rstd(m);
  auto xv = x.values(), gv = gain.values(), bv = bias.values();
  auto y = out.values();
  for (std::size_t r = 0; r < m; ++r) {
    Real mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += xv[r * n + c];
    mean /= static_cast<Real>(n);
    Real var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      Real d = xv[r * n + c] - mean;
      var += d * d;
    }
    var /= static_cast<Real>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (xv[r * n + c] - mean) * rstd[r];
      y[r * n + c] = gv[c] * xhat[r * n + c] + bv[c];
    }
  }
  if (out.requires_grad()) {
    tape.record([sx = x.storage(), sg = gain.storage(), sb = bias.storage(), so = out.storage(),
                 xhat = std::move(xhat), rstd = std::move(rstd), m, n] {
      const auto& dy = so->grad;
      if (sg->requires_grad || sb->requires_grad) {
        auto& gg = grad_of(*sg);
        auto& gb = grad_of(*sb);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < n; ++c) {
            gg[c] += dy[r * n + c] * xhat[r * n + c];
            gb[c] += dy[r * n + c];
          }
      }
      if (!sx->requires_grad) return;
      auto& gx = grad_of(*sx);
      const auto& g = sg->value;
      for (std::size_t r = 0; r < m; ++r) {
        Real mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          Real d = dy[r * n + c] * g[c];
          mean_d += d;
          mean_dx += d * xhat[r * n + c];
        }
        mean_d /= static_cast<Real>(n);
        mean_dx /= static_cast<Real>(n);
        for (std::size_t c = 0; c < n; ++c) {
          Real d = dy[r * n + c] * g[c];
          gx[r * n + c] += rstd[r] * (d - mean_d - xhat[r * n + c] * mean_dx);
        }
      }
    });
  }
  return out;
}

Tensor gelu(Tape& tape, const Tensor& x, GeluKind kind) {
  auto out = make_output(x.shape(), tracks(tape, {&x}));
  auto xv = x.values();
  auto y = out.values();
  constexpr Real kAlpha = 0.044715;
  const Real k = std::sqrt(2.0 / std::numbers::pi);
  for (std::size_t i = 0; i < y.size(); ++i) {
    Real v = xv[i];
    if (kind == GeluKind::tanh_approx)
      y[i] = 0.5 * v * (1.0 + std::tanh(k * (v + kAlpha * v * v * v)));
    else
      y[i] = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  }
  if (out.requires_grad()) {
    tape.record([sx = x.storage(), so = out.storage(), kind, k] {
      auto& g = grad_of(*sx);
      for (std::size_t i = 0; i < g.size(); ++i) {
        Real v = sx->value[i], d;
        if (kind == GeluKind::tanh_approx) {
          Real t = std::tanh(k * (v + kAlpha * v * v * v));
          d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * kAlpha * v * v);
        } else {
          Real cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
          Real pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
          d = cdf + v * pdf;
        }
        g[i] += d * so->grad[i];
      }
    });
  }
  return out;
}

Tensor tanh(Tape& tape, const Tensor& x) {
  auto out = make_output(x.shape(), tracks(tape, {&x}));
  auto xv = x.values();
  auto y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(xv[i]);
  if (out.requires_grad()) {
    tape.record([sx = x.storage(), so = out.storage()] {
      auto& g = grad_of(*sx);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += (1.0 - so->value[i] * so->value[i]) * so->grad[i];
    });
  }
  return out;
}

Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids) {
  const std::size_t n = table.cols(), vocab = table.rows();
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw Error("embedding: id " + std::to_string(id) + " out of range");
  auto out = make_output(matrix_shape(ids.size(), n), tracks(tape, {&table}));
  auto tv = table.values();
  auto o = out.values();
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[r] * n), n, o.begin() + static_cast<std::ptrdiff_t>(r * n));
  if (out.requires_grad()) {
    std::vector<int> idv(ids.begin(), ids.end());
    tape.record([st = table.storage(), so = out.storage(), idv = std::move(idv), n] {
      auto& g = grad_of(*st);
      for (std::size_t r = 0; r < idv.size(); ++r)
        for (std::size_t c = 0; c < n; ++c) g[idv[r] * n + c] += so->grad[r * n + c];
    });
  }
  return out;
}

Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t start, std::size_t count) {
  require(start + count <= x.rows(), "slice_rows out of range");
  const std::size_t n = x.cols();
  auto out = make_output(matrix_shape(count, n), tracks(tape, {&x}));
  auto xv = x.values();
  std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(start * n), count * n, out.values().begin());
  if (out.requires_grad()) {
    tape.record([sx = x.storage(), so = out.storage(), start, count, n] {
      auto& g = grad_of(*sx);
      for (std::size_t i = 0; i < count * n; ++i) g[start * n + i] += so->grad[i];
    });
  }
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t start, std::size_t count) {
  require(start + count <= x.cols(), "slice_cols out of range");
  const std::size_t m = x.rows(), n = x.cols();
  auto out = make_output(matrix_shape(m, count), tracks(tape, {&x}));
  auto xv = x.values();
  auto o = out.values();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < count; ++c) o[r * count + c] = xv[r * n + start + c];
  if (out.requires_grad()) {
    tape.record([sx = x.storage(), so = out.storage(), start, count, m, n] {
      auto& g = grad_of(*sx);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < count; ++c) g[r * n + start + c] += so->grad[r * count + c];
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  bool track = false;
  for (const auto& p : parts) {
    require(p.rows() == m, "concat_cols row mismatch");
    n += p.cols();
    track |= tracks(tape, {&p});
  }
  auto out = make_output(matrix_shape(m, n), track);
  auto o = out.values();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    auto pv = p.values();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < w; ++c) o[r * n + offset + c] = pv[r * w + c];
    offset += w;
  }
  if (track) {
    std::vector<std::shared_ptr<Storage>> ps;
    for (const auto& p : parts) ps.push_back(p.storage());
    tape.record([ps = std::move(ps), so = out.storage(), m, n] {
      std::size_t offset = 0;
      for (const auto& s : ps) {
        const std::size_t w = s->shape.back();
        if (s->requires_grad) {
          auto& g = grad_of(*s);
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < w; ++c) g[r * w + c] += so->grad[r * n + offset + c];
        }
        offset += w;
      }
    });
  }
  return out;
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows of nothing");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  bool track = false;
  for (const auto& p : parts) {
    require(p.cols() == n, "concat_rows column mismatch");
    m += p.rows();
    track |= tracks(tape, {&p});
  }
  auto out = make_output(matrix_shape(m, n), track);
  auto o = out.values();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), o.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.size();
  }
  if (track) {
    std::vector<std::shared_ptr<Storage>> ps;
    for (const auto& p : parts) ps.push_back(p.storage());
    tape.record([ps = std::move(ps), so = out.storage()] {
      std::size_t offset = 0;
      for (const auto& s : ps) {
        if (s->requires_grad) {
          auto& g = grad_of(*s);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += so->grad[offset + i];
        }
        offset += s->value.size();
      }
    });
  }
  return out;
}

Tensor dropout(Tape& tape, const Tensor& x, Real rate, std::mt19937_64* rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0, 1)");
  if (rate == 0.0 || rng == nullptr) return x;
  auto out = make_output(x.shape(), tracks(tape, {&x}));
  std::vector<Real> keep(x.size());
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  const Real inv = 1.0 / (1.0 - rate);
  auto xv = x.values();
  auto o = out.values();
  for (std::size_t i = 0; i < keep.size(); ++i) {
    keep[i] = unit(*rng) >= rate ? inv : 0.0;
    o[i] = xv[i] * keep[i];
  }
  if (out.requires_grad()) {
    tape.record([sx = x.storage(), so = out.storage(), keep = std::move(keep)] {
      auto& g = grad_of(*sx);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += keep[i] * so->grad[i];
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  auto out = make_output({1}, tracks(tape, {&x}));
  Real s = 0.0;
  for (Real v : x.values()) s += v;
  out.values()[0] = s;
  if (out.requires_grad()) {
    tape.record([sx = x.storage(), so = out.storage()] {
      auto& g = grad_of(*sx);
      for (auto& v : g) v += so->grad[0];
    });
  }
  return out;
}

Tensor l1_loss(Tape& tape, const Tensor& pred, std::span<const Real> target) {
  require(pred.size() == target.size() && !target.empty(), "l1_loss size mismatch");
  auto out = make_output({1}, tracks(tape, {&pred}));
  const Real inv_n = 1.0 / static_cast<Real>(target.size());
  Real s = 0.0;
  auto p = pred.values();
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - target[i]);
  out.values()[0] = s * inv_n;
  if (out.requires_grad()) {
    std::vector<Real> t(target.begin(), target.end());
    tape.record([sp = pred.storage(), so = out.storage(), t = std::move(t), inv_n] {
      auto& g = grad_of(*sp);
      for (std::size_t i = 0; i < g.size(); ++i) {
        Real d = sp->value[i] - t[i];
        Real sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        g[i] += sign * inv_n * so->grad[0];
      }
    });
  }
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets) {
  const std::size_t m = logits.rows(), n = logits.cols();
  require(targets.size() == m && m > 0, "cross_entropy target count mismatch");
  for (int t : targets) require(t >= 0 && static_cast<std::size_t>(t) < n, "cross_entropy target out of range");
  auto out = make_output({1}, tracks(tape, {&logits}));
  std::vector<Real> prob(m * n);
  auto lv = logits.values();
  Real total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    Real mx = kNegInf;
    for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, lv[r * n + c]);
    Real z = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      prob[r * n + c] = std::exp(lv[r * n + c] - mx);
      z += prob[r * n + c];
    }
    for (std::size_t c = 0; c < n; ++c) prob[r * n + c] /= z;
    total += mx + std::log(z) - lv[r * n + static_cast<std::size_t>(targets[r])];
  }
  out.values()[0] = total / static_cast<Real>(m);
  if (out.requires_grad()) {
    std::vector<int> t(targets.begin(), targets.end());
    tape.record([sl = logits.storage(), so = out.storage(), prob = std::move(prob), t = std::move(t), m, n] {
      auto& g = grad_of(*sl);
      const Real w = so->grad[0] / static_cast<Real>(m);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c)
          g[r * n + c] += w * (prob[r * n + c] - (static_cast<int>(c) == t[r] ? 1.0 : 0.0));
    });
  }
  return out;
}

}  // namespace adsorbtext::tensor
