#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "adsorbtext/tensor.hpp"

namespace testing {

struct GradCheck {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double max_error = 0.0;
  /// (analytic, numeric) for every checked element.
  std::vector<std::pair<double, double>> values;

  std::size_t failures(double tol, double floor) const {
    std::size_t n = 0;
    for (auto [a, num] : values)
      n += std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor}) > tol;
    return n;
  }
};

// Central differences against the tape gradient for every element of every
// input. Error is |a - n| / max(|a|, |n|, floor).
inline GradCheck grad_check(const std::vector<adsorbtext::tensor::Tensor>& inputs,
                            const std::function<adsorbtext::tensor::Tensor(adsorbtext::tensor::Tape&)>& loss_fn,
                            double h = 1e-5, double tol = 1e-6, double floor = 1e-8) {
  using namespace adsorbtext::tensor;
  for (auto t : inputs) t.zero_grad();
  {
    Tape tape;
    auto loss = loss_fn(tape);
    tape.backward(loss);
  }
  std::vector<std::vector<Real>> analytic;
  for (auto t : inputs) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
  }
  GradCheck out;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    auto t = inputs[p];
    auto vals = t.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const Real orig = vals[i];
      vals[i] = orig + h;
      Tape up = Tape::inference();
      const Real fp = loss_fn(up).item();
      vals[i] = orig - h;
      Tape down = Tape::inference();
      const Real fm = loss_fn(down).item();
      vals[i] = orig;
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic[p][i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.checked;
      out.values.emplace_back(a, numeric);
      if (err > tol) ++out.failed;
      out.max_error = std::max(out.max_error, err);
    }
  }
  return out;
}

inline adsorbtext::tensor::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                                                double scale = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return adsorbtext::tensor::Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace testing
