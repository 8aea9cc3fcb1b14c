// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#include "poslab/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace poslab {

GradCheckReport grad_check_inputs(const std::function<Tensor<double>()>& loss,
                                  std::vector<Tensor<double>> inputs, double h,
                                  std::size_t max_coords) {
  std::vector<bool> saved_flags;
  for (auto& t : inputs) {
    saved_flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> l = loss();
    tape.backward(l);
  }
  GradCheckReport report;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor<double>& t = inputs[ti];
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    const std::size_t n = t.numel();
    const std::size_t stride = (max_coords == 0 || n <= max_coords) ? 1 : n / max_coords;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = t.data()[i];
      t.data()[i] = saved + h;
      const double up = loss().item();
      t.data()[i] = saved - h;
      const double down = loss().item();
      t.data()[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckFloor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++report.coordinates_checked;
      if (rel >= report.max_relative_error) {
        report.max_relative_error = rel;
        report.tensor_index = ti;
        report.flat_index = i;
        report.analytic = analytic[i];
        report.numeric = numeric;
      }
    }
  }
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    inputs[ti].set_requires_grad(saved_flags[ti]);
  }
  return report;
}

double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                  const Tensor<double>& point, double h) {
  Tensor<double> x = point.detach();
  return grad_check_inputs([&] { return f(x); }, {x}, h).max_relative_error;
}

}  // namespace poslab
