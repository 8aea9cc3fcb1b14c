// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "poslab/tensor.hpp"

namespace poslab {

/// Relative errors are |analytic - numeric| / max(|analytic|, |numeric|, floor).
/// The floor turns the comparison absolute for coordinates whose gradient is
/// below the round-off level of a central difference in double precision.
inline constexpr double kGradCheckFloor = 1e-5;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t tensor_index = 0;  // which input held the worst coordinate
  std::size_t flat_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

/// Compares backward() gradients of a scalar `loss` against central finite
/// differences with step h for every coordinate of each input (or an evenly
/// strided subset of at most `max_coords` per input when nonzero). `loss` is
/// re-evaluated on perturbed inputs, so it must read their current values.
GradCheckReport grad_check_inputs(const std::function<Tensor<double>()>& loss,
                                  std::vector<Tensor<double>> inputs, double h = 1e-5,
                                  std::size_t max_coords = 0);

/// Single-input form: max relative error of d f / d point.
double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                  const Tensor<double>& point, double h = 1e-5);

}  // namespace poslab
