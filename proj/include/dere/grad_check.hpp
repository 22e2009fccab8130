// Copyright 2026 The dere Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DERE_GRAD_CHECK_HPP_
#define DERE_GRAD_CHECK_HPP_

#include <functional>
#include <string>

#include "dere/param_store.hpp"
#include "dere/tensor.hpp"

namespace dere::ad {

struct GradCheckOptions {
  Scalar step = 1e-5;
  Scalar tolerance = 1e-4;
  /// Lower bound on the relative-error denominator so that gradients that
  /// are zero up to round-off do not blow up the ratio.
  Scalar denominator_floor = 1e-6;
};

struct GradCheckReport {
  Scalar max_relative_error = 0.0;
  Index worst_index = -1;
  std::string worst_parameter;
  Index coordinates = 0;
  bool non_finite = false;
  bool passed = false;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor)
Scalar relative_error(Scalar analytic, Scalar numeric, Scalar floor);

/// Compares the tape gradient of a scalar function at `x` against central
/// differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Matrix& x,
                           const GradCheckOptions& options = {});

/// Same check over every parameter in `params`; `f` rebuilds the graph from
/// the current parameter values on each call. Parameter values are restored.
GradCheckReport grad_check_params(const std::function<Tensor()>& f, ParamStore& params,
                                  const GradCheckOptions& options = {});

}  // namespace dere::ad

#endif  // DERE_GRAD_CHECK_HPP_
