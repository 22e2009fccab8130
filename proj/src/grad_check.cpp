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

#include "dere/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "dere/error.hpp"

namespace dere::ad {
namespace {

// Folds one coordinate into the report. Returns false on a non-finite value.
bool record(GradCheckReport& report, Scalar analytic, Scalar numeric, Index index,
            const std::string& name, Scalar floor) {
  ++report.coordinates;
  if (!std::isfinite(analytic) || !std::isfinite(numeric)) {
    report.non_finite = true;
    report.worst_index = index;
    report.worst_parameter = name;
    report.max_relative_error = std::numeric_limits<Scalar>::infinity();
    return false;
  }
  const Scalar err = relative_error(analytic, numeric, floor);
  if (err > report.max_relative_error || report.worst_index < 0) {
    report.max_relative_error = std::max(report.max_relative_error, err);
    report.worst_index = index;
    report.worst_parameter = name;
  }
  return true;
}

}  // namespace

Scalar relative_error(Scalar analytic, Scalar numeric, Scalar floor) {
  const Scalar denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Matrix& x,
                           const GradCheckOptions& options) {
  if (!(options.step > 0)) throw ConfigError("grad_check: step must be positive");
  Tensor leaf(x, true);
  Tensor y = f(leaf);
  if (y.rows() != 1 || y.cols() != 1) throw ShapeError("grad_check: f must be scalar-valued");
  backward(y);
  const Matrix analytic = leaf.grad();

  GradCheckReport report;
  Matrix probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar orig = probe.data()[i];
    probe.data()[i] = orig + options.step;
    const Scalar up = f(Tensor(probe)).item();
    probe.data()[i] = orig - options.step;
    const Scalar down = f(Tensor(probe)).item();
    probe.data()[i] = orig;
    const Scalar numeric = (up - down) / (2.0 * options.step);
    if (!record(report, analytic.data()[i], numeric, i, "x", options.denominator_floor)) break;
  }
  report.passed = !report.non_finite && report.max_relative_error <= options.tolerance;
  return report;
}

GradCheckReport grad_check_params(const std::function<Tensor()>& f, ParamStore& params,
                                  const GradCheckOptions& options) {
  if (!(options.step > 0)) throw ConfigError("grad_check: step must be positive");
  params.zero_grad();
  Tensor y = f();
  if (y.rows() != 1 || y.cols() != 1) throw ShapeError("grad_check: f must be scalar-valued");
  backward(y);

  GradCheckReport report;
  for (auto& [name, tensor] : params) {
    const Matrix analytic = tensor.grad();
    Matrix& v = tensor.mutable_value();
    for (Index i = 0; i < v.size(); ++i) {
      const Scalar orig = v.data()[i];
      v.data()[i] = orig + options.step;
      const Scalar up = f().item();
      v.data()[i] = orig - options.step;
      const Scalar down = f().item();
      v.data()[i] = orig;
      const Scalar numeric = (up - down) / (2.0 * options.step);
      if (!record(report, analytic.data()[i], numeric, i, name, options.denominator_floor)) {
        report.passed = false;
        params.zero_grad();
        return report;
      }
    }
  }
  params.zero_grad();
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace dere::ad
