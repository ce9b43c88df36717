// Copyright 2026 The Torquill Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace torquill::detail {

/// Bounded Levenberg-Marquardt on a residual vector with analytic Jacobian.
/// Steps are projected onto the box [lower, upper].
struct LmProblem {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residuals;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  Eigen::VectorXd lower;  // empty for unbounded
  Eigen::VectorXd upper;
};

struct LmOptions {
  int max_iterations = 200;
  double step_tolerance = 1e-12;
  double cost_tolerance = 1e-15;
  double initial_lambda = 1e-3;
};

struct LmResult {
  Eigen::VectorXd params;
  /// (J^T J)^-1 scaled by the reduced chi-square when dof > 0.
  Eigen::MatrixXd covariance;
  double cost = 0.0;  // sum of squared residuals
  int iterations = 0;
  bool converged = false;
  std::string message;
};

LmResult levenberg_marquardt(const LmProblem& problem, Eigen::VectorXd start,
                             const LmOptions& options = {});

}  // namespace torquill::detail
