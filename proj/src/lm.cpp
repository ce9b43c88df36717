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

#include "lm.hpp"

#include <cmath>
#include <sstream>

namespace torquill::detail {

namespace {
Eigen::VectorXd project(const LmProblem& p, Eigen::VectorXd x) {
  if (p.lower.size() == x.size()) x = x.cwiseMax(p.lower);
  if (p.upper.size() == x.size()) x = x.cwiseMin(p.upper);
  return x;
}
}  // namespace

LmResult levenberg_marquardt(const LmProblem& problem, Eigen::VectorXd start,
                             const LmOptions& options) {
  LmResult out;
  Eigen::VectorXd x = project(problem, std::move(start));
  Eigen::VectorXd r = problem.residuals(x);
  double cost = r.squaredNorm();
  if (!std::isfinite(cost)) {
    out.params = x;
    out.cost = cost;
    out.message = "non-finite residuals at the starting point";
    return out;
  }
  double lambda = options.initial_lambda;
  Eigen::MatrixXd jac = problem.jacobian(x);
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;
    bool accepted = false;
    double rel_step = 0.0;
    while (lambda < 1e16) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
      const Eigen::VectorXd step = a.ldlt().solve(-grad);
      const Eigen::VectorXd trial = project(problem, x + step);
      const Eigen::VectorXd r_trial = problem.residuals(trial);
      const double c_trial = r_trial.squaredNorm();
      if (std::isfinite(c_trial) && c_trial <= cost) {
        rel_step = (trial - x).norm() / (x.norm() + options.step_tolerance);
        const double drop = cost - c_trial;
        x = trial;
        r = r_trial;
        accepted = true;
        lambda = std::max(lambda / 10.0, 1e-12);
        if (drop <= options.cost_tolerance * (cost + 1e-300)) rel_step = 0.0;
        cost = c_trial;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No descent direction left: at a (possibly bound-constrained) minimum.
      out.converged = true;
      break;
    }
    jac = problem.jacobian(x);
    if (rel_step < options.step_tolerance) {
      out.converged = true;
      ++it;
      break;
    }
  }
  out.params = x;
  out.cost = cost;
  out.iterations = it;
  const Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
  if (lu.isInvertible()) {
    out.covariance = lu.inverse();
    const auto dof = r.size() - x.size();
    if (dof > 0) out.covariance *= cost / static_cast<double>(dof);
  } else {
    out.covariance = Eigen::MatrixXd::Constant(x.size(), x.size(), std::nan(""));
  }
  if (!out.converged) {
    std::ostringstream msg;
    msg << "no convergence after " << it << " iterations, cost " << cost;
    out.message = msg.str();
  }
  return out;
}

}  // namespace torquill::detail
