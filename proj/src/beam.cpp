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

#include "torquill/beam.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace torquill::beam {

using constants::pi;

void BeamParams::validate() const {
  if (!(wavelength > 0.0)) throw DomainError("beam.wavelength must be positive");
  if (!(waist_radius > 0.0)) throw DomainError("beam.waist_radius must be positive");
  if (!(power > 0.0)) throw DomainError("beam.power must be positive");
  if (!(efficiency > 0.0 && efficiency <= 1.0)) {
    throw DomainError("beam.efficiency must lie in (0, 1]");
  }
  if (responsivity < 0.0) throw DomainError("beam.responsivity must be non-negative");
}

double BeamParams::flux_amplitude() const noexcept { return std::sqrt(photon_flux()); }

double BeamParams::effective_responsivity() const noexcept {
  if (responsivity > 0.0) return responsivity;
  return constants::q_electron / photon_energy();
}

bool BeamStateAtPlane::flat_phase_front() const noexcept { return std::isinf(curvature_radius); }

BeamStateAtPlane propagate(const BeamParams& beam, double z) {
  const double zr = beam.rayleigh_length();
  const double u = z / zr;
  BeamStateAtPlane s;
  s.axial_position = z;
  s.radius = beam.waist_radius * std::sqrt(1.0 + u * u);
  s.curvature_radius =
      z == 0.0 ? std::numeric_limits<double>::infinity() : z * (1.0 + 1.0 / (u * u));
  s.gouy = std::atan(u);
  return s;
}

double hermite(int n, double x) {
  if (n < 0) throw DomainError("Hermite order must be non-negative");
  if (n == 0) return 1.0;
  double h_prev = 1.0;
  double h = 2.0 * x;
  for (int k = 1; k < n; ++k) {
    const double next = 2.0 * x * h - 2.0 * k * h_prev;
    h_prev = h;
    h = next;
  }
  return h;
}

double hg_amplitude(int m, int n, double x, double y, const BeamStateAtPlane& plane) {
  if (m < 0 || n < 0) throw DomainError("HG orders must be non-negative");
  if (m > kMaxHgOrder || n > kMaxHgOrder) {
    throw DomainError("HG order exceeds " + std::to_string(kMaxHgOrder));
  }
  const double w = plane.radius;
  const double norm = std::sqrt(2.0 / pi) / w /
                      std::sqrt(std::ldexp(std::tgamma(m + 1.0) * std::tgamma(n + 1.0), m + n));
  const double sx = std::sqrt(2.0) * x / w;
  const double sy = std::sqrt(2.0) * y / w;
  return norm * hermite(m, sx) * hermite(n, sy) * std::exp(-(x * x + y * y) / (w * w));
}

ScatterResult scatter_to_hg10(const BeamParams& beam, const BeamStateAtPlane& plane,
                              double delta_x, double delta_theta) {
  // Perturbations are referenced to the waist; propagation only rotates them.
  const double w = beam.waist_radius;
  const double k = beam.wavenumber();
  const std::complex<double> quad(delta_x / w, 0.5 * k * w * delta_theta);
  const auto rotation = std::polar(1.0, -plane.gouy);
  const bool linear = std::abs(delta_x) < 0.1 * w && std::abs(delta_theta) < 0.1 / (k * w);
  return {beam.flux_amplitude() * quad * rotation, linear};
}

double split_detector_weight(int k) {
  if (k < 0) throw DomainError("split detector index must be non-negative");
  // (-1)^k / ((2k+1) k!) * sqrt((2k+1)! / 2^{2k}), in logs to avoid overflow.
  const double log_mag = -std::log(2.0 * k + 1.0) - std::lgamma(k + 1.0) +
                         0.5 * (std::lgamma(2.0 * k + 2.0) - 2.0 * k * std::log(2.0));
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return sign * std::exp(log_mag);
}

}  // namespace torquill::beam
