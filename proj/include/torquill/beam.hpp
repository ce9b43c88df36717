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

#include <complex>

#include "torquill/common.hpp"

/// Hermite-Gaussian beam geometry and first-order mode scattering.
namespace torquill::beam {

struct BeamParams {
  double wavelength = 1064e-9;  // m
  double waist_radius = 0.0;    // m, w0 at the oscillator
  double power = 0.0;           // W
  double efficiency = 1.0;      // eta in (0, 1]
  double gouy_shift = constants::pi / 2.0;  // rad, oscillator -> detector
  double responsivity = 0.0;    // A/W; 0 selects q_e / (hbar w_l)

  void validate() const;

  double wavenumber() const noexcept { return constants::two_pi / wavelength; }
  double photon_energy() const noexcept {
    return constants::hbar * constants::two_pi * constants::c_light / wavelength;
  }
  /// Mean photon flux abar^2 = P / (hbar w_l), photons/s.
  double photon_flux() const noexcept { return power / photon_energy(); }
  double flux_amplitude() const noexcept;
  double rayleigh_length() const noexcept {
    return 0.5 * wavenumber() * waist_radius * waist_radius;
  }
  double effective_responsivity() const noexcept;
};

struct BeamStateAtPlane {
  double axial_position = 0.0;  // z, m
  double radius = 0.0;          // w(z)
  double curvature_radius = 0.0;  // R(z); infinite at the waist
  double gouy = 0.0;            // zeta(z)

  bool flat_phase_front() const noexcept;
};

BeamStateAtPlane propagate(const BeamParams& beam, double z);

/// Physicists' Hermite polynomial H_n(x) by three-term recurrence.
double hermite(int n, double x);

inline constexpr int kMaxHgOrder = 20;

/// Real transverse amplitude u_mn(x, y) at a plane, normalized so that
/// the integral of u_mn^2 over the plane is one.
double hg_amplitude(int m, int n, double x, double y, const BeamStateAtPlane& plane);

struct ScatterResult {
  std::complex<double> coefficient;  // sqrt(photons/s)
  bool linear_regime;                // |dx| << w and |dtheta| << 1/(k w)
};

/// HG10 amplitude generated by a transverse displacement `delta_x` and a
/// tilt `delta_theta` of the fundamental mode applied at the waist,
/// observed at `plane`:
///   abar (dx / w + i k w dtheta / 2) e^{-i zeta}.
ScatterResult scatter_to_hg10(const BeamParams& beam, const BeamStateAtPlane& plane,
                              double delta_x, double delta_theta);

/// Split-detector weight D_k of the odd mode HG_{2k+1,0}. The squares sum
/// to pi/2.
double split_detector_weight(int k);

}  // namespace torquill::beam
