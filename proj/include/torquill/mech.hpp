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
#include <span>

#include "torquill/common.hpp"

/// Mechanics of the fundamental torsional mode.
///
/// Sign convention: the susceptibility is
///   chi0[W] = 1 / (I (W0^2 - W^2 - i W G0[W]))
/// so that Im chi0 > 0 for W > 0 and the fluctuation-dissipation spectrum is
/// non-negative. Damping is structural, G0[W] = (W0/Q)(W0/W), so every
/// spectral quantity is defined only for strictly positive frequencies.
///
/// PSDs are one-sided and symmetrized, per Hz: the variance of a signal is
/// the integral of its PSD over f = W/2pi on (0, inf). Grids are in Hz and
/// the 2pi conversion happens inside each pointwise evaluator.
namespace torquill::mech {

struct OscillatorParams {
  double omega0 = 0.0;          // rad/s
  double quality_factor = 0.0;
  double inertia = 0.0;         // kg m^2
  double temperature = 0.0;     // K

  /// Builds params from a resonance frequency in Hz.
  static OscillatorParams from_frequency(double f0_hz, double q, double inertia,
                                         double temperature);

  void validate() const;

  double frequency_hz() const noexcept { return omega0 / constants::two_pi; }
  double theta_zp() const noexcept;
  /// Damping rate at resonance, W0/Q.
  double gamma0() const noexcept { return omega0 / quality_factor; }
  /// Structural damping rate at angular frequency `omega`.
  double gamma0_at(double omega) const noexcept { return gamma0() * omega0 / omega; }
};

struct MaterialGeometry {
  double stress = 0.0;          // Pa
  double youngs_modulus = 272e9;  // Pa, Si3N4 default
  double width = 0.0;           // m
  double thickness = 0.0;       // m
  double q_intrinsic = 0.0;

  void validate() const;
};

enum class OccupancyMode { exact, high_temperature };

std::complex<double> susceptibility(const OscillatorParams& osc, double freq_hz);

/// I (W0^2 - W^2 - i W G0[W]); cancellation-free near resonance.
std::complex<double> inverse_susceptibility(const OscillatorParams& osc, double freq_hz);

double thermal_occupancy(double temperature, double freq_hz,
                         OccupancyMode mode = OccupancyMode::exact);

/// Thermal plus zero-point torque PSD, 4 hbar (n + 1/2) |Im chi0^-1|.
double thermal_torque_psd(const OscillatorParams& osc, double freq_hz);

/// 4 hbar (n_th + 1/2) Im chi0 at one frequency.
double intrinsic_psd(const OscillatorParams& osc, double freq_hz);

Spectrum intrinsic_spectrum(const OscillatorParams& osc, std::span<const double> grid_hz,
                            Exec exec = Exec::parallel);

/// 4 theta_zp^2 / G0.
double zero_point_peak(const OscillatorParams& osc);

struct Dilution {
  double factor;    // D_Q
  double q_diluted; // Q_int D_Q
};

Dilution dilution_factor(const MaterialGeometry& geom);

/// I (2/w)^2.
double effective_mass(double inertia, double width);

/// rho L h w^3 / 24 for an ideal thin rectangular ribbon.
double plate_inertia(double density, double length, double thickness, double width);

}  // namespace torquill::mech
