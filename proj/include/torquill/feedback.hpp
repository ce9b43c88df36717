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
#include <vector>

#include "torquill/beam.hpp"
#include "torquill/common.hpp"
#include "torquill/mech.hpp"
#include "torquill/readout.hpp"

/// Measurement-based feedback cooling (cold damping).
///
/// The controller applies tau_fb = G[W] theta_obs with G = -chi_fb^-1. For
/// the ideal derivative filter G = i I W G_fb, which adds G_fb to the
/// mechanical damping rate.
namespace torquill::feedback {

enum class LoopModel { ideal_derivative, bandpass_with_delay };

struct FeedbackConfig {
  double gamma_fb = 0.0;      // rad/s
  double band_low = 34e3;     // Hz
  double band_high = 40e3;    // Hz
  LoopModel model = LoopModel::ideal_derivative;
  double extra_delay = 0.0;   // s, on top of the pi/2 alignment delay
  /// Extra torque noise injected by the actuator path (N^2 m^2/Hz); off by default.
  readout::NoiseDensity loop_torque_noise = 0.0;

  void validate(const mech::OscillatorParams& osc) const;
};

/// G[W] = -chi_fb^-1[W] (N m / rad).
std::complex<double> loop_filter(const FeedbackConfig& fb, const mech::OscillatorParams& osc,
                                 double freq_hz);

std::complex<double> effective_susceptibility(const mech::OscillatorParams& osc,
                                              const FeedbackConfig& fb, double freq_hz);

/// Effective damping at resonance, G0 + Im G[W0] / (I W0).
double effective_damping(const mech::OscillatorParams& osc, const FeedbackConfig& fb);

/// Torque PSD driving the closed loop: thermal + back-action (+ loop noise).
double total_torque_psd(const mech::OscillatorParams& osc, const beam::BeamParams& beam,
                        const readout::ExtraneousNoise& noise, const FeedbackConfig& fb,
                        double freq_hz);

Spectrum closed_loop_observed_psd(const mech::OscillatorParams& osc,
                                  const beam::BeamParams& beam,
                                  const readout::ExtraneousNoise& noise, readout::Lever lever,
                                  const FeedbackConfig& fb, std::span<const double> grid_hz,
                                  Exec exec = Exec::parallel);

Spectrum closed_loop_physical_psd(const mech::OscillatorParams& osc,
                                  const beam::BeamParams& beam,
                                  const readout::ExtraneousNoise& noise, readout::Lever lever,
                                  const FeedbackConfig& fb, std::span<const double> grid_hz,
                                  Exec exec = Exec::parallel);

struct OccupancyEstimate {
  double n_eff = 0.0;
  /// Integrated variance over 2 theta_zp^2, tails included (= n_eff + 1/2).
  double normalized_variance = 0.0;
  double tail_fraction = 0.0;
  bool tail_dominated = false;  // tails carry more than 5% of the variance
  bool degenerate = false;      // raw n_eff < 0, clamped to 0
};

/// n_eff = integral S / (2 theta_zp^2) df - 1/2. Lorentzian tails
/// S ~ A / (f - f_c)^2 beyond both grid edges are added analytically, the
/// lower one truncated at f = 0. `center_hz` <= 0 picks the spectral maximum.
OccupancyEstimate occupancy_from_spectrum(const Spectrum& phys, double theta_zp,
                                          double center_hz = 0.0);

enum class OccupancyModel {
  full,        // (n_th + n_ba + 1/2) G0/Geff + n_imp Geff/G0 - 1/2
  simplified,  // n_th G0/Geff + n_imp Geff/G0
};

double occupancy_closed_form(double n_th, double n_ba, double n_imp, double gamma0,
                             double gamma_eff, OccupancyModel model = OccupancyModel::full);

/// Occupation numbers that set the cooling curve.
struct OperatingPoint {
  double n_th;
  double n_ba;
  double n_imp;
  double gamma0;
  double s_imp;  // rad^2/Hz at W0
};

OperatingPoint operating_point(const mech::OscillatorParams& osc, const beam::BeamParams& beam,
                               const readout::ExtraneousNoise& noise, readout::Lever lever);

struct CoolingOptimum {
  double gamma_eff;
  double n_eff;
};

/// Minimizer of the full closed form, G0 sqrt((n_th + n_ba + 1/2) / n_imp).
CoolingOptimum closed_form_optimum(const OperatingPoint& op);

struct CoolingPoint {
  double gamma_fb = 0.0;
  double gamma_eff = 0.0;
  double n_eff = 0.0;              // from the integrated physical spectrum
  double n_eff_closed_form = 0.0;
  double n_thermal_term = 0.0;     // n_th G0 / Geff
  double n_imprecision_term = 0.0; // n_imp Geff / G0
  double n_backaction_term = 0.0;  // n_ba G0 / Geff
  bool tail_dominated = false;
};

/// Linear grid spanning +-`half_widths` effective linewidths about W0,
/// clipped below at 1e-3 W0.
std::vector<double> resonance_window(const mech::OscillatorParams& osc, double gamma_eff,
                                     std::size_t points, double half_widths = 50.0);

struct SweepOptions {
  std::size_t window_points = 4001;
  double half_widths = 50.0;
  FeedbackConfig base;  // gamma_fb is overwritten per point
};

std::vector<CoolingPoint> gain_sweep(const mech::OscillatorParams& osc,
                                     const beam::BeamParams& beam,
                                     const readout::ExtraneousNoise& noise, readout::Lever lever,
                                     std::span<const double> gains, const SweepOptions& options = {},
                                     Exec exec = Exec::parallel);

}  // namespace torquill::feedback
