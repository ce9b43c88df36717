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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "torquill/beam.hpp"
#include "torquill/common.hpp"
#include "torquill/feedback.hpp"
#include "torquill/mech.hpp"
#include "torquill/sim.hpp"

/// Analysis pipeline: spectral estimation, calibration and model fits.
///
/// Fits run on the logarithm of averaged periodograms. For an average of N
/// periodograms the log estimate has mean ln S + psi(N) - ln N and standard
/// deviation close to 1/sqrt(N), so residuals are bias-corrected and
/// weighted by sqrt(N). Model spectra (averages == 0) get unit weight and no
/// correction. Quoted 1-sigma errors come from the Gauss-Newton covariance
/// and are approximate.
namespace torquill::estimate {

enum class Window { hann };

struct WelchOptions {
  std::size_t segment_length = 0;
  double overlap = 0.5;  // fraction in [0, 0.9]
  Window window = Window::hann;
};

/// One-sided PSD by Welch averaging with constant detrend. DC is dropped;
/// `averages` reports the number of segments.
Spectrum welch_psd(const sim::TimeSeries& ts, const WelchOptions& options,
                   Exec exec = Exec::parallel);

/// Averages Welch estimates of equally sampled records of equal length.
Spectrum welch_psd(std::span<const sim::TimeSeries> records, const WelchOptions& options,
                   Exec exec = Exec::parallel);

struct CrossSpectrum {
  std::vector<double> freq_hz;
  std::vector<std::complex<double>> s_ab;
  std::vector<double> s_aa;
  std::vector<double> s_bb;
  std::size_t averages = 0;
};

CrossSpectrum cross_spectrum(const sim::TimeSeries& a, const sim::TimeSeries& b,
                             const WelchOptions& options, Exec exec = Exec::parallel);

/// Magnitude-squared coherence |S_ab|^2 / (S_aa S_bb) in [0, 1].
Spectrum coherence(const sim::TimeSeries& a, const sim::TimeSeries& b,
                   const WelchOptions& options, Exec exec = Exec::parallel);

/// Least-squares amplitude of a sinusoid at `freq_hz` (offset removed).
double tone_amplitude(const sim::TimeSeries& ts, double freq_hz);

enum class CalibrationMethod { aod, thermal_reference };
std::string_view to_string(CalibrationMethod m);

struct CalibrationFactor {
  double rad_per_volt = 0.0;
  double relative_error = 0.0;
  CalibrationMethod method = CalibrationMethod::aod;

  void validate() const;
  /// Volt PSD to angle PSD, S_theta = alpha^2 S_V.
  Spectrum to_angle(const Spectrum& volt_psd) const;
  /// Inverse of to_angle.
  Spectrum to_volt(const Spectrum& angle_psd) const;
};

/// alpha = (lambda / v) depth / (2 V), the beam deflection being twice the
/// mirror tilt. `volt_amplitude` is the detector response to the tone.
CalibrationFactor aod_calibration(double volt_amplitude, double wavelength, double v_acoustic,
                                  double f_depth);

struct AodPoint {
  double f_depth;        // Hz
  double volt_amplitude; // V
};

struct AodLinearFit {
  CalibrationFactor factor;
  double slope = 0.0;      // V per Hz of depth
  double intercept = 0.0;  // V
  double r_squared = 0.0;
};

/// Straight-line fit of detector amplitude against modulation depth.
AodLinearFit aod_calibration_fit(std::span<const AodPoint> points, double wavelength,
                                 double v_acoustic);

struct LorentzianFit {
  double floor = 0.0;     // PSD units of the input
  double peak = 0.0;      // floor-subtracted value at the center
  double center = 0.0;    // Hz
  double q_used = 0.0;
  double residual_norm = 0.0;
  double exclusion_halfwidth = 0.0;  // Hz
  double sigma_floor = 0.0;
  double sigma_peak = 0.0;
  double sigma_center = 0.0;
  std::size_t points_used = 0;
  double grid_lo = 0.0;
  double grid_hi = 0.0;
};

/// Fits floor + peak / (1 + 4 Q^2 (f - f0)^2 / f0^2) with Q held fixed,
/// ignoring |f - f0| < exclusion_halfwidth. A negative exclusion selects
/// three resolution bandwidths; zero keeps every bin. `center_guess` <= 0
/// uses the spectral maximum.
LorentzianFit fit_lorentzian(const Spectrum& spec, double q, double center_guess = 0.0,
                             double exclusion_halfwidth = -1.0);

/// T = S_peak I W0^3 / (4 k_B Q) with W0 = 2 pi center.
double mode_temperature(const LorentzianFit& fit, double inertia);

/// I = 4 k_B T Q / (S_peak W0^3).
double infer_inertia(const LorentzianFit& fit, double temperature, double omega0, double q);

/// Two-step calibration: the thermal peak of a volt PSD is matched to the
/// model angle PSD of `osc`, alpha^2 = S_int(W0) / peak.
CalibrationFactor thermal_reference_calibration(const Spectrum& volt_spectrum,
                                                const mech::OscillatorParams& osc,
                                                double exclusion_halfwidth = -1.0);

struct RingdownOptions {
  double omega0 = 0.0;         // rad/s, converts G0 to Q
  double settle_time = 0.0;    // s, leading samples to skip
  double min_fraction = 0.05;  // stop once the envelope falls below this
};

struct RingdownFit {
  double gamma0 = 0.0;  // rad/s
  double q = 0.0;
  double sigma_gamma0 = 0.0;
  double amplitude = 0.0;  // envelope at t = 0
  double residual_norm = 0.0;
  std::size_t points_used = 0;
  double t_start = 0.0;  // s, fitted window
  double t_end = 0.0;
};

/// Weighted log-linear fit of an amplitude envelope, ln A(t) = ln A0 - G0 t / 2.
RingdownFit fit_ringdown(const sim::TimeSeries& envelope, const RingdownOptions& options);

struct OccupancyFromData {
  double n_eff = 0.0;
  double sigma_n_eff = 0.0;
  double gamma_eff = 0.0;       // rad/s
  double s_imp = 0.0;           // rad^2/Hz
  double torque_term = 0.0;     // S_tau / I^2 at the nominal resonance
  double center = 0.0;          // Hz
  double residual_norm = 0.0;
  double reduced_chi2 = 0.0;
  bool flagged = false;
  std::vector<double> sigma;    // ln A, ln S_imp, ln Geff, f0
  double grid_lo = 0.0;
  double grid_hi = 0.0;
};

/// Fits the cold-damped observed spectrum
///   [A + S_imp |chi0^-1 / I|^2] / |chi_eff^-1 / I|^2
/// for (A, S_imp, Geff, f0), rebuilds the physical spectrum and integrates
/// it. A volt PSD is converted with `cal`. The result is flagged when the
/// reduced chi-square exceeds `flag_threshold`.
OccupancyFromData occupancy_from_data(const Spectrum& obs_psd, const CalibrationFactor& cal,
                                      const mech::OscillatorParams& osc,
                                      const feedback::FeedbackConfig& fb,
                                      const beam::BeamParams& beam,
                                      double flag_threshold = 4.0);

struct ResonantOccupancy {
  double n_eff = 0.0;
  double sigma_n_eff = 0.0;
  double gamma_eff = 0.0;  // rad/s
  double center = 0.0;     // Hz
  double level = 0.0;      // numerator B, rad^2 s^-4 / Hz
  double reduced_chi2 = 0.0;
  std::size_t points_used = 0;
};

/// Mode occupancy of a physical angle PSD from a fit of the resonant model
///   B / ((W0^2 - W^2)^2 + (W0 G0 + W (Geff - G0))^2)
/// over |f - f0| <= window_widths Geff / 2pi, starting from `gamma_guess`.
/// Integrating the fitted mode gives n + 1/2 = B / (8 Geff W0^2 theta_zp^2).
/// Off-resonant background (1/f torque, broadband feedback of imprecision)
/// is excluded by construction.
ResonantOccupancy resonant_occupancy(const Spectrum& phys, const mech::OscillatorParams& osc,
                                     double gamma_guess, double window_widths = 1.0);

/// Machine-readable summary of a fit.
struct FitReport {
  std::string model;
  std::map<std::string, double> params;
  std::map<std::string, double> sigma;
  double residual_norm = 0.0;
  double grid_lo = 0.0;
  double grid_hi = 0.0;
  bool flagged = false;
};

FitReport report(const LorentzianFit& fit);
FitReport report(const RingdownFit& fit);
FitReport report(const OccupancyFromData& fit);
std::string to_json(const FitReport& r);

}  // namespace torquill::estimate
