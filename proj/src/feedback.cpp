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

#include "torquill/feedback.hpp"

#include <algorithm>
#include <cmath>

namespace torquill::feedback {

using constants::pi;
using constants::two_pi;
using std::complex;

void FeedbackConfig::validate(const mech::OscillatorParams& osc) const {
  if (!(gamma_fb >= 0.0) || !std::isfinite(gamma_fb)) {
    throw DomainError("feedback.gamma_fb must be non-negative");
  }
  if (extra_delay < 0.0) throw DomainError("feedback.extra_delay must be non-negative");
  if (model == LoopModel::bandpass_with_delay) {
    const double f0 = osc.frequency_hz();
    if (!(band_low > 0.0 && band_low < f0 && f0 < band_high)) {
      throw DomainError("feedback band must bracket the resonance: band_low < f0 < band_high");
    }
  }
  loop_torque_noise.validate("feedback.loop_torque_noise");
}

namespace {
// Second-order band-pass B s / (s^2 + B s + wc^2), s = -i W (e^{-i W t} convention).
complex<double> bandpass(const FeedbackConfig& fb, double omega) {
  const double wc = two_pi * std::sqrt(fb.band_low * fb.band_high);
  const double bw = two_pi * (fb.band_high - fb.band_low);
  const complex<double> s(0.0, -omega);
  return bw * s / (s * s + bw * s + wc * wc);
}
}  // namespace

complex<double> loop_filter(const FeedbackConfig& fb, const mech::OscillatorParams& osc,
                            double freq_hz) {
  if (!(freq_hz > 0.0)) throw DomainError("frequency must be strictly positive");
  const double omega = two_pi * freq_hz;
  const double scale = osc.inertia * fb.gamma_fb;
  if (fb.model == LoopModel::ideal_derivative) return {0.0, scale * omega};

  // Unit gain and pi/2 phase lead at W0: a delay e^{i W tau} tops up the
  // band-pass phase to pi/2 modulo 2 pi.
  const auto h0 = bandpass(fb, osc.omega0);
  double align = (pi / 2.0 - std::arg(h0)) / osc.omega0;
  if (align < 0.0) align += two_pi / osc.omega0;
  const auto h = bandpass(fb, omega) / std::abs(h0);
  return scale * osc.omega0 * h * std::polar(1.0, omega * (align + fb.extra_delay));
}

complex<double> effective_susceptibility(const mech::OscillatorParams& osc,
                                         const FeedbackConfig& fb, double freq_hz) {
  return 1.0 / (mech::inverse_susceptibility(osc, freq_hz) - loop_filter(fb, osc, freq_hz));
}

double effective_damping(const mech::OscillatorParams& osc, const FeedbackConfig& fb) {
  const auto g = loop_filter(fb, osc, osc.frequency_hz());
  return osc.gamma0() + g.imag() / (osc.inertia * osc.omega0);
}

double total_torque_psd(const mech::OscillatorParams& osc, const beam::BeamParams& beam,
                        const readout::ExtraneousNoise& noise, const FeedbackConfig& fb,
                        double freq_hz) {
  return mech::thermal_torque_psd(osc, freq_hz) +
         readout::backaction_torque_at(beam, noise, freq_hz) + fb.loop_torque_noise.at(freq_hz);
}

namespace {
enum class Channel { observed, physical };

Spectrum closed_loop_psd(Channel channel, const mech::OscillatorParams& osc,
                         const beam::BeamParams& beam, const readout::ExtraneousNoise& noise,
                         readout::Lever lever, const FeedbackConfig& fb,
                         std::span<const double> grid_hz, Exec exec) {
  validate_grid(grid_hz);
  noise.require_covers(grid_hz);
  fb.loop_torque_noise.require_covers(grid_hz.front(), grid_hz.back(), "feedback.loop_torque_noise");
  readout::angular_imprecision(beam, lever);
  Spectrum out{{grid_hz.begin(), grid_hz.end()}, std::vector<double>(grid_hz.size()),
               Unit::rad2_per_hz, 0};
  const auto n = static_cast<std::ptrdiff_t>(grid_hz.size());
#pragma omp parallel for if (exec == Exec::parallel) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double f = grid_hz[i];
    const auto inv0 = mech::inverse_susceptibility(osc, f);
    const auto gain = loop_filter(fb, osc, f);
    const double denom = std::norm(inv0 - gain);
    const double s_tau = total_torque_psd(osc, beam, noise, fb, f);
    const double s_imp = readout::imprecision_terms(beam, noise, lever, f).total();
    // Imprecision reaches the observed record through chi0^-1 chi_eff and
    // the physical motion through the feedback torque alone.
    const double imp_gain = channel == Channel::observed ? std::norm(inv0) : std::norm(gain);
    out.value[i] = (s_tau + imp_gain * s_imp) / denom;
  }
  return out;
}
}  // namespace

Spectrum closed_loop_observed_psd(const mech::OscillatorParams& osc,
                                  const beam::BeamParams& beam,
                                  const readout::ExtraneousNoise& noise, readout::Lever lever,
                                  const FeedbackConfig& fb, std::span<const double> grid_hz,
                                  Exec exec) {
  return closed_loop_psd(Channel::observed, osc, beam, noise, lever, fb, grid_hz, exec);
}

Spectrum closed_loop_physical_psd(const mech::OscillatorParams& osc,
                                  const beam::BeamParams& beam,
                                  const readout::ExtraneousNoise& noise, readout::Lever lever,
                                  const FeedbackConfig& fb, std::span<const double> grid_hz,
                                  Exec exec) {
  return closed_loop_psd(Channel::physical, osc, beam, noise, lever, fb, grid_hz, exec);
}

OccupancyEstimate occupancy_from_spectrum(const Spectrum& phys, double theta_zp,
                                          double center_hz) {
  phys.validate();
  if (!(theta_zp > 0.0)) throw DomainError("theta_zp must be positive");
  const auto& f = phys.freq_hz;
  const auto& s = phys.value;
  if (!(center_hz > 0.0)) {
    center_hz = f[static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin())];
  }
  const double core = integrate(phys);
  double tails = 0.0;
  const double lo = f.front();
  const double hi = f.back();
  if (lo < center_hz) {
    // A/(fc - f)^2 matched at lo, integrated over (0, lo).
    tails += s.front() * (center_hz - lo) * lo / center_hz;
  }
  if (hi > center_hz) tails += s.back() * (hi - center_hz);

  OccupancyEstimate est;
  const double variance = core + tails;
  est.normalized_variance = variance / (2.0 * theta_zp * theta_zp);
  est.tail_fraction = variance > 0.0 ? tails / variance : 0.0;
  est.tail_dominated = est.tail_fraction > 0.05;
  const double raw = est.normalized_variance - 0.5;
  est.degenerate = !(raw >= 0.0);
  est.n_eff = est.degenerate ? 0.0 : raw;
  return est;
}

double occupancy_closed_form(double n_th, double n_ba, double n_imp, double gamma0,
                             double gamma_eff, OccupancyModel model) {
  if (!(gamma0 > 0.0)) throw DomainError("gamma0 must be positive");
  if (gamma_eff < gamma0 * (1.0 - 1e-12)) throw DomainError("gamma_eff must be >= gamma0");
  const double ratio = gamma0 / gamma_eff;
  if (model == OccupancyModel::simplified) return n_th * ratio + n_imp / ratio;
  return (n_th + n_ba + 0.5) * ratio + n_imp / ratio - 0.5;
}

OperatingPoint operating_point(const mech::OscillatorParams& osc, const beam::BeamParams& beam,
                               const readout::ExtraneousNoise& noise, readout::Lever lever) {
  const double f0 = osc.frequency_hz();
  const double s_imp = readout::imprecision_terms(beam, noise, lever, f0).total();
  return {mech::thermal_occupancy(osc.temperature, f0),
          readout::backaction_occupancy(readout::backaction_torque_at(beam, noise, f0), osc),
          readout::imprecision_occupancy(s_imp, osc), osc.gamma0(), s_imp};
}

CoolingOptimum closed_form_optimum(const OperatingPoint& op) {
  if (!(op.n_imp > 0.0)) throw DomainError("n_imp must be positive for a finite optimum");
  const double g = op.gamma0 * std::sqrt((op.n_th + op.n_ba + 0.5) / op.n_imp);
  const double g_eff = std::max(g, op.gamma0);
  return {g_eff, occupancy_closed_form(op.n_th, op.n_ba, op.n_imp, op.gamma0, g_eff)};
}

std::vector<double> resonance_window(const mech::OscillatorParams& osc, double gamma_eff,
                                     std::size_t points, double half_widths) {
  const double f0 = osc.frequency_hz();
  const double half = half_widths * gamma_eff / two_pi;
  return linspace(std::max(f0 - half, 1e-3 * f0), f0 + half, points);
}

std::vector<CoolingPoint> gain_sweep(const mech::OscillatorParams& osc,
                                     const beam::BeamParams& beam,
                                     const readout::ExtraneousNoise& noise, readout::Lever lever,
                                     std::span<const double> gains, const SweepOptions& options,
                                     Exec exec) {
  if (gains.empty()) throw DomainError("gain sweep needs at least one gain");
  for (double g : gains) {
    FeedbackConfig fb = options.base;
    fb.gamma_fb = g;
    fb.validate(osc);
  }
  const auto op = operating_point(osc, beam, noise, lever);
  std::vector<CoolingPoint> out(gains.size());
  const auto n = static_cast<std::ptrdiff_t>(gains.size());
  // Inner kernels stay serial so each point is computed identically on any thread.
#pragma omp parallel for if (exec == Exec::parallel) schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    FeedbackConfig fb = options.base;
    fb.gamma_fb = gains[i];
    const double g_eff = effective_damping(osc, fb);
    const auto grid = resonance_window(osc, g_eff, options.window_points, options.half_widths);
    const auto phys = closed_loop_physical_psd(osc, beam, noise, lever, fb, grid, Exec::serial);
    const auto est = occupancy_from_spectrum(phys, osc.theta_zp(), osc.frequency_hz());
    CoolingPoint p;
    p.gamma_fb = gains[i];
    p.gamma_eff = g_eff;
    p.n_eff = est.n_eff;
    p.n_eff_closed_form = occupancy_closed_form(op.n_th, op.n_ba, op.n_imp, op.gamma0, g_eff);
    p.n_thermal_term = op.n_th * op.gamma0 / g_eff;
    p.n_backaction_term = op.n_ba * op.gamma0 / g_eff;
    p.n_imprecision_term = op.n_imp * g_eff / op.gamma0;
    p.tail_dominated = est.tail_dominated;
    out[i] = p;
  }
  return out;
}

}  // namespace torquill::feedback
