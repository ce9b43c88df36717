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

#include "torquill/readout.hpp"

#include <cmath>
#include <string>

namespace torquill::readout {

using constants::hbar;
using constants::pi;

NoiseDensity::NoiseDensity(double constant) : value_(constant) {}

NoiseDensity::NoiseDensity(Spectrum tabulated) : value_(std::move(tabulated)) {
  std::get<Spectrum>(value_).validate();
}

double NoiseDensity::at(double freq_hz) const {
  if (const auto* c = std::get_if<double>(&value_)) return *c;
  return std::get<Spectrum>(value_).interpolate(freq_hz);
}

void NoiseDensity::validate(const char* name, double upper) const {
  auto check = [&](double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DomainError(std::string(name) + " must be non-negative");
    }
    if (upper >= 0.0 && v > upper) {
      throw DomainError(std::string(name) + " must not exceed " + std::to_string(upper));
    }
  };
  if (const auto* c = std::get_if<double>(&value_)) {
    check(*c);
    return;
  }
  for (double v : std::get<Spectrum>(value_).value) check(v);
}

void NoiseDensity::require_covers(double lo_hz, double hi_hz, const char* name) const {
  if (const auto* t = std::get_if<Spectrum>(&value_)) {
    if (lo_hz < t->freq_hz.front() || hi_hz > t->freq_hz.back()) {
      throw DomainError(std::string(name) + " does not cover the requested frequency range");
    }
  }
}

void ExtraneousNoise::require_covers(std::span<const double> grid_hz) const {
  if (grid_hz.empty()) return;
  const double lo = grid_hz.front();
  const double hi = grid_hz.back();
  tilt_psd.require_covers(lo, hi, "extraneous.tilt_psd");
  displacement_psd.require_covers(lo, hi, "extraneous.displacement_psd");
  force_psd.require_covers(lo, hi, "extraneous.force_psd");
  suppression.require_covers(lo, hi, "extraneous.suppression");
}

void ExtraneousNoise::validate() const {
  tilt_psd.validate("extraneous.tilt_psd");
  displacement_psd.validate("extraneous.displacement_psd");
  force_psd.validate("extraneous.force_psd");
  suppression.validate("extraneous.suppression", 1.0);
  if (!std::isfinite(beam_offset)) throw DomainError("extraneous.beam_offset must be finite");
}

Spectrum NoiseBudget::total_spectrum() const {
  return Spectrum{freq_hz, total, Unit::rad2_per_hz, 0};
}

namespace {
double sin_gouy(const beam::BeamParams& beam) {
  const double s = std::sin(beam.gouy_shift);
  if (std::abs(s) < 1e-12) {
    throw DomainError("Gouy shift is a multiple of pi: tilt transduction is singular");
  }
  return s;
}

double quantum_factor(Lever lever) { return lever == Lever::mirrored ? 2.0 : 1.0; }
}  // namespace

double angular_imprecision(const beam::BeamParams& beam, Lever lever) {
  const double s = sin_gouy(beam);
  const double akw = beam.flux_amplitude() * beam.wavenumber() * beam.waist_radius;
  return quantum_factor(lever) * (pi / 2.0) / (2.0 * beam.efficiency * akw * akw * s * s);
}

double quantum_backaction_torque(const beam::BeamParams& beam, double beam_offset) {
  const double w = beam.waist_radius;
  const double root = std::sqrt(2.0) * hbar * beam.flux_amplitude() * beam.wavenumber() * w;
  const double offset = 2.0 * beam_offset / w;
  return root * root * (1.0 + offset * offset);
}

double backaction_torque_at(const beam::BeamParams& beam, const ExtraneousNoise& noise,
                            double freq_hz) {
  const double mean_force_lever = 2.0 * hbar * beam.photon_flux() * beam.wavenumber();
  return quantum_backaction_torque(beam, noise.beam_offset) +
         mean_force_lever * mean_force_lever * noise.displacement_psd.at(freq_hz) +
         noise.beam_offset * noise.beam_offset * noise.force_psd.at(freq_hz);
}

Spectrum backaction_torque_psd(const beam::BeamParams& beam, const ExtraneousNoise& noise,
                               std::span<const double> grid_hz, Exec exec) {
  validate_grid(grid_hz);
  noise.require_covers(grid_hz);
  Spectrum out{{grid_hz.begin(), grid_hz.end()}, std::vector<double>(grid_hz.size()),
               Unit::nm2_per_hz, 0};
  const auto n = static_cast<std::ptrdiff_t>(grid_hz.size());
#pragma omp parallel for if (exec == Exec::parallel) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out.value[i] = backaction_torque_at(beam, noise, grid_hz[i]);
  return out;
}

ImprecisionTerms imprecision_terms(const beam::BeamParams& beam, const ExtraneousNoise& noise,
                                   Lever lever, double freq_hz) {
  const double s = lever == Lever::mirrored ? noise.suppression.at(freq_hz) : 1.0;
  const double kw2 = beam.wavenumber() * beam.waist_radius * beam.waist_radius;
  const double cot = std::cos(beam.gouy_shift) / sin_gouy(beam);
  const double disp_gain = cot / kw2;
  return {angular_imprecision(beam, lever), 0.25 * noise.tilt_psd.at(freq_hz) * s,
          disp_gain * disp_gain * noise.displacement_psd.at(freq_hz) * s};
}

double photocurrent_gain(const beam::BeamParams& beam) {
  const double g = 2.0 * beam.efficiency * beam.effective_responsivity() * beam.power *
                   beam.wavenumber() * beam.waist_radius * sin_gouy(beam);
  return (2.0 / pi) * g * g;
}

Spectrum photocurrent_psd(const beam::BeamParams& beam, const Spectrum& osc_phys,
                          const ExtraneousNoise& noise, Lever lever,
                          std::span<const double> grid_hz, bool angle_referred, Exec exec) {
  validate_grid(grid_hz);
  osc_phys.validate();
  if (osc_phys.size() != grid_hz.size()) {
    throw DomainError("physical spectrum is not defined on the requested grid");
  }
  for (std::size_t i = 0; i < grid_hz.size(); ++i) {
    if (osc_phys.freq_hz[i] != grid_hz[i]) {
      throw DomainError("physical spectrum is not defined on the requested grid");
    }
  }
  noise.require_covers(grid_hz);
  const double gain = angle_referred ? 1.0 : photocurrent_gain(beam);
  Spectrum out{{grid_hz.begin(), grid_hz.end()}, std::vector<double>(grid_hz.size()),
               angle_referred ? Unit::rad2_per_hz : Unit::a2_per_hz, 0};
  const auto n = static_cast<std::ptrdiff_t>(grid_hz.size());
#pragma omp parallel for if (exec == Exec::parallel) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto imp = imprecision_terms(beam, noise, lever, grid_hz[i]);
    out.value[i] = gain * (osc_phys.value[i] + imp.total());
  }
  return out;
}

NoiseBudget observed_angle_psd(const mech::OscillatorParams& osc, const beam::BeamParams& beam,
                               const ExtraneousNoise& noise, Lever lever,
                               std::span<const double> grid_hz, Exec exec) {
  validate_grid(grid_hz);
  noise.require_covers(grid_hz);
  sin_gouy(beam);
  const std::size_t n = grid_hz.size();
  NoiseBudget b;
  b.freq_hz.assign(grid_hz.begin(), grid_hz.end());
  for (auto* v : {&b.intrinsic, &b.back_action, &b.imprecision_quantum, &b.imprecision_tilt,
                  &b.imprecision_displacement, &b.total}) {
    v->resize(n);
  }
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for if (exec == Exec::parallel) schedule(static)
  for (std::ptrdiff_t i = 0; i < sn; ++i) {
    const double f = grid_hz[i];
    const auto chi = mech::susceptibility(osc, f);
    const auto imp = imprecision_terms(beam, noise, lever, f);
    b.intrinsic[i] = mech::intrinsic_psd(osc, f);
    b.back_action[i] = std::norm(chi) * backaction_torque_at(beam, noise, f);
    b.imprecision_quantum[i] = imp.quantum;
    b.imprecision_tilt[i] = imp.tilt;
    b.imprecision_displacement[i] = imp.displacement;
    b.total[i] = b.intrinsic[i] + b.back_action[i] + b.imprecision_quantum[i] +
                 b.imprecision_tilt[i] + b.imprecision_displacement[i];
  }
  return b;
}

SqlResult sql_spectrum(const mech::OscillatorParams& osc, std::span<const double> grid_hz,
                       Exec exec) {
  validate_grid(grid_hz);
  Spectrum s{{grid_hz.begin(), grid_hz.end()}, std::vector<double>(grid_hz.size()),
             Unit::rad2_per_hz, 0};
  auto sql_at = [&](double f) {
    const auto chi = mech::susceptibility(osc, f);
    return 2.0 * hbar * chi.imag() + std::sqrt(2.0 * pi) * hbar * std::abs(chi);
  };
  const auto n = static_cast<std::ptrdiff_t>(grid_hz.size());
#pragma omp parallel for if (exec == Exec::parallel) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) s.value[i] = sql_at(grid_hz[i]);
  const double ratio = sql_at(osc.frequency_hz()) / mech::zero_point_peak(osc);
  return {std::move(s), ratio};
}

double imprecision_occupancy(double s_imp, const mech::OscillatorParams& osc) {
  return s_imp / (2.0 * mech::zero_point_peak(osc));
}

double backaction_occupancy(double s_tau_ba, const mech::OscillatorParams& osc) {
  return s_tau_ba / (4.0 * hbar * osc.inertia * osc.omega0 * osc.gamma0());
}

double db_below_zero_point(double s_imp, const mech::OscillatorParams& osc) {
  return 10.0 * std::log10(mech::zero_point_peak(osc) / s_imp);
}

}  // namespace torquill::readout
