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

#include "torquill/mech.hpp"

#include <cmath>
#include <string>

namespace torquill::mech {

using constants::hbar;
using constants::k_boltzmann;
using constants::two_pi;

namespace {
void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw DomainError(std::string(name) + " must be strictly positive");
  }
}

void require_frequency(double freq_hz) {
  if (!(freq_hz > 0.0) || !std::isfinite(freq_hz)) {
    throw DomainError("frequency must be strictly positive (structural damping diverges at 0)");
  }
}
}  // namespace

OscillatorParams OscillatorParams::from_frequency(double f0_hz, double q, double inertia,
                                                  double temperature) {
  return OscillatorParams{two_pi * f0_hz, q, inertia, temperature};
}

void OscillatorParams::validate() const {
  require_positive(omega0, "oscillator.omega0");
  require_positive(quality_factor, "oscillator.quality_factor");
  require_positive(inertia, "oscillator.inertia");
  require_positive(temperature, "oscillator.temperature");
}

double OscillatorParams::theta_zp() const noexcept {
  return std::sqrt(hbar / (2.0 * inertia * omega0));
}

void MaterialGeometry::validate() const {
  require_positive(stress, "stress");
  require_positive(youngs_modulus, "youngs_modulus");
  require_positive(width, "width");
  require_positive(thickness, "thickness");
  require_positive(q_intrinsic, "q_intrinsic");
  if (!(width >= thickness)) throw DomainError("width must not be smaller than thickness");
}

std::complex<double> inverse_susceptibility(const OscillatorParams& osc, double freq_hz) {
  require_frequency(freq_hz);
  const double omega = two_pi * freq_hz;
  // (W0 - W)(W0 + W) avoids cancellation for W within a linewidth of W0.
  const double detuning = (osc.omega0 - omega) * (osc.omega0 + omega);
  return osc.inertia * std::complex<double>(detuning, -omega * osc.gamma0_at(omega));
}

std::complex<double> susceptibility(const OscillatorParams& osc, double freq_hz) {
  return 1.0 / inverse_susceptibility(osc, freq_hz);
}

double thermal_occupancy(double temperature, double freq_hz, OccupancyMode mode) {
  require_frequency(freq_hz);
  if (temperature < 0.0) throw DomainError("temperature must be non-negative");
  if (temperature == 0.0) return 0.0;
  const double x = hbar * two_pi * freq_hz / (k_boltzmann * temperature);
  if (mode == OccupancyMode::high_temperature) return 1.0 / x;
  return 1.0 / std::expm1(x);
}

double thermal_torque_psd(const OscillatorParams& osc, double freq_hz) {
  const double n = thermal_occupancy(osc.temperature, freq_hz);
  return 4.0 * hbar * (n + 0.5) * std::abs(inverse_susceptibility(osc, freq_hz).imag());
}

double intrinsic_psd(const OscillatorParams& osc, double freq_hz) {
  const double n = thermal_occupancy(osc.temperature, freq_hz);
  return 4.0 * hbar * (n + 0.5) * susceptibility(osc, freq_hz).imag();
}

Spectrum intrinsic_spectrum(const OscillatorParams& osc, std::span<const double> grid_hz,
                            Exec exec) {
  validate_grid(grid_hz);
  Spectrum out{{grid_hz.begin(), grid_hz.end()}, std::vector<double>(grid_hz.size()),
               Unit::rad2_per_hz, 0};
  const auto n = static_cast<std::ptrdiff_t>(grid_hz.size());
#pragma omp parallel for if (exec == Exec::parallel) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out.value[i] = intrinsic_psd(osc, grid_hz[i]);
  return out;
}

double zero_point_peak(const OscillatorParams& osc) {
  const double tzp = osc.theta_zp();
  return 4.0 * tzp * tzp / osc.gamma0();
}

Dilution dilution_factor(const MaterialGeometry& geom) {
  geom.validate();
  const double aspect = geom.width / geom.thickness;
  const double d = geom.stress / (2.0 * geom.youngs_modulus) * aspect * aspect;
  return {d, geom.q_intrinsic * d};
}

double effective_mass(double inertia, double width) {
  require_positive(inertia, "oscillator.inertia");
  require_positive(width, "width");
  const double r = 2.0 / width;
  return inertia * r * r;
}

double plate_inertia(double density, double length, double thickness, double width) {
  require_positive(density, "density");
  require_positive(length, "length");
  require_positive(thickness, "thickness");
  require_positive(width, "width");
  return density * length * thickness * width * width * width / 24.0;
}

}  // namespace torquill::mech
