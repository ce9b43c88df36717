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

#include <span>
#include <variant>

#include "torquill/beam.hpp"
#include "torquill/common.hpp"
#include "torquill/mech.hpp"

/// Split-photodetector optical-lever readout: photocurrent spectra,
/// imprecision, quantum back-action, SQL and itemized noise budgets.
namespace torquill::readout {

/// A PSD that is either frequency-flat or tabulated on a grid.
class NoiseDensity {
 public:
  NoiseDensity(double constant = 0.0);  // NOLINT: implicit from a scalar
  NoiseDensity(Spectrum tabulated);     // NOLINT

  double at(double freq_hz) const;
  bool is_constant() const noexcept { return std::holds_alternative<double>(value_); }
  /// Throws DomainError if negative anywhere (or above `upper`, when given).
  void validate(const char* name, double upper = -1.0) const;
  /// Throws DomainError if a tabulated density does not span [lo, hi].
  void require_covers(double lo_hz, double hi_hz, const char* name) const;

 private:
  std::variant<double, Spectrum> value_;
};

struct ExtraneousNoise {
  NoiseDensity tilt_psd;          // rad^2/Hz
  NoiseDensity displacement_psd;  // m^2/Hz
  NoiseDensity force_psd;         // N^2/Hz
  double beam_offset = 0.0;       // x0, m
  /// Power ratio left over after mirrored-arm cancellation, in [0, 1].
  NoiseDensity suppression = 0.0;

  void validate() const;
  /// Checks that every tabulated density spans the grid, so kernels never
  /// throw mid-loop.
  void require_covers(std::span<const double> grid_hz) const;
};

enum class Lever { plain, mirrored };

struct NoiseBudget {
  std::vector<double> freq_hz;
  std::vector<double> intrinsic;
  std::vector<double> back_action;
  std::vector<double> imprecision_quantum;
  std::vector<double> imprecision_tilt;
  std::vector<double> imprecision_displacement;
  std::vector<double> total;

  std::size_t size() const noexcept { return freq_hz.size(); }
  Spectrum total_spectrum() const;
};

/// Quantum imprecision, (pi/2) csc^2(zeta) / (2 eta (abar k w0)^2); twice
/// that for the mirrored lever.
double angular_imprecision(const beam::BeamParams& beam, Lever lever);

/// Quantum part of the back-action torque PSD, 2 (hbar abar k w)^2 [1 + (2 x0/w)^2].
double quantum_backaction_torque(const beam::BeamParams& beam, double beam_offset);

double backaction_torque_at(const beam::BeamParams& beam, const ExtraneousNoise& noise,
                            double freq_hz);

Spectrum backaction_torque_psd(const beam::BeamParams& beam, const ExtraneousNoise& noise,
                               std::span<const double> grid_hz, Exec exec = Exec::parallel);

/// Angle-referred imprecision terms at one frequency.
struct ImprecisionTerms {
  double quantum;
  double tilt;
  double displacement;
  double total() const noexcept { return quantum + tilt + displacement; }
};

ImprecisionTerms imprecision_terms(const beam::BeamParams& beam, const ExtraneousNoise& noise,
                                   Lever lever, double freq_hz);

/// (2/pi)(2 eta R P k w0 sin zeta)^2, A^2 per rad^2.
double photocurrent_gain(const beam::BeamParams& beam);

/// Detector photocurrent PSD (A^2/Hz) for a given physical angle spectrum.
/// With `angle_referred`, the transduction gain is divided out (rad^2/Hz).
Spectrum photocurrent_psd(const beam::BeamParams& beam, const Spectrum& osc_phys,
                          const ExtraneousNoise& noise, Lever lever,
                          std::span<const double> grid_hz, bool angle_referred = false,
                          Exec exec = Exec::parallel);

NoiseBudget observed_angle_psd(const mech::OscillatorParams& osc, const beam::BeamParams& beam,
                               const ExtraneousNoise& noise, Lever lever,
                               std::span<const double> grid_hz, Exec exec = Exec::parallel);

struct SqlResult {
  Spectrum spectrum;
  /// S_SQL[W0] / S_zp[W0]; 1 + sqrt(pi/2).
  double resonance_ratio;
};

/// Plain-lever SQL, 2 hbar Im chi0 + sqrt(2 pi) hbar |chi0|.
SqlResult sql_spectrum(const mech::OscillatorParams& osc, std::span<const double> grid_hz,
                       Exec exec = Exec::parallel);

/// Phonon-equivalent imprecision, S_imp / (2 S_zp[W0]).
double imprecision_occupancy(double s_imp, const mech::OscillatorParams& osc);

/// Back-action occupation, S_tau^ba[W0] / (4 hbar |Im chi0^-1[W0]|).
double backaction_occupancy(double s_tau_ba, const mech::OscillatorParams& osc);

/// 10 log10(S_zp[W0] / S_imp).
double db_below_zero_point(double s_imp, const mech::OscillatorParams& osc);

}  // namespace torquill::readout
