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

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace torquill {

/// CODATA 2018 exact values.
namespace constants {
inline constexpr double hbar = 1.054571817e-34;      // J s
inline constexpr double k_boltzmann = 1.380649e-23;  // J/K
inline constexpr double c_light = 299792458.0;       // m/s
inline constexpr double q_electron = 1.602176634e-19;  // C
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;
}  // namespace constants

/// Raised when an input lies outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised by estimators that fail to converge or see degenerate data.
class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, std::string diagnostics = {})
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

/// Selects the serial reference path or the OpenMP path of a kernel.
/// Both produce bitwise-identical results.
enum class Exec { serial, parallel };

enum class Unit {
  rad,
  volt,
  ampere,
  newton_meter,
  dimensionless,
  rad2_per_hz,
  m2_per_hz,
  n2_per_hz,
  nm2_per_hz,
  a2_per_hz,
  v2_per_hz,
};

std::string_view to_string(Unit unit);
Unit unit_from_string(std::string_view name);

/// Unit of the one-sided PSD of a signal carrying `unit`.
Unit psd_unit(Unit signal_unit);

/// One-sided symmetrized PSD sampled on a strictly positive, strictly
/// increasing frequency grid (Hz). `averages` is the number of averaged
/// periodograms behind an estimate, 0 for model spectra.
struct Spectrum {
  std::vector<double> freq_hz;
  std::vector<double> value;
  Unit unit = Unit::rad2_per_hz;
  std::size_t averages = 0;

  std::size_t size() const noexcept { return freq_hz.size(); }
  bool empty() const noexcept { return freq_hz.empty(); }

  /// Throws DomainError on a malformed grid or mismatched value count.
  void validate() const;

  /// Linear interpolation; throws DomainError outside the grid.
  double interpolate(double f) const;
};

/// Throws DomainError unless the grid is non-empty, positive and increasing.
void validate_grid(std::span<const double> grid_hz);

std::vector<double> linspace(double lo, double hi, std::size_t n);
std::vector<double> logspace(double lo, double hi, std::size_t n);

/// Sorted union of two grids with near-duplicates (relative 1e-12) removed.
std::vector<double> merge_grids(std::span<const double> a, std::span<const double> b);

/// Trapezoidal integral of a spectrum over its grid.
double integrate(const Spectrum& s);

}  // namespace torquill
