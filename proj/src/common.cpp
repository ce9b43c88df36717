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

#include "torquill/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

namespace torquill {

namespace {
constexpr std::array<std::pair<Unit, std::string_view>, 11> kUnitNames{{
    {Unit::rad, "rad"},
    {Unit::volt, "V"},
    {Unit::ampere, "A"},
    {Unit::newton_meter, "N*m"},
    {Unit::dimensionless, "1"},
    {Unit::rad2_per_hz, "rad^2/Hz"},
    {Unit::m2_per_hz, "m^2/Hz"},
    {Unit::n2_per_hz, "N^2/Hz"},
    {Unit::nm2_per_hz, "N^2*m^2/Hz"},
    {Unit::a2_per_hz, "A^2/Hz"},
    {Unit::v2_per_hz, "V^2/Hz"},
}};
}  // namespace

std::string_view to_string(Unit unit) {
  for (const auto& [u, name] : kUnitNames) {
    if (u == unit) return name;
  }
  return "?";
}

Unit unit_from_string(std::string_view name) {
  for (const auto& [u, n] : kUnitNames) {
    if (n == name) return u;
  }
  throw DomainError("unknown unit '" + std::string(name) + "'");
}

Unit psd_unit(Unit signal_unit) {
  switch (signal_unit) {
    case Unit::rad: return Unit::rad2_per_hz;
    case Unit::volt: return Unit::v2_per_hz;
    case Unit::ampere: return Unit::a2_per_hz;
    case Unit::newton_meter: return Unit::nm2_per_hz;
    default: return Unit::dimensionless;
  }
}

void validate_grid(std::span<const double> grid_hz) {
  if (grid_hz.empty()) throw DomainError("frequency grid is empty");
  if (!(grid_hz.front() > 0.0) || !std::isfinite(grid_hz.front())) {
    throw DomainError("frequency grid must be strictly positive");
  }
  for (std::size_t i = 1; i < grid_hz.size(); ++i) {
    if (!(grid_hz[i] > grid_hz[i - 1]) || !std::isfinite(grid_hz[i])) {
      throw DomainError("frequency grid must be strictly increasing");
    }
  }
}

void Spectrum::validate() const {
  validate_grid(freq_hz);
  if (value.size() != freq_hz.size()) {
    throw DomainError("spectrum value count does not match its grid");
  }
}

double Spectrum::interpolate(double f) const {
  if (empty()) throw DomainError("interpolating an empty spectrum");
  if (f < freq_hz.front() || f > freq_hz.back()) {
    throw DomainError("frequency " + std::to_string(f) + " Hz outside spectrum grid");
  }
  auto it = std::lower_bound(freq_hz.begin(), freq_hz.end(), f);
  auto i = static_cast<std::size_t>(it - freq_hz.begin());
  if (freq_hz[i] == f) return value[i];
  const double t = (f - freq_hz[i - 1]) / (freq_hz[i] - freq_hz[i - 1]);
  return value[i - 1] + t * (value[i] - value[i - 1]);
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + step * static_cast<double>(i);
  out.back() = hi;
  return out;
}

std::vector<double> logspace(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0) || !(hi > 0.0)) throw DomainError("logspace bounds must be positive");
  auto exps = linspace(std::log(lo), std::log(hi), n);
  for (auto& e : exps) e = std::exp(e);
  if (n > 0) {
    exps.front() = lo;
    exps.back() = hi;
  }
  return exps;
}

std::vector<double> merge_grids(std::span<const double> a, std::span<const double> b) {
  std::vector<double> all;
  all.reserve(a.size() + b.size());
  all.insert(all.end(), a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  std::vector<double> out;
  out.reserve(all.size());
  for (double f : all) {
    if (out.empty() || f - out.back() > 1e-12 * std::abs(f)) out.push_back(f);
  }
  return out;
}

double integrate(const Spectrum& s) {
  double acc = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    acc += 0.5 * (s.value[i] + s.value[i - 1]) * (s.freq_hz[i] - s.freq_hz[i - 1]);
  }
  return acc;
}

}  // namespace torquill
