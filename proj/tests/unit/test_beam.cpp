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

#include <cmath>
#include <complex>
#include <vector>

#include "test_support.hpp"
#include "torquill/beam.hpp"

using namespace torquill;
using namespace torquill::testing;

TEST_CASE("propagation") {
  beam::BeamParams b;
  b.waist_radius = 180e-6;
  b.power = 1e-3;
  const auto waist = beam::propagate(b, 0.0);
  CHECK(waist.radius == b.waist_radius);
  CHECK(waist.gouy == 0.0);
  CHECK(waist.flat_phase_front());

  const double zr = b.rayleigh_length();
  const auto rayleigh = beam::propagate(b, zr);
  CHECK(rayleigh.radius == rel(b.waist_radius * std::sqrt(2.0), 1e-14));
  CHECK(rayleigh.gouy == rel(constants::pi / 4.0, 1e-14));
  CHECK(rayleigh.curvature_radius == rel(2.0 * zr, 1e-14));
  CHECK_FALSE(rayleigh.flat_phase_front());

  const auto far = beam::propagate(b, 1e6 * zr);
  CHECK(far.gouy == rel(constants::pi / 2.0, 1e-5));
  CHECK(far.radius / (1e6 * zr) == rel(b.waist_radius / zr, 1e-6));

  for (double z : {-3.0 * zr, -0.1 * zr, 0.5 * zr, 10.0 * zr}) {
    const auto s = beam::propagate(b, z);
    CHECK(s.radius >= b.waist_radius);
    CHECK(std::abs(s.gouy) < constants::pi / 2.0);
  }
}

TEST_CASE("Hermite polynomials") {
  CHECK(beam::hermite(0, 0.7) == 1.0);
  CHECK(beam::hermite(1, 0.7) == rel(1.4, 1e-15));
  CHECK(beam::hermite(2, 0.7) == rel(4 * 0.49 - 2, 1e-14));
  CHECK(beam::hermite(3, 0.7) == rel(8 * 0.343 - 12 * 0.7, 1e-14));
  CHECK(beam::hermite(5, -1.3) == rel(-beam::hermite(5, 1.3), 1e-15));
  CHECK_THROWS_AS(beam::hermite(-1, 0.0), DomainError);
  CHECK_THROWS_AS(beam::hg_amplitude(beam::kMaxHgOrder + 1, 0, 0.0, 0.0, {}), DomainError);
}

TEST_CASE("HG modes are orthonormal up to order 6") {
  beam::BeamParams b;
  b.waist_radius = 1e-3;
  b.power = 1e-3;
  for (double z : {0.0, b.rayleigh_length()}) {
    const auto plane = beam::propagate(b, z);
    const int pts = 512;
    const double half = 6.0 * plane.radius;
    const double h = 2.0 * half / (pts - 1);
    std::vector<std::pair<int, int>> modes;
    for (int m = 0; m <= 6; ++m)
      for (int n = 0; m + n <= 6; ++n) modes.emplace_back(m, n);
    std::vector<std::vector<double>> table;
    for (auto [m, n] : modes) {
      std::vector<double> v(pts * pts);
      for (int i = 0; i < pts; ++i)
        for (int j = 0; j < pts; ++j)
          v[i * pts + j] = beam::hg_amplitude(m, n, -half + i * h, -half + j * h, plane);
      table.push_back(std::move(v));
    }
    double worst = 0.0;
    for (std::size_t a = 0; a < modes.size(); ++a) {
      for (std::size_t c = a; c < modes.size(); ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < table[a].size(); ++k) acc += table[a][k] * table[c][k];
        acc *= h * h;
        worst = std::max(worst, std::abs(acc - (a == c ? 1.0 : 0.0)));
      }
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("scattering into HG10") {
  beam::BeamParams b;
  b.waist_radius = 180e-6;
  b.power = 1e-3;
  const auto waist = beam::propagate(b, 0.0);
  const double abar = b.flux_amplitude();

  const double theta = 1e-9;
  const auto tilt = beam::scatter_to_hg10(b, waist, 0.0, theta).coefficient;
  CHECK(tilt.real() == 0.0);
  CHECK(tilt.imag() == rel(abar * b.wavenumber() * b.waist_radius * theta / 2.0, 1e-14));

  const double d = 1e-9;
  const auto disp = beam::scatter_to_hg10(b, waist, d, 0.0).coefficient;
  CHECK(disp.imag() == 0.0);
  CHECK(disp.real() == rel(abar * d / b.waist_radius, 1e-14));

  // Linearity in (dx, dtheta).
  const auto plane = beam::propagate(b, 0.37 * b.rayleigh_length());
  const auto c1 = beam::scatter_to_hg10(b, plane, 2e-9, 0.0).coefficient;
  const auto c2 = beam::scatter_to_hg10(b, plane, 0.0, 3e-7).coefficient;
  const auto c12 = beam::scatter_to_hg10(b, plane, 2e-9, 3e-7).coefficient;
  CHECK(std::abs(c12 - c1 - c2) <= 1e-14 * std::abs(c12));
  const auto c3 = beam::scatter_to_hg10(b, plane, 6e-9, 9e-7).coefficient;
  CHECK(std::abs(c3 - 3.0 * c12) <= 1e-14 * std::abs(c3));

  // Gouy rotation relative to the waist coefficient.
  for (double z : {0.2, 1.0, 5.0}) {
    const auto p = beam::propagate(b, z * b.rayleigh_length());
    const auto c = beam::scatter_to_hg10(b, p, 1e-9, 2e-7).coefficient;
    const auto c0 = beam::scatter_to_hg10(b, waist, 1e-9, 2e-7).coefficient;
    CHECK(std::abs(c - c0 * std::polar(1.0, -p.gouy)) <= 1e-14 * std::abs(c));
  }

  // A waist tilt seen at Gouy phase pi/2 lands in the displacement quadrature.
  beam::BeamStateAtPlane quarter = waist;
  quarter.gouy = constants::pi / 2.0;
  const auto far = beam::scatter_to_hg10(b, quarter, 0.0, theta).coefficient;
  CHECK(std::abs(far.imag()) < 1e-12 * std::abs(far));
  CHECK(far.real() > 0.0);

  CHECK(beam::scatter_to_hg10(b, waist, 1e-9, 1e-9).linear_regime);
  CHECK_FALSE(beam::scatter_to_hg10(b, waist, 1e-4, 0.0).linear_regime);
}

TEST_CASE("split detector weights") {
  double sum = 0.0;
  constexpr int terms = 20000;
  for (int k = 0; k < terms; ++k) sum += std::pow(beam::split_detector_weight(k), 2);
  // D_k^2 ~ k^{-3/2} / (2 sqrt(pi)), so the remainder is about 1/sqrt(pi K).
  CHECK(sum < constants::pi / 2.0);
  CHECK(sum + 1.0 / std::sqrt(constants::pi * terms) == rel(constants::pi / 2.0, 1e-5));
  CHECK(beam::split_detector_weight(0) > beam::split_detector_weight(1));
  CHECK_THROWS_AS(beam::split_detector_weight(-1), DomainError);
}

TEST_CASE("beam validation") {
  beam::BeamParams b;
  b.waist_radius = 1e-4;
  b.power = 1e-3;
  CHECK_NOTHROW(b.validate());
  auto bad = b;
  bad.efficiency = 1.5;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = b;
  bad.power = 0.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  CHECK(b.effective_responsivity() ==
        rel(constants::q_electron / (constants::hbar * constants::two_pi * constants::c_light /
                                     b.wavelength),
            1e-14));
}
