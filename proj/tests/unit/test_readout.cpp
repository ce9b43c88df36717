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
#include <vector>

#include "test_support.hpp"
#include "torquill/readout.hpp"

using namespace torquill;
using namespace torquill::testing;
using readout::Lever;

TEST_CASE("imprecision and back-action oracles") {
  beam::BeamParams b;
  b.power = 5e-3;
  b.waist_radius = 587e-6;
  b.efficiency = 0.75;
  CHECK(std::sqrt(readout::angular_imprecision(b, Lever::mirrored)) == rel(2.56e-12, 0.02));
  CHECK(std::sqrt(readout::angular_imprecision(b, Lever::mirrored)) ==
        rel(2.5511471832642804e-12, 1e-9));
  b.efficiency = 1.0;
  CHECK(std::sqrt(readout::angular_imprecision(b, Lever::mirrored)) == rel(2.21e-12, 0.02));
  CHECK(readout::angular_imprecision(b, Lever::mirrored) ==
        rel(2.0 * readout::angular_imprecision(b, Lever::plain), 1e-15));

  const auto p = pendulum_beam();
  CHECK(readout::angular_imprecision(p, Lever::mirrored) == rel(kPendulumImprecision, 1e-9));
  CHECK(readout::quantum_backaction_torque(p, 0.0) == rel(kPendulumBackaction, 1e-9));
  CHECK(readout::quantum_backaction_torque(p, p.waist_radius / 2.0) ==
        rel(2.0 * kPendulumBackaction, 1e-14));

  b.gouy_shift = 0.0;
  CHECK_THROWS_AS(readout::angular_imprecision(b, Lever::plain), DomainError);
}

TEST_CASE("back-action spectrum") {
  auto b = pendulum_beam();
  readout::ExtraneousNoise n;
  const auto grid = logspace(1.0, 1e5, 11);
  const auto flat = readout::backaction_torque_psd(b, n, grid);
  for (double v : flat.value) CHECK(v == rel(kPendulumBackaction, 1e-9));

  n.beam_offset = 1e-5;
  n.force_psd = 1e-20;
  b.power = 1e-30;
  CHECK(readout::backaction_torque_at(b, n, 100.0) == rel(1e-10 * 1e-20, 1e-6));
}

TEST_CASE("power scaling and the imprecision-back-action product") {
  const auto osc = pendulum();
  const double chi2 = std::norm(mech::susceptibility(osc, kF0));
  beam::BeamParams b;
  b.waist_radius = 180.3e-6;
  const double target = constants::pi / 2.0 * constants::hbar * constants::hbar * chi2;
  for (double p : logspace(1e-9, 1e-3, 13)) {
    b.power = p;
    const double imp = readout::angular_imprecision(b, Lever::plain);
    const double ba = chi2 * readout::quantum_backaction_torque(b, 0.0);
    CHECK(imp * ba == rel(target, 1e-12));
    CHECK(imp * p == rel(readout::angular_imprecision(pendulum_beam(), Lever::plain) *
                             pendulum_beam().power * pendulum_beam().efficiency,
                         1e-12));
  }
}

TEST_CASE("SQL") {
  const auto osc = pendulum();
  const std::vector<double> grid{kF0 * 0.9, kF0, kF0 * 1.1};
  const auto sql = readout::sql_spectrum(osc, grid);
  CHECK(sql.resonance_ratio == rel(1.0 + std::sqrt(constants::pi / 2.0), 1e-12));
  // tradeoff / zero-point on resonance is sqrt(pi/2)
  const double zp = readout::sql_spectrum(pendulum(kQ, 0.0), grid).spectrum.value[1];
  const double ratio_from_parts = sql.spectrum.value[1] / mech::zero_point_peak(osc) - 1.0;
  CHECK(ratio_from_parts == rel(std::sqrt(constants::pi / 2.0), 1e-9));
  CHECK(zp == rel(sql.spectrum.value[1], 1e-12));

  // Sweep power over 8 decades: the optimum of back-action + imprecision is the SQL term.
  const double chi2 = std::norm(mech::susceptibility(osc, kF0));
  beam::BeamParams b;
  b.waist_radius = 180e-6;
  double best = INFINITY;
  for (double p : logspace(1e-9, 1e-1, 20001)) {
    b.power = p;
    best = std::min(best, readout::angular_imprecision(b, Lever::plain) +
                              chi2 * readout::quantum_backaction_torque(b, 0.0));
  }
  const double bound = std::sqrt(2.0 * constants::pi) * constants::hbar * std::sqrt(chi2);
  CHECK(best == rel(bound, 1e-3));
}

TEST_CASE("margin below zero-point") {
  const auto osc = pendulum();
  CHECK(readout::db_below_zero_point(1.06e-22, osc) == rel(9.826656517018522, 1e-6));
  CHECK(readout::imprecision_occupancy(1.06e-22, osc) == rel(0.05203605363233161, 1e-6));
  CHECK(readout::backaction_occupancy(kPendulumBackaction, osc) ==
        rel(kPendulumBackaction / (4.0 * constants::hbar * kInertia * kOmega0 * kGamma0), 1e-9));
}

TEST_CASE("extraneous noise and lever variants") {
  const auto b = pendulum_beam();
  readout::ExtraneousNoise n;
  n.tilt_psd = 1e-20;
  n.displacement_psd = 1e-22;

  // Mirrored with suppression 1 equals plain with the quantum term doubled.
  n.suppression = 1.0;
  const auto m = readout::imprecision_terms(b, n, Lever::mirrored, 1e3);
  const auto p = readout::imprecision_terms(b, n, Lever::plain, 1e3);
  CHECK(m.quantum == rel(2.0 * p.quantum, 1e-15));
  CHECK(m.tilt == p.tilt);
  CHECK(m.displacement == p.displacement);

  // 60 dB suppression of tilt noise.
  n.suppression = 1e-6;
  const auto s = readout::imprecision_terms(b, n, Lever::mirrored, 1e3);
  CHECK(10.0 * std::log10(p.tilt / s.tilt) == rel(60.0, 1e-12));

  // At Gouy pi/2 the displacement term vanishes.
  CHECK(std::abs(p.displacement) < 1e-30 * p.tilt);
  auto tilted = b;
  tilted.gouy_shift = constants::pi / 3.0;
  CHECK(readout::imprecision_terms(tilted, n, Lever::plain, 1e3).displacement > 0.0);

  n.suppression = 2.0;
  CHECK_THROWS_AS(n.validate(), DomainError);
  n.suppression = 0.0;
  n.tilt_psd = -1.0;
  CHECK_THROWS_AS(n.validate(), DomainError);

  readout::ExtraneousNoise tab;
  tab.tilt_psd = Spectrum{{10.0, 100.0}, {1.0, 2.0}};
  CHECK_THROWS_AS(tab.require_covers(std::vector<double>{1.0, 50.0}), DomainError);
}

TEST_CASE("noise budget") {
  const auto osc = pendulum();
  const auto b = pendulum_beam();
  readout::ExtraneousNoise n;
  n.tilt_psd = 1e-20;
  n.suppression = 1e-5;
  const auto grid = logspace(100.0, 1e5, 501);
  const auto budget = readout::observed_angle_psd(osc, b, n, Lever::mirrored, grid);
  for (std::size_t i = 0; i < budget.size(); ++i) {
    const double sum = budget.intrinsic[i] + budget.back_action[i] +
                       budget.imprecision_quantum[i] + budget.imprecision_tilt[i] +
                       budget.imprecision_displacement[i];
    REQUIRE(budget.total[i] == rel(sum, 1e-15));
    REQUIRE(budget.intrinsic[i] >= 0.0);
    REQUIRE(budget.back_action[i] >= 0.0);
  }

  // At T = 0 with light on, the total lies above the zero-point spectrum.
  const auto cold = pendulum(kQ, 0.0);
  const auto zp = mech::intrinsic_spectrum(cold, grid);
  const auto cb = readout::observed_angle_psd(cold, b, {}, Lever::mirrored, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) REQUIRE(cb.total[i] > zp.value[i]);

  // Angle-referred photocurrent equals physical + mirrored imprecision.
  const auto phys = mech::intrinsic_spectrum(osc, grid);
  const auto ref = readout::photocurrent_psd(b, phys, {}, Lever::mirrored, grid, true);
  const double s_imp = readout::angular_imprecision(b, Lever::mirrored);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    REQUIRE(ref.value[i] == rel(phys.value[i] + s_imp, 1e-12));
  }
  const auto amps = readout::photocurrent_psd(b, phys, {}, Lever::mirrored, grid);
  CHECK(amps.value[7] == rel(ref.value[7] * readout::photocurrent_gain(b), 1e-12));
  CHECK_THROWS_AS(readout::photocurrent_psd(b, phys, {}, Lever::mirrored,
                                            std::vector<double>{1.0, 2.0}),
                  DomainError);
}
