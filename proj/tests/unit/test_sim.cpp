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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "test_support.hpp"
#include "torquill/estimate.hpp"
#include "torquill/sim.hpp"

using namespace torquill;
using namespace torquill::testing;

namespace {
double variance(const sim::TimeSeries& ts) {
  double acc = 0.0;
  for (double x : ts.samples) acc += x * x;
  return acc / static_cast<double>(ts.size());
}
}  // namespace

TEST_CASE("sample count") {
  CHECK(sim::sample_count(1.0, 1000.0) == 1000);
  CHECK(sim::sample_count(0.0105, 1000.0) == 11);
  CHECK_THROWS_AS(sim::sample_count(-1.0, 1000.0), DomainError);
}

TEST_CASE("noise synthesis is reproducible and seed dependent") {
  const auto psd = [](double f) { return 1e-20 / (1.0 + f / 1e3); };
  const auto a = sim::synthesize_noise(psd, 0.5, 20e3, 42);
  const auto b = sim::synthesize_noise(psd, 0.5, 20e3, 42);
  const auto c = sim::synthesize_noise(psd, 0.5, 20e3, 43);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  CHECK(a.seed == 42);
  CHECK(a.generator == sim::kGenerator);

  const auto zero = sim::synthesize_noise([](double) { return 0.0; }, 0.1, 1e3, 1);
  for (double x : zero.samples) REQUIRE(x == 0.0);
}

TEST_CASE("Parseval for every synthesized record") {
  const double fs = 1e6;
  const auto flat = sim::synthesize_noise([](double) { return 2e-6; }, 1.0, fs, 5);
  CHECK(variance(flat) == rel(2e-6 * fs / 2.0, 0.03));

  const auto osc = pendulum(1e3);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto target = [&](double f) { return mech::intrinsic_psd(osc, f) + 1e-20; };
    const auto ts = sim::synthesize_noise(target, 2.0, 400e3, seed);
    double expected = 0.0;
    for (std::size_t k = 1; k <= ts.size() / 2; ++k) expected += target(k / 2.0) / 2.0;
    CHECK(variance(ts) == rel(expected, 0.05));
  }
}

TEST_CASE("tabulated target must cover the band") {
  Spectrum s{{1.0, 1e3}, {1.0, 1.0}};
  CHECK_THROWS_AS(sim::synthesize_noise(s, 1.0, 10e3, 1), DomainError);
  Spectrum ok{{0.1, 5e3}, {1.0, 1.0}};
  CHECK(variance(sim::synthesize_noise(ok, 4.0, 10e3, 1)) == rel(5e3, 0.05));
}

TEST_CASE("ringdown record") {
  const auto osc = pendulum(1e4);
  const auto r = sim::simulate_ringdown(osc, 2e-6, 0.1, 400e3);
  for (std::size_t i : {0ul, 1234ul, 39999ul}) {
    const double t = r.time(i);
    CHECK(r.samples[i] == doctest::Approx(2e-6 * std::exp(-osc.gamma0() * t / 2.0) *
                                          std::cos(osc.omega0 * t))
                             .epsilon(1e-12)
                             .scale(2e-6));
  }
  CHECK(sim::simulate_ringdown(osc, 2e-6, 0.1, 400e3).samples == r.samples);
}

TEST_CASE("lock-in demodulation") {
  const double fs = 200e3, fd = 10e3, bw = 100.0;
  sim::TimeSeries tone{fs, std::vector<double>(sim::sample_count(0.2, fs)), Unit::volt};
  for (std::size_t i = 0; i < tone.size(); ++i)
    tone.samples[i] = std::cos(constants::two_pi * fd * tone.time(i) + 0.3);
  const auto env = sim::lock_in_demodulate(tone, fd, bw);
  const auto settle = static_cast<std::size_t>(sim::lock_in_settling_time(bw) * fs);
  for (std::size_t i = settle; i < env.size(); i += 97) REQUIRE(env.samples[i] == rel(1.0, 0.01));

  const auto off = sim::lock_in_demodulate(tone, fd + 10.0 * bw, bw);
  for (std::size_t i = settle; i < off.size(); i += 97) REQUIRE(off.samples[i] < 0.01);

  // Ringdown envelope decays at G0 / 2.
  const auto osc = pendulum(1e4);
  const auto rd = sim::simulate_ringdown(osc, 1.0, 0.3, 400e3);
  const auto e = sim::lock_in_demodulate(rd, osc.frequency_hz(), bw);
  const std::size_t i0 = static_cast<std::size_t>(0.05 * 400e3);
  const std::size_t i1 = static_cast<std::size_t>(0.25 * 400e3);
  const double g = 2.0 * std::log(e.samples[i0] / e.samples[i1]) / (e.time(i1) - e.time(i0));
  CHECK(g == rel(osc.gamma0(), 0.02));
}

TEST_CASE("AOD tone") {
  beam::BeamParams b;
  CHECK(sim::aod_tilt_amplitude(b.wavelength, 5700.0, 100e3) == rel(1.866666666666667e-05, 1e-12));
  sim::AodTone tone;
  tone.f_mod_depth = 0.0;
  const auto zero = sim::aod_tone(b, tone, 0.01, 1e6);
  for (double x : zero.samples) REQUIRE(x == 0.0);
  tone.f_mod_depth = 50e3;
  tone.calibration_gain = 2e4;
  const double a1 = estimate::tone_amplitude(sim::aod_tone(b, tone, 0.01, 1e6), tone.f_mod_rate);
  tone.f_mod_depth = 100e3;
  const double a2 = estimate::tone_amplitude(sim::aod_tone(b, tone, 0.01, 1e6), tone.f_mod_rate);
  CHECK(a2 == rel(2.0 * a1, 1e-9));
  CHECK(a2 == rel(2e4 * 1.866666666666667e-05, 1e-9));
}

TEST_CASE("closed-loop simulation") {
  const auto osc = pendulum(1e4);
  const auto b = pendulum_beam();
  feedback::FeedbackConfig fb;
  fb.gamma_fb = 99.0 * osc.gamma0();
  const auto a = sim::simulate_closed_loop(osc, b, {}, readout::Lever::mirrored, fb, 0.5, 400e3, 9);
  const auto c = sim::simulate_closed_loop(osc, b, {}, readout::Lever::mirrored, fb, 0.5, 400e3, 9);
  CHECK(a.theta_phys.samples == c.theta_phys.samples);
  CHECK(a.theta_obs.samples == c.theta_obs.samples);
  CHECK(a.torque_fb.unit == Unit::newton_meter);
  // The observed angle is the physical angle plus the injected imprecision.
  for (std::size_t i = 0; i < a.theta_obs.size(); i += 1001) {
    REQUIRE(a.theta_obs.samples[i] ==
            doctest::Approx(a.theta_phys.samples[i] + a.theta_imp.samples[i]).scale(1e-12));
  }
  CHECK_THROWS_AS(
      sim::simulate_closed_loop(osc, b, {}, readout::Lever::mirrored, fb, 0.5, 100e3, 9),
      DomainError);
}

TEST_CASE("closed-loop spectra match the analytic model") {
  const auto osc = pendulum(1e4);
  const auto b = pendulum_beam();
  for (double ratio : {1.0, 100.0, 5000.0}) {
    feedback::FeedbackConfig fb;
    fb.gamma_fb = (ratio - 1.0) * osc.gamma0();
    std::vector<sim::TimeSeries> obs;
    for (std::uint64_t s = 0; s < 4; ++s)
      obs.push_back(sim::simulate_closed_loop(osc, b, {}, readout::Lever::mirrored, fb, 2.0,
                                              400e3, 300 + s)
                        .theta_obs);
    estimate::WelchOptions wo;
    wo.segment_length = 40000;
    const auto est = estimate::welch_psd(obs, wo);
    std::vector<double> grid;
    std::vector<double> values;
    for (std::size_t i = 0; i < est.size(); ++i) {
      if (std::abs(est.freq_hz[i] - kF0) < 3e3) {
        grid.push_back(est.freq_hz[i]);
        values.push_back(est.value[i]);
      }
    }
    // Blocks of 21 bins centred on the peak bin, each compared with the model
    // integrated on a fine grid, since the bare peak is narrower than a bin.
    const double df = est.freq_hz[1] - est.freq_hz[0];
    const auto peak = static_cast<std::size_t>(
        std::min_element(grid.begin(), grid.end(),
                         [](double a, double c) { return std::abs(a - kF0) < std::abs(c - kF0); }) -
        grid.begin());
    constexpr std::size_t block = 21;
    double worst = 0.0;
    for (std::size_t i = (peak + block / 2 + 1) % block; i + block <= grid.size(); i += block) {
      double e = 0.0;
      for (std::size_t k = i; k < i + block; ++k) e += values[k] * df;
      const double lo = grid[i] - 0.5 * df;
      const double hi = grid[i + block - 1] + 0.5 * df;
      std::vector<double> fine(4201);
      for (std::size_t k = 0; k < fine.size(); ++k)
        fine[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(fine.size() - 1);
      const auto model =
          feedback::closed_loop_observed_psd(osc, b, {}, readout::Lever::mirrored, fb, fine);
      const double m = integrate(model);
      worst = std::max(worst, std::abs(e / m - 1.0));
    }
    INFO("ratio " << ratio);
    CHECK(worst < 0.25);
  }
}
