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
#include <numeric>
#include <random>
#include <vector>

#include "../../src/lm.hpp"
#include "test_support.hpp"
#include "torquill/estimate.hpp"
#include "torquill/sim.hpp"

using namespace torquill;
using namespace torquill::testing;

namespace {

sim::TimeSeries white(std::size_t n, double fs, std::uint64_t seed, double rms = 1.0) {
  sim::TimeSeries ts{fs, std::vector<double>(n, 0.0), Unit::volt};
  return sim::add_white_noise(ts, rms, seed);
}

Spectrum model_spectrum(const std::vector<double>& grid, auto&& fn, Unit unit = Unit::rad2_per_hz) {
  Spectrum s{grid, std::vector<double>(grid.size()), unit, 0};
  for (std::size_t i = 0; i < grid.size(); ++i) s.value[i] = fn(grid[i]);
  return s;
}

}  // namespace

TEST_CASE("Welch levels") {
  const double fs = 10e3;
  const auto ts = white(1 << 20, fs, 3);
  estimate::WelchOptions wo;
  wo.segment_length = 1024;
  const auto s = estimate::welch_psd(ts, wo);
  CHECK(s.unit == Unit::v2_per_hz);
  CHECK(s.freq_hz.front() == rel(fs / 1024.0, 1e-14));
  CHECK(s.freq_hz.back() == rel(fs / 2.0, 1e-14));
  const double mean = std::accumulate(s.value.begin(), s.value.end(), 0.0) / s.size();
  CHECK(mean == rel(1.0 / (fs / 2.0), 0.05));
  CHECK(s.averages == 2047);

  // A sinusoid integrates to A^2 / 2.
  sim::TimeSeries tone{fs, std::vector<double>(1 << 16), Unit::volt};
  for (std::size_t i = 0; i < tone.size(); ++i)
    tone.samples[i] = 3.0 * std::sin(constants::two_pi * 1234.5 * tone.time(i));
  CHECK(integrate(estimate::welch_psd(tone, wo)) == rel(4.5, 0.03));

  sim::TimeSeries zero{fs, std::vector<double>(4096, 0.0), Unit::rad};
  for (double v : estimate::welch_psd(zero, wo).value) REQUIRE(v == 0.0);

  sim::TimeSeries short_ts{fs, std::vector<double>(100, 1.0), Unit::rad};
  CHECK_THROWS_AS(estimate::welch_psd(short_ts, wo), DomainError);
  wo.overlap = 0.95;
  CHECK_THROWS_AS(estimate::welch_psd(ts, wo), DomainError);
}

TEST_CASE("Welch serial and parallel paths agree bitwise") {
  const auto ts = white(1 << 18, 1e4, 8);
  estimate::WelchOptions wo;
  wo.segment_length = 2048;
  const auto p = estimate::welch_psd(ts, wo, Exec::parallel);
  const auto s = estimate::welch_psd(ts, wo, Exec::serial);
  CHECK(p.value == s.value);
  const auto c1 = estimate::coherence(ts, white(1 << 18, 1e4, 9), wo, Exec::parallel);
  const auto c2 = estimate::coherence(ts, white(1 << 18, 1e4, 9), wo, Exec::serial);
  CHECK(c1.value == c2.value);
}

TEST_CASE("Welch is unbiased across seeds") {
  const double fs = 10e3;
  const auto target = [](double f) { return 1e-18 / (1.0 + std::pow(f / 1e3, 2)) + 1e-20; };
  estimate::WelchOptions wo;
  wo.segment_length = 256;
  wo.overlap = 0.0;
  std::vector<double> mean;
  const int seeds = 50;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto ts = sim::synthesize_noise(target, 25.6, fs, 100 + seed);
    const auto s = estimate::welch_psd(ts, wo);
    if (mean.empty()) mean.assign(s.size(), 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) mean[i] += s.value[i] / target(s.freq_hz[i]) / seeds;
  }
  double worst = 0.0;
  // DC and Nyquist are not doubled in the one-sided estimate.
  for (std::size_t i = 1; i + 1 < mean.size(); ++i) worst = std::max(worst, std::abs(mean[i] - 1.0));
  CHECK(worst < 0.02);
}

TEST_CASE("coherence") {
  const double fs = 1e4;
  estimate::WelchOptions wo;
  wo.segment_length = 1024;
  wo.overlap = 0.0;
  const auto a = white(64 * 1024, fs, 1);
  for (double v : estimate::coherence(a, a, wo).value) REQUIRE(v == rel(1.0, 1e-12));

  const auto b = white(64 * 1024, fs, 2);
  const auto ind = estimate::coherence(a, b, wo);
  const double mean = std::accumulate(ind.value.begin(), ind.value.end(), 0.0) / ind.size();
  CHECK(mean > 1.0 / 128.0);
  CHECK(mean < 2.0 / 64.0);

  // Scaled copy plus independent noise of equal power: coherence 1/2.
  auto c = white(64 * 1024, fs, 3, 2.0);
  for (std::size_t i = 0; i < c.size(); ++i) c.samples[i] += 2.0 * a.samples[i];
  const auto half = estimate::coherence(a, c, wo);
  const double m2 = std::accumulate(half.value.begin(), half.value.end(), 0.0) / half.size();
  CHECK(m2 == doctest::Approx(0.5).epsilon(0.2));

  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    const auto x = white(8192, fs, seed);
    const auto y = white(8192, fs, seed + 100);
    for (double v : estimate::coherence(x, y, wo).value) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }
  wo.segment_length = 64 * 1024;
  CHECK_THROWS_AS(estimate::coherence(a, b, wo), DomainError);
}

TEST_CASE("AOD calibration") {
  const auto c = estimate::aod_calibration(1.0, 1064e-9, 5700.0, 100e3);
  CHECK(c.rad_per_volt == rel(9.333333333333334e-06, 1e-12));
  CHECK(c.method == estimate::CalibrationMethod::aod);
  CHECK_THROWS_AS(estimate::aod_calibration(0.0, 1064e-9, 5700.0, 100e3), DomainError);

  std::vector<estimate::AodPoint> pts;
  for (double d : {20e3, 40e3, 60e3}) pts.push_back({d, d * 1e-5});
  const auto fit = estimate::aod_calibration_fit(pts, 1064e-9, 5700.0);
  CHECK(fit.r_squared == rel(1.0, 1e-12));
  CHECK(std::abs(fit.intercept) < 1e-12);
  pts.resize(2);
  CHECK_THROWS_AS(estimate::aod_calibration_fit(pts, 1064e-9, 5700.0), DomainError);
}

TEST_CASE("calibration round trip is the identity") {
  const estimate::CalibrationFactor cal{1.65e-9, 0.02, estimate::CalibrationMethod::thermal_reference};
  Spectrum v{{1.0, 2.0, 3.0}, {1e-10, 2e-10, 3e-10}, Unit::v2_per_hz};
  const auto angle = cal.to_angle(v);
  CHECK(angle.unit == Unit::rad2_per_hz);
  CHECK(angle.value[1] == rel(2e-10 * 1.65e-9 * 1.65e-9, 1e-15));
  const auto back = cal.to_volt(angle);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(back.value[i] == rel(v.value[i], 1e-15));
  CHECK_THROWS_AS(cal.to_volt(v), DomainError);
  const estimate::CalibrationFactor bad{-1.0, 0.0};
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("Lorentzian fit on its own model") {
  const double f0 = 35.95e3, q = 1e4, floor = 1e-22, peak = 3e-16;
  const auto grid = linspace(f0 - 2e3, f0 + 2e3, 2001);
  const auto s = model_spectrum(grid, [&](double f) {
    const double x = 2.0 * q * (f - f0) / f0;
    return floor + peak / (1.0 + x * x);
  });
  const auto fit = estimate::fit_lorentzian(s, q, f0 * (1 + 2e-5), 0.0);
  CHECK(fit.floor == rel(floor, 1e-6));
  CHECK(fit.peak == rel(peak, 1e-6));
  CHECK(fit.center == rel(f0, 1e-9));
  CHECK(fit.points_used == grid.size());

  const auto excl = estimate::fit_lorentzian(s, q, 0.0, 10.0);
  CHECK(excl.peak == rel(peak, 1e-6));
  CHECK(excl.points_used < grid.size());

  const auto narrow = model_spectrum(linspace(f0 - 10.0, f0 + 10.0, 101),
                                     [&](double) { return floor; });
  CHECK_THROWS_AS(estimate::fit_lorentzian(narrow, q), DomainError);
}

TEST_CASE("temperature and inertia from a thermal peak") {
  const auto osc = pendulum(1e4);
  estimate::LorentzianFit fit;
  fit.peak = mech::intrinsic_psd(osc, osc.frequency_hz());
  fit.center = osc.frequency_hz();
  fit.q_used = 1e4;
  CHECK(estimate::mode_temperature(fit, osc.inertia) == rel(290.0, 1e-6));
  CHECK(estimate::infer_inertia(fit, 290.0, osc.omega0, 1e4) == rel(osc.inertia, 1e-6));
}

TEST_CASE("simulated thermal spectra") {
  const auto osc = pendulum(1e4);
  const double s_imp = 1.06e-22;
  const auto ts = sim::synthesize_noise(
      [&](double f) { return mech::intrinsic_psd(osc, f) + s_imp; }, 25.0, 100e3, 77);
  estimate::WelchOptions wo;
  wo.segment_length = 25000;
  wo.overlap = 0.0;
  const auto full = estimate::welch_psd(ts, wo);
  Spectrum win{{}, {}, full.unit, full.averages};
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (std::abs(full.freq_hz[i] - osc.frequency_hz()) <= 10e3) {
      win.freq_hz.push_back(full.freq_hz[i]);
      win.value.push_back(full.value[i]);
    }
  }
  CHECK(win.averages == 100);
  const auto fit = estimate::fit_lorentzian(win, 1e4);
  CHECK(fit.peak == rel(mech::intrinsic_psd(osc, osc.frequency_hz()), 0.05));
  CHECK(fit.floor == rel(s_imp, 0.03));
  CHECK(estimate::infer_inertia(fit, 290.0, osc.omega0, 1e4) == rel(osc.inertia, 0.05));

  // Two-step calibration of a volt record, and rejection of a buried peak.
  auto volts = ts;
  volts.unit = Unit::volt;
  for (double& x : volts.samples) x /= 1.65e-9;
  Spectrum vwin = win;
  vwin.unit = Unit::v2_per_hz;
  for (double& v : vwin.value) v /= 1.65e-9 * 1.65e-9;
  const auto cal = estimate::thermal_reference_calibration(vwin, osc);
  CHECK(cal.rad_per_volt == rel(1.65e-9, 0.03));
  CHECK(cal.method == estimate::CalibrationMethod::thermal_reference);

  auto buried = vwin;
  const double peak_v = fit.peak / (1.65e-9 * 1.65e-9);
  for (std::size_t i = 0; i < buried.size(); ++i) buried.value[i] += 100.0 * peak_v;
  CHECK_THROWS_AS(estimate::thermal_reference_calibration(buried, osc), FitError);
}

TEST_CASE("ringdown fits") {
  const auto osc = pendulum(1e4);
  sim::TimeSeries env{1000.0, std::vector<double>(500), Unit::rad};
  for (std::size_t i = 0; i < env.size(); ++i)
    env.samples[i] = 2.0 * std::exp(-osc.gamma0() * env.time(i) / 2.0);
  estimate::RingdownOptions ro;
  ro.omega0 = osc.omega0;
  const auto fit = estimate::fit_ringdown(env, ro);
  CHECK(fit.q == rel(1e4, 1e-6));
  CHECK(fit.amplitude == rel(2.0, 1e-6));

  auto flat = env;
  std::fill(flat.samples.begin(), flat.samples.end(), 1.0);
  CHECK_THROWS_AS(estimate::fit_ringdown(flat, ro), FitError);
  auto growing = env;
  std::reverse(growing.samples.begin(), growing.samples.end());
  CHECK_THROWS_AS(estimate::fit_ringdown(growing, ro), FitError);

  // Records at two probe powers (different noise levels) give the same Q.
  std::vector<estimate::RingdownFit> fits;
  for (double noise : {0.005, 0.02}) {
    auto r = sim::add_white_noise(sim::simulate_ringdown(osc, 1.0, 0.5, 400e3), noise, 11);
    const auto e = sim::lock_in_demodulate(r, osc.frequency_hz(), 100.0);
    ro.settle_time = sim::lock_in_settling_time(100.0);
    fits.push_back(estimate::fit_ringdown(e, ro));
  }
  const double sigma_q = std::hypot(fits[0].q * fits[0].sigma_gamma0 / fits[0].gamma0,
                                    fits[1].q * fits[1].sigma_gamma0 / fits[1].gamma0);
  CHECK(std::abs(fits[0].q - fits[1].q) <= 3.0 * sigma_q + 1e-3 * 1e4);
}

TEST_CASE("closed-loop occupancy fit on its own model") {
  const auto osc = pendulum(1e4);
  const double g0 = osc.gamma0(), w0 = osc.omega0;
  const double geff = 300.0 * g0, s_imp = 1.06e-22;
  const double a = 4.0 * constants::k_boltzmann * 290.0 * g0 / osc.inertia;
  const auto grid = linspace(osc.frequency_hz() - 20 * geff / constants::two_pi,
                             osc.frequency_hz() + 20 * geff / constants::two_pi, 1201);
  const auto obs = model_spectrum(grid, [&](double f) {
    const double w = constants::two_pi * f, d = w0 * w0 - w * w;
    const double im = w0 * g0 + w * (geff - g0);
    return (a * osc.frequency_hz() / f + s_imp * (d * d + w0 * w0 * g0 * g0)) / (d * d + im * im);
  });
  feedback::FeedbackConfig fb;
  fb.gamma_fb = geff - g0;
  const auto fit = estimate::occupancy_from_data(obs, {1.0, 0.0}, osc, fb, pendulum_beam());
  CHECK(fit.gamma_eff == rel(geff, 1e-6));
  CHECK(fit.s_imp == rel(s_imp, 1e-6));
  CHECK(fit.torque_term == rel(a, 1e-6));
  CHECK(fit.center == rel(osc.frequency_hz(), 1e-9));
  CHECK_FALSE(fit.flagged);

  const auto rep = estimate::report(fit);
  CHECK(rep.model == "closed_loop_observed");
  const auto json = estimate::to_json(rep);
  for (const char* key : {"\"model\"", "\"params\"", "\"sigma\"", "\"residual_norm\"",
                          "\"grid_span\"", "\"flagged\""})
    CHECK(json.find(key) != std::string::npos);

  // A spectrum of the wrong shape is flagged rather than rejected.
  auto wrong = obs;
  for (std::size_t i = 0; i < wrong.size(); ++i) wrong.value[i] *= 1.0 + 0.5 * std::sin(i * 0.05);
  wrong.averages = 100;
  CHECK(estimate::occupancy_from_data(wrong, {1.0, 0.0}, osc, fb, pendulum_beam()).flagged);
}

TEST_CASE("closed-loop occupancy from model spectra") {
  // Open loop and the reference operating point.
  for (double q : {1e4, 1.365e7}) {
    const auto osc = pendulum(q);
    const auto b = pendulum_beam();
    const auto op = feedback::operating_point(osc, b, {}, readout::Lever::mirrored);
    feedback::FeedbackConfig fb;
    const auto grid = feedback::resonance_window(osc, osc.gamma0(), 2001, 10.0);
    const auto obs =
        feedback::closed_loop_observed_psd(osc, b, {}, readout::Lever::mirrored, fb, grid);
    CHECK(estimate::occupancy_from_data(obs, {1.0, 0.0}, osc, fb, b).n_eff ==
          rel(op.n_th, 0.05));
  }
  const auto osc = pendulum();
  const auto b = pendulum_beam();
  const auto op = feedback::operating_point(osc, b, {}, readout::Lever::mirrored);
  feedback::FeedbackConfig fb;
  fb.gamma_fb = feedback::closed_form_optimum(op).gamma_eff - op.gamma0;
  const auto grid = feedback::resonance_window(osc, fb.gamma_fb, 2001, 10.0);
  const auto obs = feedback::closed_loop_observed_psd(osc, b, {}, readout::Lever::mirrored, fb, grid);
  CHECK(estimate::occupancy_from_data(obs, {1.0, 0.0}, osc, fb, b).n_eff == rel(5964.0, 0.10));
}

TEST_CASE("resonant occupancy on model spectra") {
  const auto osc = pendulum(1e4);
  const auto b = pendulum_beam();
  const auto op = feedback::operating_point(osc, b, {}, readout::Lever::mirrored);
  for (double ratio : {1.0, 10.0, 1000.0}) {
    feedback::FeedbackConfig fb;
    fb.gamma_fb = (ratio - 1.0) * osc.gamma0();
    const double geff = feedback::effective_damping(osc, fb);
    const auto grid = feedback::resonance_window(osc, geff, 4001, 5.0);
    const auto phys =
        feedback::closed_loop_physical_psd(osc, b, {}, readout::Lever::mirrored, fb, grid);
    const auto fit = estimate::resonant_occupancy(phys, osc, geff * 1.2, 2.0);
    const double cf = feedback::occupancy_closed_form(op.n_th, op.n_ba, op.n_imp, op.gamma0, geff);
    // The resonant model has a white torque; the 1/f structural torque
    // skews the width by ~2% once the line spans kilohertz.
    CHECK(fit.gamma_eff == rel(geff, 0.03));
    CHECK(fit.n_eff == rel(cf, 0.01));
  }
}

TEST_CASE("Levenberg-Marquardt") {
  // y = 3 exp(-0.7 x), recovered from a poor start; a bound is respected.
  std::vector<double> x, y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(i * 0.1);
    y.push_back(3.0 * std::exp(-0.7 * i * 0.1));
  }
  detail::LmProblem p;
  p.residuals = [&](const Eigen::VectorXd& q) {
    Eigen::VectorXd r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = q[0] * std::exp(-q[1] * x[i]) - y[i];
    return r;
  };
  p.jacobian = [&](const Eigen::VectorXd& q) {
    Eigen::MatrixXd j(x.size(), 2);
    for (std::size_t i = 0; i < x.size(); ++i) {
      j(i, 0) = std::exp(-q[1] * x[i]);
      j(i, 1) = -q[0] * x[i] * std::exp(-q[1] * x[i]);
    }
    return j;
  };
  const auto r = detail::levenberg_marquardt(p, Eigen::Vector2d(1.0, 3.0));
  CHECK(r.converged);
  CHECK(r.params[0] == rel(3.0, 1e-8));
  CHECK(r.params[1] == rel(0.7, 1e-8));

  p.lower = Eigen::Vector2d(0.0, 1.0);
  p.upper = Eigen::Vector2d(10.0, 5.0);
  const auto b = detail::levenberg_marquardt(p, Eigen::Vector2d(1.0, 3.0));
  CHECK(b.params[1] >= 1.0);
}
