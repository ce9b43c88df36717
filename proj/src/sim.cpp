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

#include "torquill/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "fft.hpp"

namespace torquill::sim {

using constants::two_pi;
using cplx = std::complex<double>;

void TimeSeries::validate() const {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw DomainError("sample_rate must be positive");
  }
  for (double v : samples) {
    if (!std::isfinite(v)) throw DomainError("time series contains non-finite samples");
  }
}

std::size_t sample_count(double duration, double sample_rate) {
  if (!(duration > 0.0) || !(sample_rate > 0.0)) {
    throw DomainError("duration and sample_rate must be positive");
  }
  const double n = std::round(duration * sample_rate);
  if (n < 2.0) throw DomainError("record must contain at least two samples");
  return static_cast<std::size_t>(n);
}

namespace {
std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

TimeSeries to_time_domain(std::vector<cplx> half, std::size_t n, double sample_rate,
                          std::uint64_t seed, Unit unit) {
  TimeSeries ts{sample_rate, std::vector<double>(n), unit, seed, kGenerator};
  detail::RealFft fft(n);
  half[0] = 0.0;
  if (n % 2 == 0) half[n / 2] = half[n / 2].real();
  fft.inverse(half, ts.samples);
  const double scale = 1.0 / static_cast<double>(n);
  for (auto& v : ts.samples) v *= scale;
  return ts;
}
}  // namespace

std::vector<cplx> white_half_spectrum(std::size_t n, double sample_rate, std::uint64_t seed,
                                      std::uint64_t stream) {
  auto engine = make_engine(seed, stream);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t bins = n / 2 + 1;
  std::vector<cplx> half(bins, 0.0);
  const double nf = static_cast<double>(n) * sample_rate;
  const double interior = std::sqrt(nf / 4.0);
  for (std::size_t k = 1; k < bins; ++k) {
    const double re = gauss(engine);
    const double im = gauss(engine);
    if (n % 2 == 0 && k == n / 2) {
      half[k] = std::sqrt(nf / 2.0) * re;
    } else {
      half[k] = interior * cplx(re, im);
    }
  }
  return half;
}

TimeSeries synthesize_noise(const std::function<double(double)>& psd, double duration,
                            double sample_rate, std::uint64_t seed, Unit unit) {
  const std::size_t n = sample_count(duration, sample_rate);
  auto half = white_half_spectrum(n, sample_rate, seed);
  const double df = sample_rate / static_cast<double>(n);
  for (std::size_t k = 1; k < half.size(); ++k) {
    const double s = psd(df * static_cast<double>(k));
    if (!(s >= 0.0)) throw DomainError("target PSD must be non-negative");
    half[k] *= std::sqrt(s);
  }
  return to_time_domain(std::move(half), n, sample_rate, seed, unit);
}

TimeSeries synthesize_noise(const Spectrum& target, double duration, double sample_rate,
                            std::uint64_t seed) {
  target.validate();
  const std::size_t n = sample_count(duration, sample_rate);
  const double first_bin = sample_rate / static_cast<double>(n);
  const double nyquist = sample_rate / 2.0;
  if (target.freq_hz.front() > first_bin * (1.0 + 1e-12) ||
      target.freq_hz.back() < nyquist * (1.0 - 1e-12)) {
    throw DomainError("target spectrum must cover (0, sample_rate/2]");
  }
  const double lo = target.freq_hz.front();
  const double hi = target.freq_hz.back();
  Unit unit = Unit::rad;
  switch (target.unit) {
    case Unit::v2_per_hz: unit = Unit::volt; break;
    case Unit::a2_per_hz: unit = Unit::ampere; break;
    case Unit::nm2_per_hz: unit = Unit::newton_meter; break;
    case Unit::rad2_per_hz: unit = Unit::rad; break;
    default: unit = Unit::dimensionless; break;
  }
  return synthesize_noise(
      [&](double f) { return target.interpolate(std::clamp(f, lo, hi)); }, duration,
      sample_rate, seed, unit);
}

ClosedLoopRecord simulate_closed_loop(const mech::OscillatorParams& osc,
                                      const beam::BeamParams& beam,
                                      const readout::ExtraneousNoise& noise,
                                      readout::Lever lever, const feedback::FeedbackConfig& fb,
                                      double duration, double sample_rate, std::uint64_t seed) {
  if (sample_rate < 10.0 * osc.frequency_hz()) {
    throw DomainError("sample_rate must be at least 10 f0 for closed-loop simulation");
  }
  fb.validate(osc);
  const std::size_t n = sample_count(duration, sample_rate);
  const double df = sample_rate / static_cast<double>(n);
  const double nyquist = sample_rate / 2.0;
  const std::array<double, 2> span{df, nyquist};
  noise.require_covers(span);
  fb.loop_torque_noise.require_covers(df, nyquist, "feedback.loop_torque_noise");
  readout::angular_imprecision(beam, lever);

  auto torque = white_half_spectrum(n, sample_rate, seed, 0);
  auto imp = white_half_spectrum(n, sample_rate, seed, 1);
  const std::size_t bins = torque.size();
  std::vector<cplx> phys(bins, 0.0), obs(bins, 0.0), fbt(bins, 0.0);
  const auto sb = static_cast<std::ptrdiff_t>(bins);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 1; k < sb; ++k) {
    const double f = df * static_cast<double>(k);
    const cplx t = torque[k] * std::sqrt(feedback::total_torque_psd(osc, beam, noise, fb, f));
    const cplx i = imp[k] * std::sqrt(readout::imprecision_terms(beam, noise, lever, f).total());
    const cplx g = feedback::loop_filter(fb, osc, f);
    const cplx chi_eff = 1.0 / (mech::inverse_susceptibility(osc, f) - g);
    imp[k] = i;
    phys[k] = chi_eff * (t + g * i);
    obs[k] = phys[k] + i;
    fbt[k] = g * obs[k];
  }
  ClosedLoopRecord rec;
  rec.theta_phys = to_time_domain(std::move(phys), n, sample_rate, seed, Unit::rad);
  rec.theta_obs = to_time_domain(std::move(obs), n, sample_rate, seed, Unit::rad);
  rec.torque_fb = to_time_domain(std::move(fbt), n, sample_rate, seed, Unit::newton_meter);
  rec.theta_imp = to_time_domain(std::move(imp), n, sample_rate, seed, Unit::rad);
  return rec;
}

TimeSeries simulate_ringdown(const mech::OscillatorParams& osc, double initial_amplitude,
                             double duration, double sample_rate) {
  const std::size_t n = sample_count(duration, sample_rate);
  TimeSeries ts{sample_rate, std::vector<double>(n), Unit::rad, 0, "deterministic"};
  const double half_rate = 0.5 * osc.gamma0();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = ts.time(i);
    ts.samples[i] = initial_amplitude * std::exp(-half_rate * t) * std::cos(osc.omega0 * t);
  }
  return ts;
}

namespace {
// RBJ low-pass biquad, transposed direct form II.
class Biquad {
 public:
  Biquad(double fc, double fs, double q) {
    const double w0 = two_pi * fc / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double c = std::cos(w0);
    const double a0 = 1.0 + alpha;
    b0_ = (1.0 - c) / 2.0 / a0;
    b1_ = (1.0 - c) / a0;
    b2_ = b0_;
    a1_ = -2.0 * c / a0;
    a2_ = (1.0 - alpha) / a0;
  }
  double step(double x) {
    const double y = b0_ * x + z1_;
    z1_ = b1_ * x - a1_ * y + z2_;
    z2_ = b2_ * x - a2_ * y;
    return y;
  }

 private:
  double b0_, b1_, b2_, a1_, a2_;
  double z1_ = 0.0, z2_ = 0.0;
};

class Butterworth4 {
 public:
  Butterworth4(double fc, double fs)
      : first_(fc, fs, 0.54119610014619698), second_(fc, fs, 1.3065629648763766) {}
  double step(double x) { return second_.step(first_.step(x)); }

 private:
  Biquad first_, second_;
};
}  // namespace

TimeSeries lock_in_demodulate(const TimeSeries& ts, double f_demod, double bandwidth) {
  ts.validate();
  if (!(f_demod > 0.0) || f_demod >= ts.sample_rate / 2.0) {
    throw DomainError("demodulation frequency must lie below Nyquist");
  }
  if (!(bandwidth > 0.0) || bandwidth >= f_demod) {
    throw DomainError("lock-in bandwidth must be positive and below f_demod");
  }
  Butterworth4 lp_i(bandwidth, ts.sample_rate);
  Butterworth4 lp_q(bandwidth, ts.sample_rate);
  TimeSeries env{ts.sample_rate, std::vector<double>(ts.size()), ts.unit, ts.seed, ts.generator};
  const double w = two_pi * f_demod;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double phase = w * ts.time(i);
    const double in_phase = lp_i.step(ts.samples[i] * std::cos(phase));
    const double quadrature = lp_q.step(ts.samples[i] * std::sin(phase));
    env.samples[i] = 2.0 * std::hypot(in_phase, quadrature);
  }
  return env;
}

double lock_in_settling_time(double bandwidth) { return 3.0 / bandwidth; }

double aod_tilt_amplitude(double wavelength, double v_acoustic, double f_mod_depth) {
  if (!(wavelength > 0.0) || !(v_acoustic > 0.0) || f_mod_depth < 0.0) {
    throw DomainError("AOD parameters must be positive");
  }
  return wavelength / v_acoustic * f_mod_depth;
}

TimeSeries aod_tone(const beam::BeamParams& beam, const AodTone& tone, double duration,
                    double sample_rate, double noise_rms, std::uint64_t seed) {
  if (!(tone.f_mod_rate > 0.0) || !(tone.calibration_gain > 0.0)) {
    throw DomainError("AOD tone rate and gain must be positive");
  }
  const double amplitude =
      tone.calibration_gain * aod_tilt_amplitude(beam.wavelength, tone.v_acoustic, tone.f_mod_depth);
  const std::size_t n = sample_count(duration, sample_rate);
  TimeSeries ts{sample_rate, std::vector<double>(n), Unit::volt, seed, "deterministic"};
  const double w = two_pi * tone.f_mod_rate;
  for (std::size_t i = 0; i < n; ++i) ts.samples[i] = amplitude * std::sin(w * ts.time(i));
  if (noise_rms > 0.0) return add_white_noise(ts, noise_rms, seed);
  return ts;
}

TimeSeries add_white_noise(const TimeSeries& ts, double rms, std::uint64_t seed) {
  TimeSeries out = ts;
  auto engine = make_engine(seed, 0x5eed);
  std::normal_distribution<double> gauss(0.0, rms);
  for (auto& v : out.samples) v += gauss(engine);
  out.seed = seed;
  out.generator = kGenerator;
  return out;
}

}  // namespace torquill::sim
