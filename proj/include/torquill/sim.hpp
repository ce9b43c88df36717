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

#include <complex>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "torquill/beam.hpp"
#include "torquill/common.hpp"
#include "torquill/feedback.hpp"
#include "torquill/mech.hpp"
#include "torquill/readout.hpp"

/// Time-domain synthesis. Every stochastic record is a pure function of
/// (parameters, seed): Gaussian noise is shaped in the frequency domain
/// and linear dynamics are applied as transfer functions on FFT bins.
namespace torquill::sim {

/// Name recorded in output metadata for the RNG/synthesis pipeline.
inline constexpr const char* kGenerator = "mt19937_64/std::normal_distribution/fftw-r2c";

struct TimeSeries {
  double sample_rate = 0.0;  // Hz
  std::vector<double> samples;
  Unit unit = Unit::rad;
  std::uint64_t seed = 0;
  std::string generator;

  std::size_t size() const noexcept { return samples.size(); }
  double duration() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  double time(std::size_t i) const noexcept { return static_cast<double>(i) / sample_rate; }
  void validate() const;
};

/// Number of samples for a record, round(duration * sample_rate).
std::size_t sample_count(double duration, double sample_rate);

/// Complex Gaussian half spectrum (bins 0..N/2) whose inverse FFT, scaled
/// by 1/N, is white noise with unit one-sided PSD. DC is zero, the Nyquist
/// bin is real. `stream` selects an independent substream of `seed`.
std::vector<std::complex<double>> white_half_spectrum(std::size_t n, double sample_rate,
                                                      std::uint64_t seed,
                                                      std::uint64_t stream = 0);

/// Stationary Gaussian record whose one-sided PSD is `psd(f)`.
TimeSeries synthesize_noise(const std::function<double(double)>& psd, double duration,
                            double sample_rate, std::uint64_t seed, Unit unit = Unit::rad);

/// As above for a tabulated target, which must cover (0, sample_rate/2]:
/// first grid point at or below the first FFT bin, last at or above Nyquist.
TimeSeries synthesize_noise(const Spectrum& target, double duration, double sample_rate,
                            std::uint64_t seed);

struct ClosedLoopRecord {
  TimeSeries theta_phys;  // rad
  TimeSeries theta_obs;   // rad
  TimeSeries torque_fb;   // N m
  TimeSeries theta_imp;   // injected imprecision realization, rad
};

/// Frequency-domain closed loop: torque noise and imprecision noise are
/// independent realizations pushed through chi_eff and the loop filter.
/// Requires sample_rate >= 10 f0.
ClosedLoopRecord simulate_closed_loop(const mech::OscillatorParams& osc,
                                      const beam::BeamParams& beam,
                                      const readout::ExtraneousNoise& noise,
                                      readout::Lever lever, const feedback::FeedbackConfig& fb,
                                      double duration, double sample_rate, std::uint64_t seed);

/// Noiseless A e^{-G0 t/2} cos(W0 t).
TimeSeries simulate_ringdown(const mech::OscillatorParams& osc, double initial_amplitude,
                             double duration, double sample_rate);

/// Quadrature demodulation followed by a 4th-order Butterworth low-pass of
/// corner `bandwidth`. Returns the amplitude envelope 2 sqrt(I^2 + Q^2).
TimeSeries lock_in_demodulate(const TimeSeries& ts, double f_demod, double bandwidth);

/// Time for the lock-in low-pass to settle to 1e-3 after a step.
double lock_in_settling_time(double bandwidth);

struct AodTone {
  double v_acoustic = 5700.0;       // m/s
  double f_mod_depth = 100e3;       // Hz, AOD drive frequency change
  double f_mod_rate = 10e3;         // Hz
  double calibration_gain = 1.0;    // SPD volts per rad of beam deflection
};

/// Beam deflection amplitude (lambda / v_c) * depth.
double aod_tilt_amplitude(double wavelength, double v_acoustic, double f_mod_depth);

/// SPD voltage for a sinusoidal AOD deflection; optional white voltage noise.
TimeSeries aod_tone(const beam::BeamParams& beam, const AodTone& tone, double duration,
                    double sample_rate, double noise_rms = 0.0, std::uint64_t seed = 0);

/// Adds white Gaussian noise of the given RMS to a copy of `ts`.
TimeSeries add_white_noise(const TimeSeries& ts, double rms, std::uint64_t seed);

}  // namespace torquill::sim
