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

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "torquill/beam.hpp"
#include "torquill/feedback.hpp"
#include "torquill/mech.hpp"
#include "torquill/readout.hpp"

namespace torquill::app {

/// Invalid or unreadable configuration. `field()` is the dotted key path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class Spacing { linear, log };

struct GridConfig {
  double f_min = 30e3;
  double f_max = 42e3;
  std::size_t points = 4001;
  Spacing spacing = Spacing::log;
  /// Adds a linear grid of `points` within +-100 linewidths of resonance.
  bool refine = true;
};

struct SimConfig {
  double duration = 1.0;
  double sample_rate = 400e3;
  std::uint64_t seed = 1;
  std::size_t segment_length = 0;  // Welch segment; 0 means duration / 8
};

struct RingdownConfig {
  double amplitude = 1e-6;   // rad
  double duration = 0.5;     // s
  double sample_rate = 400e3;
  double bandwidth = 100.0;  // Hz, lock-in low-pass corner
  double noise_rms = 0.0;    // rad
};

struct CalibrateConfig {
  double v_acoustic = 5700.0;
  double gain = 1.0;            // V per rad of beam deflection
  double rate = 10e3;           // Hz
  std::vector<double> depths{20e3, 40e3, 60e3, 80e3, 100e3};
  double noise_rms = 0.0;       // V
  double duration = 0.01;
  double sample_rate = 1e6;
};

enum class FitModel { lorentzian, ringdown, occupancy };

struct FitConfig {
  FitModel model = FitModel::lorentzian;
  std::filesystem::path input;     // relative to the config file
  std::size_t segment_length = 0;  // for time-series input; 0 means length / 100
  double window_hz = 0.0;          // half window about f0; 0 keeps the whole spectrum
  double exclusion_hz = -1.0;      // negative selects 3 resolution bandwidths
  std::size_t averages = 0;        // for spectrum CSV input
  double rad_per_volt = 1.0;       // calibration for volt input
  double flag_threshold = 4.0;
};

struct CoolConfig {
  std::vector<double> gains;       // gamma_fb values, rad/s
  double gain_min = 0.0;           // log sweep when `gains` is empty
  double gain_max = 0.0;
  std::size_t gain_points = 0;
  std::size_t window_points = 4001;
  double half_widths = 50.0;
};

struct ScenarioConfig {
  mech::OscillatorParams oscillator;
  beam::BeamParams beam;
  readout::ExtraneousNoise extraneous;
  readout::Lever lever = readout::Lever::mirrored;
  feedback::FeedbackConfig feedback;
  GridConfig grid;
  SimConfig sim;
  RingdownConfig ringdown;
  CalibrateConfig calibrate;
  FitConfig fit;
  CoolConfig cool;
  std::filesystem::path source;  // file the config was read from
  std::string sha256;            // hex digest of the file bytes

  /// Throws ConfigError naming the first offending field.
  void validate() const;
};

/// Reads an INI file, or JSON when the extension is .json. Unknown keys
/// are rejected so that typos cannot pass silently.
ScenarioConfig load_config(const std::filesystem::path& path);

/// Same as load_config on in-memory text; `json` selects the syntax.
ScenarioConfig parse_config(const std::string& text, bool json,
                            const std::filesystem::path& source = {});

std::vector<double> parse_list(const std::string& text, const std::string& field);

/// Frequency grid of the [grid] block for a given oscillator.
std::vector<double> make_grid(const GridConfig& grid, const mech::OscillatorParams& osc);

std::string sha256_hex(const std::string& bytes);

}  // namespace torquill::app
