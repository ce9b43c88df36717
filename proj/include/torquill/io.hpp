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

#include <filesystem>
#include <string>
#include <string_view>

#include "torquill/common.hpp"
#include "torquill/sim.hpp"

/// File formats shared by the CLI and the estimators.
///
/// * Time series CSV: header `time (s),value (<unit>)`, one row per sample.
/// * Time series binary: `<stem>.bin` holds raw little-endian float64
///   samples; `<stem>.json` is the sidecar
///   {format, sample_rate, samples, unit, seed, generator}.
/// * Spectrum CSV: header `freq_hz (Hz),psd (<unit>)`.
///
/// Numbers are written in the shortest form that round-trips exactly,
/// independent of the locale. Writes go to a temporary file renamed into place.
namespace torquill::io {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Locale-independent shortest-exact text for a double.
std::string format_double(double v);

void write_text_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_text(const std::filesystem::path& path);

void write_timeseries_csv(const sim::TimeSeries& ts, const std::filesystem::path& path);
sim::TimeSeries read_timeseries_csv(const std::filesystem::path& path);

/// Writes `<stem>.bin` and `<stem>.json`; `path` may name either or neither.
void write_timeseries_binary(const sim::TimeSeries& ts, const std::filesystem::path& path);
sim::TimeSeries read_timeseries_binary(const std::filesystem::path& path);

/// Dispatches on extension: .csv, or .bin/.json for the binary container.
sim::TimeSeries read_timeseries(const std::filesystem::path& path);

void write_spectrum_csv(const Spectrum& s, const std::filesystem::path& path);
Spectrum read_spectrum_csv(const std::filesystem::path& path);

}  // namespace torquill::io
