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

#include "torquill/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <system_error>

namespace torquill::io {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "binary time series container assumes a little-endian host");

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw IoError("failed to format number");
  return {buf, end};
}

namespace {
double parse_double(std::string_view text, const fs::path& path, std::size_t line) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw IoError(path.string() + ":" + std::to_string(line) + ": invalid number '" +
                  std::string(text) + "'");
  }
  return v;
}

struct TwoColumns {
  std::string header_value;
  std::vector<double> first;
  std::vector<double> second;
};

TwoColumns read_two_columns(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  const auto comma = line.find(',');
  if (comma == std::string::npos) throw IoError(path.string() + ": malformed header");
  TwoColumns cols;
  cols.header_value = line.substr(comma + 1);
  while (!cols.header_value.empty() && cols.header_value.back() == '\r') {
    cols.header_value.pop_back();
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto c = line.find(',');
    if (c == std::string::npos) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected two columns");
    std::string_view view(line);
    cols.first.push_back(parse_double(view.substr(0, c), path, lineno));
    cols.second.push_back(parse_double(view.substr(c + 1), path, lineno));
  }
  return cols;
}

// Unit from a column header of the form "name (unit)".
Unit unit_from_header(const std::string& header, Unit fallback) {
  const auto open = header.find('(');
  const auto close = header.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open) return fallback;
  return unit_from_string(header.substr(open + 1, close - open - 1));
}

fs::path with_ext(const fs::path& p, const char* ext) {
  fs::path out = p;
  if (p.extension() == ".bin" || p.extension() == ".json") out.replace_extension();
  out += ext;
  return out;
}
}  // namespace

void write_text_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_timeseries_csv(const sim::TimeSeries& ts, const fs::path& path) {
  std::string out = "time (s),value (" + std::string(to_string(ts.unit)) + ")\n";
  out.reserve(ts.size() * 40);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    out += format_double(ts.time(i));
    out += ',';
    out += format_double(ts.samples[i]);
    out += '\n';
  }
  write_text_atomic(path, out);
}

sim::TimeSeries read_timeseries_csv(const fs::path& path) {
  auto cols = read_two_columns(path);
  if (cols.first.size() < 2) throw IoError(path.string() + ": need at least two samples");
  sim::TimeSeries ts;
  ts.sample_rate = static_cast<double>(cols.first.size() - 1) / (cols.first.back() - cols.first.front());
  ts.samples = std::move(cols.second);
  ts.unit = unit_from_header(cols.header_value, Unit::dimensionless);
  ts.generator = "csv";
  return ts;
}

void write_timeseries_binary(const sim::TimeSeries& ts, const fs::path& path) {
  const auto bin = with_ext(path, ".bin");
  const auto meta = with_ext(path, ".json");
  std::string raw(ts.size() * sizeof(double), '\0');
  std::memcpy(raw.data(), ts.samples.data(), raw.size());
  write_text_atomic(bin, raw);
  json j{{"format", "float64-le"},
         {"data", bin.filename().string()},
         {"sample_rate", ts.sample_rate},
         {"samples", ts.size()},
         {"unit", std::string(to_string(ts.unit))},
         {"seed", ts.seed},
         {"generator", ts.generator}};
  write_text_atomic(meta, j.dump(2) + "\n");
}

sim::TimeSeries read_timeseries_binary(const fs::path& path) {
  const auto bin = with_ext(path, ".bin");
  const auto meta_path = with_ext(path, ".json");
  json meta;
  try {
    meta = json::parse(read_text(meta_path));
  } catch (const json::exception& e) {
    throw IoError(meta_path.string() + ": " + e.what());
  }
  const std::string raw = read_text(bin);
  if (raw.size() % sizeof(double) != 0) throw IoError(bin.string() + ": truncated binary data");
  sim::TimeSeries ts;
  ts.samples.resize(raw.size() / sizeof(double));
  std::memcpy(ts.samples.data(), raw.data(), raw.size());
  try {
    ts.sample_rate = meta.at("sample_rate").get<double>();
    ts.unit = unit_from_string(meta.at("unit").get<std::string>());
    ts.seed = meta.value("seed", std::uint64_t{0});
    ts.generator = meta.value("generator", std::string{});
    if (meta.at("samples").get<std::size_t>() != ts.size()) {
      throw IoError(bin.string() + ": sample count disagrees with sidecar");
    }
  } catch (const json::exception& e) {
    throw IoError(meta_path.string() + ": " + e.what());
  }
  return ts;
}

sim::TimeSeries read_timeseries(const fs::path& path) {
  if (path.extension() == ".csv") return read_timeseries_csv(path);
  return read_timeseries_binary(path);
}

void write_spectrum_csv(const Spectrum& s, const fs::path& path) {
  std::string out = "freq_hz (Hz),psd (" + std::string(to_string(s.unit)) + ")\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += format_double(s.freq_hz[i]);
    out += ',';
    out += format_double(s.value[i]);
    out += '\n';
  }
  write_text_atomic(path, out);
}

Spectrum read_spectrum_csv(const fs::path& path) {
  auto cols = read_two_columns(path);
  Spectrum s{std::move(cols.first), std::move(cols.second),
             unit_from_header(cols.header_value, Unit::rad2_per_hz), 0};
  s.validate();
  return s;
}

}  // namespace torquill::io
