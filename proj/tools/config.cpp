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

#include "config.hpp"

#include "torquill/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/json_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace torquill::app {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"oscillator", {"f0_hz", "quality_factor", "inertia", "temperature"}},
      {"beam", {"wavelength", "waist_radius", "power", "efficiency", "gouy_shift", "responsivity"}},
      {"readout", {"lever"}},
      {"extraneous",
       {"tilt_psd", "displacement_psd", "force_psd", "beam_offset", "suppression"}},
      {"feedback",
       {"gamma_fb", "band_low", "band_high", "model", "extra_delay", "loop_torque_noise"}},
      {"grid", {"f_min", "f_max", "points", "spacing", "refine"}},
      {"sim", {"duration", "sample_rate", "seed", "segment_length"}},
      {"ringdown", {"amplitude", "duration", "sample_rate", "bandwidth", "noise_rms"}},
      {"calibrate",
       {"v_acoustic", "gain", "rate", "depths", "noise_rms", "duration", "sample_rate"}},
      {"fit",
       {"model", "input", "segment_length", "window_hz", "exclusion_hz", "averages",
        "rad_per_volt", "flag_threshold"}},
      {"cool", {"gains", "gain_min", "gain_max", "gain_points", "window_points", "half_widths"}},
  };
  return s;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& raw, const std::string& field) {
  const std::string text = trim(raw);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(field, "expected a number, got '" + text + "'");
  }
  if (!std::isfinite(v)) throw ConfigError(field, "must be finite");
  return v;
}

std::uint64_t to_uint(const std::string& raw, const std::string& field) {
  const std::string text = trim(raw);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(field, "expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& root) : root_(root) {}

  const pt::ptree* node(const std::string& path) const {
    const auto child = root_.get_child_optional(pt::ptree::path_type(path, '.'));
    return child ? &*child : nullptr;
  }

  double number(const std::string& path, double fallback) const {
    const auto* n = node(path);
    return n ? to_double(n->data(), path) : fallback;
  }
  double required(const std::string& path) const {
    const auto* n = node(path);
    if (!n) throw ConfigError(path, "required field is missing");
    return to_double(n->data(), path);
  }
  std::uint64_t uint(const std::string& path, std::uint64_t fallback) const {
    const auto* n = node(path);
    return n ? to_uint(n->data(), path) : fallback;
  }
  std::string text(const std::string& path, const std::string& fallback) const {
    const auto* n = node(path);
    return n ? trim(n->data()) : fallback;
  }
  bool flag(const std::string& path, bool fallback) const {
    const auto* n = node(path);
    if (!n) return fallback;
    const auto t = trim(n->data());
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw ConfigError(path, "expected true or false, got '" + t + "'");
  }
  /// JSON arrays or comma-separated text.
  std::vector<double> list(const std::string& path, std::vector<double> fallback) const {
    const auto* n = node(path);
    if (!n) return fallback;
    if (!n->empty()) {
      std::vector<double> out;
      for (const auto& [key, child] : *n) {
        if (!key.empty()) throw ConfigError(path, "expected a list");
        out.push_back(to_double(child.data(), path));
      }
      return out;
    }
    return parse_list(n->data(), path);
  }

 private:
  const pt::ptree& root_;
};

void reject_unknown(const pt::ptree& root) {
  for (const auto& [section, body] : root) {
    const auto it = schema().find(section);
    if (it == schema().end()) throw ConfigError(section, "unknown section");
    if (body.empty() && !trim(body.data()).empty()) {
      throw ConfigError(section, "expected a section, got a value");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ConfigError(section + "." + key, "unknown key");
    }
  }
}

// Maps a library validation message "a.b must ..." to a field-path error.
[[noreturn]] void rethrow_as_config(const std::exception& e) {
  const std::string what = e.what();
  const auto space = what.find(' ');
  const std::string head = what.substr(0, space);
  if (head.find('.') != std::string::npos) {
    throw ConfigError(head, what.substr(space == std::string::npos ? what.size() : space + 1));
  }
  throw ConfigError("", what);
}

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

}  // namespace

std::vector<double> parse_list(const std::string& text, const std::string& field) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) throw ConfigError(field, "empty list entry");
    out.push_back(to_double(item, field));
  }
  if (out.empty()) throw ConfigError(field, "list is empty");
  return out;
}

ScenarioConfig parse_config(const std::string& text, bool json,
                            const std::filesystem::path& source) {
  pt::ptree root;
  std::istringstream in(text);
  try {
    if (json) {
      pt::read_json(in, root);
    } else {
      pt::read_ini(in, root);
    }
  } catch (const pt::file_parser_error& e) {
    throw ConfigError("", "parse error at line " + std::to_string(e.line()) + ": " + e.message());
  }
  reject_unknown(root);
  const Reader r(root);
  ScenarioConfig c;
  c.source = source;
  c.sha256 = sha256_hex(text);

  // Read in declaration order so the first missing field is reported.
  const double f0_hz = r.required("oscillator.f0_hz");
  const double quality = r.required("oscillator.quality_factor");
  const double inertia = r.required("oscillator.inertia");
  const double temperature = r.required("oscillator.temperature");
  c.oscillator = mech::OscillatorParams::from_frequency(f0_hz, quality, inertia, temperature);

  c.beam.wavelength = r.number("beam.wavelength", c.beam.wavelength);
  c.beam.waist_radius = r.required("beam.waist_radius");
  c.beam.power = r.required("beam.power");
  c.beam.efficiency = r.number("beam.efficiency", c.beam.efficiency);
  c.beam.gouy_shift = r.number("beam.gouy_shift", c.beam.gouy_shift);
  c.beam.responsivity = r.number("beam.responsivity", c.beam.responsivity);

  const auto lever = r.text("readout.lever", "mirrored");
  if (lever == "mirrored") {
    c.lever = readout::Lever::mirrored;
  } else if (lever == "plain") {
    c.lever = readout::Lever::plain;
  } else {
    throw ConfigError("readout.lever", "expected mirrored or plain, got '" + lever + "'");
  }

  c.extraneous.tilt_psd = r.number("extraneous.tilt_psd", 0.0);
  c.extraneous.displacement_psd = r.number("extraneous.displacement_psd", 0.0);
  c.extraneous.force_psd = r.number("extraneous.force_psd", 0.0);
  c.extraneous.beam_offset = r.number("extraneous.beam_offset", 0.0);
  c.extraneous.suppression = r.number("extraneous.suppression", 0.0);

  auto& fb = c.feedback;
  fb.gamma_fb = r.number("feedback.gamma_fb", 0.0);
  fb.band_low = r.number("feedback.band_low", fb.band_low);
  fb.band_high = r.number("feedback.band_high", fb.band_high);
  fb.extra_delay = r.number("feedback.extra_delay", 0.0);
  fb.loop_torque_noise = r.number("feedback.loop_torque_noise", 0.0);
  const auto model = r.text("feedback.model", "ideal_derivative");
  if (model == "ideal_derivative") {
    fb.model = feedback::LoopModel::ideal_derivative;
  } else if (model == "bandpass_with_delay") {
    fb.model = feedback::LoopModel::bandpass_with_delay;
  } else {
    throw ConfigError("feedback.model",
                      "expected ideal_derivative or bandpass_with_delay, got '" + model + "'");
  }

  c.grid.f_min = r.number("grid.f_min", c.grid.f_min);
  c.grid.f_max = r.number("grid.f_max", c.grid.f_max);
  c.grid.points = r.uint("grid.points", c.grid.points);
  const auto spacing = r.text("grid.spacing", "log");
  if (spacing == "log") {
    c.grid.spacing = Spacing::log;
  } else if (spacing == "linear") {
    c.grid.spacing = Spacing::linear;
  } else {
    throw ConfigError("grid.spacing", "expected log or linear, got '" + spacing + "'");
  }
  c.grid.refine = r.flag("grid.refine", c.grid.refine);

  c.sim.duration = r.number("sim.duration", c.sim.duration);
  c.sim.sample_rate = r.number("sim.sample_rate", c.sim.sample_rate);
  c.sim.seed = r.uint("sim.seed", c.sim.seed);
  c.sim.segment_length = r.uint("sim.segment_length", 0);

  c.ringdown.amplitude = r.number("ringdown.amplitude", c.ringdown.amplitude);
  c.ringdown.duration = r.number("ringdown.duration", c.ringdown.duration);
  c.ringdown.sample_rate = r.number("ringdown.sample_rate", c.ringdown.sample_rate);
  c.ringdown.bandwidth = r.number("ringdown.bandwidth", c.ringdown.bandwidth);
  c.ringdown.noise_rms = r.number("ringdown.noise_rms", c.ringdown.noise_rms);

  c.calibrate.v_acoustic = r.number("calibrate.v_acoustic", c.calibrate.v_acoustic);
  c.calibrate.gain = r.number("calibrate.gain", c.calibrate.gain);
  c.calibrate.rate = r.number("calibrate.rate", c.calibrate.rate);
  c.calibrate.depths = r.list("calibrate.depths", c.calibrate.depths);
  c.calibrate.noise_rms = r.number("calibrate.noise_rms", c.calibrate.noise_rms);
  c.calibrate.duration = r.number("calibrate.duration", c.calibrate.duration);
  c.calibrate.sample_rate = r.number("calibrate.sample_rate", c.calibrate.sample_rate);

  const auto fit_model = r.text("fit.model", "lorentzian");
  if (fit_model == "lorentzian") {
    c.fit.model = FitModel::lorentzian;
  } else if (fit_model == "ringdown") {
    c.fit.model = FitModel::ringdown;
  } else if (fit_model == "occupancy") {
    c.fit.model = FitModel::occupancy;
  } else {
    throw ConfigError("fit.model", "expected lorentzian, ringdown or occupancy, got '" + fit_model + "'");
  }
  const auto input = r.text("fit.input", "");
  if (!input.empty()) {
    c.fit.input = std::filesystem::path(input).is_absolute() || source.empty()
                      ? std::filesystem::path(input)
                      : source.parent_path() / input;
  }
  c.fit.segment_length = r.uint("fit.segment_length", 0);
  c.fit.window_hz = r.number("fit.window_hz", 0.0);
  c.fit.exclusion_hz = r.number("fit.exclusion_hz", -1.0);
  c.fit.averages = r.uint("fit.averages", 0);
  c.fit.rad_per_volt = r.number("fit.rad_per_volt", 1.0);
  c.fit.flag_threshold = r.number("fit.flag_threshold", c.fit.flag_threshold);

  if (r.node("cool.gains")) c.cool.gains = r.list("cool.gains", {});
  c.cool.gain_min = r.number("cool.gain_min", 0.0);
  c.cool.gain_max = r.number("cool.gain_max", 0.0);
  c.cool.gain_points = r.uint("cool.gain_points", 0);
  c.cool.window_points = r.uint("cool.window_points", c.cool.window_points);
  c.cool.half_widths = r.number("cool.half_widths", c.cool.half_widths);

  c.validate();
  return c;
}

void ScenarioConfig::validate() const {
  const auto& o = oscillator;
  require(o.omega0 > 0.0, "oscillator.f0_hz", "must be strictly positive");
  require(o.quality_factor > 0.0, "oscillator.quality_factor", "must be strictly positive");
  require(o.inertia > 0.0, "oscillator.inertia", "must be strictly positive");
  require(o.temperature > 0.0, "oscillator.temperature", "must be strictly positive");
  try {
    beam.validate();
    extraneous.validate();
    feedback.validate(oscillator);
  } catch (const DomainError& e) {
    rethrow_as_config(e);
  }
  require(std::sin(beam.gouy_shift) != 0.0, "beam.gouy_shift", "tilt is unobservable at this Gouy phase");

  require(grid.f_min > 0.0, "grid.f_min", "must be strictly positive");
  require(grid.f_min < grid.f_max, "grid.f_max", "must exceed grid.f_min");
  require(grid.points >= 2, "grid.points", "must be at least 2");

  const double f0 = o.frequency_hz();
  require(sim.duration > 0.0, "sim.duration", "must be strictly positive");
  require(sim.sample_rate >= 10.0 * f0, "sim.sample_rate", "must be at least 10 f0");
  require(sim.duration * sim.sample_rate >= 16.0, "sim.duration", "record too short");
  if (sim.segment_length > 0) {
    require(sim.segment_length >= 4 &&
                static_cast<double>(sim.segment_length) <= sim.duration * sim.sample_rate,
            "sim.segment_length", "must lie between 4 and the record length");
  }

  require(ringdown.amplitude > 0.0, "ringdown.amplitude", "must be strictly positive");
  require(ringdown.duration > 0.0, "ringdown.duration", "must be strictly positive");
  require(ringdown.sample_rate > 2.0 * f0, "ringdown.sample_rate", "must exceed 2 f0");
  require(ringdown.bandwidth > 0.0 && ringdown.bandwidth < f0, "ringdown.bandwidth",
          "must lie in (0, f0)");
  require(ringdown.noise_rms >= 0.0, "ringdown.noise_rms", "must be non-negative");

  require(calibrate.v_acoustic > 0.0, "calibrate.v_acoustic", "must be strictly positive");
  require(calibrate.gain > 0.0, "calibrate.gain", "must be strictly positive");
  require(calibrate.rate > 0.0 && calibrate.rate < calibrate.sample_rate / 2.0, "calibrate.rate",
          "must lie in (0, sample_rate/2)");
  require(!calibrate.depths.empty(), "calibrate.depths", "list is empty");
  for (double d : calibrate.depths) require(d > 0.0, "calibrate.depths", "entries must be positive");
  require(calibrate.noise_rms >= 0.0, "calibrate.noise_rms", "must be non-negative");
  require(calibrate.duration * calibrate.sample_rate >= 16.0, "calibrate.duration", "record too short");

  require(fit.window_hz >= 0.0, "fit.window_hz", "must be non-negative");
  require(fit.rad_per_volt > 0.0, "fit.rad_per_volt", "must be strictly positive");
  require(fit.flag_threshold > 0.0, "fit.flag_threshold", "must be strictly positive");

  for (double g : cool.gains) require(g >= 0.0, "cool.gains", "entries must be non-negative");
  if (cool.gain_points > 0) {
    require(cool.gain_min > 0.0, "cool.gain_min", "must be strictly positive for a log sweep");
    require(cool.gain_max > cool.gain_min, "cool.gain_max", "must exceed cool.gain_min");
  }
  require(cool.window_points >= 16, "cool.window_points", "must be at least 16");
  require(cool.half_widths > 0.0, "cool.half_widths", "must be strictly positive");
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io::IoError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.extension() == ".json", path);
}

std::vector<double> make_grid(const GridConfig& grid, const mech::OscillatorParams& osc) {
  auto base = grid.spacing == Spacing::log ? logspace(grid.f_min, grid.f_max, grid.points)
                                           : linspace(grid.f_min, grid.f_max, grid.points);
  if (!grid.refine) return base;
  const double f0 = osc.frequency_hz();
  const double half = 100.0 * osc.gamma0() / constants::two_pi;
  const double lo = std::max(grid.f_min, f0 - half);
  const double hi = std::min(grid.f_max, f0 + half);
  if (!(lo < hi)) return base;
  return merge_grids(base, linspace(lo, hi, grid.points));
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace torquill::app
