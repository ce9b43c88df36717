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

#include "commands.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <variant>

#include "torquill/estimate.hpp"
#include "torquill/io.hpp"
#include "torquill/sim.hpp"

namespace torquill::app {

namespace fs = std::filesystem;
using nlohmann::json;
using constants::two_pi;

namespace {

json meta(const ScenarioConfig& cfg, const char* command, std::optional<std::uint64_t> seed) {
  json j;
  j["command"] = command;
  j["toolkit_version"] = TORQUILL_VERSION;
  j["config_sha256"] = cfg.sha256;
  j["config_path"] = cfg.source.string();
  j["seed"] = seed ? json(*seed) : json(nullptr);
  return j;
}

void write_json(const fs::path& path, const json& j) {
  io::write_text_atomic(path, j.dump(2) + "\n");
}

struct Column {
  std::string header;
  std::vector<double> values;
};

void write_table(const fs::path& path, const std::vector<Column>& cols,
                 const std::vector<std::string>& labels = {}, const std::string& label_header = {}) {
  std::string out;
  if (!labels.empty()) out += label_header + ",";
  for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c].header;
  out += "\n";
  const std::size_t rows = cols.empty() ? 0 : cols.front().values.size();
  for (std::size_t r = 0; r < rows; ++r) {
    if (!labels.empty()) out += labels[r] + ",";
    for (std::size_t c = 0; c < cols.size(); ++c) {
      out += (c ? "," : "") + io::format_double(cols[c].values[r]);
    }
    out += "\n";
  }
  io::write_text_atomic(path, out);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io::IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::uint64_t seed_of(const ScenarioConfig& cfg, const CommandOptions& opt) {
  return opt.seed.value_or(cfg.sim.seed);
}

Spectrum window_about(const Spectrum& s, double center, double half) {
  if (!(half > 0.0)) return s;
  Spectrum out{{}, {}, s.unit, s.averages};
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::abs(s.freq_hz[i] - center) <= half) {
      out.freq_hz.push_back(s.freq_hz[i]);
      out.value.push_back(s.value[i]);
    }
  }
  if (out.size() < 8) throw DomainError("fit window holds fewer than 8 spectral bins");
  return out;
}

std::variant<sim::TimeSeries, Spectrum> load_input(const fs::path& path) {
  if (path.empty()) throw io::IoError("no input file given (fit.input or --input)");
  if (!fs::exists(path)) throw io::IoError("input file not found: " + path.string());
  if (path.extension() == ".csv") {
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    if (header.rfind("freq", 0) == 0) return io::read_spectrum_csv(path);
    return io::read_timeseries_csv(path);
  }
  return io::read_timeseries(path);
}

}  // namespace

void cmd_budget(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log) {
  ensure_dir(opt.out_dir);
  const auto grid = make_grid(cfg.grid, cfg.oscillator);
  const auto& osc = cfg.oscillator;
  const double f0 = osc.frequency_hz();
  std::vector<double> powers = opt.power_sweep.value_or(std::vector<double>{cfg.beam.power});
  for (double p : powers) {
    if (!(p > 0.0)) throw ConfigError("--power-sweep", "powers must be positive");
  }
  json report = meta(cfg, "budget", std::nullopt);
  report["budgets"] = json::array();
  for (std::size_t i = 0; i < powers.size(); ++i) {
    auto beam = cfg.beam;
    beam.power = powers[i];
    const auto nb = readout::observed_angle_psd(osc, beam, cfg.extraneous, cfg.lever, grid);
    const std::string name = powers.size() == 1 ? "budget.csv" : "budget_" + std::to_string(i) + ".csv";
    write_table(opt.out_dir / name,
                {{"freq_hz (Hz)", nb.freq_hz},
                 {"intrinsic (rad^2/Hz)", nb.intrinsic},
                 {"back_action (rad^2/Hz)", nb.back_action},
                 {"imprecision_quantum (rad^2/Hz)", nb.imprecision_quantum},
                 {"imprecision_tilt (rad^2/Hz)", nb.imprecision_tilt},
                 {"imprecision_displacement (rad^2/Hz)", nb.imprecision_displacement},
                 {"total (rad^2/Hz)", nb.total}});
    const double s_imp = readout::imprecision_terms(beam, cfg.extraneous, cfg.lever, f0).total();
    const double s_ba = readout::backaction_torque_at(beam, cfg.extraneous, f0);
    json b;
    b["power_w"] = beam.power;
    b["csv"] = name;
    b["s_imp"] = s_imp;
    b["n_imp"] = readout::imprecision_occupancy(s_imp, osc);
    b["db_below_zp"] = readout::db_below_zero_point(s_imp, osc);
    b["s_backaction_torque"] = s_ba;
    b["n_ba"] = readout::backaction_occupancy(s_ba, osc);
    report["budgets"].push_back(b);
    log << "budget: P = " << beam.power << " W, S_imp = " << s_imp << " rad^2/Hz, "
        << b["db_below_zp"].get<double>() << " dB below zero-point peak\n";
  }
  report["n_th"] = mech::thermal_occupancy(osc.temperature, f0);
  report["theta_zp"] = osc.theta_zp();
  report["zero_point_peak"] = mech::zero_point_peak(osc);
  report["gamma0"] = osc.gamma0();
  report["grid_points"] = grid.size();
  // Single-budget convenience fields.
  for (const char* key : {"s_imp", "n_imp", "db_below_zp", "n_ba"}) {
    report[key] = report["budgets"][0][key];
  }
  write_json(opt.out_dir / "budget.json", report);
}

void cmd_cool(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log) {
  ensure_dir(opt.out_dir);
  const auto& osc = cfg.oscillator;
  const auto op = feedback::operating_point(osc, cfg.beam, cfg.extraneous, cfg.lever);
  const auto best = feedback::closed_form_optimum(op);
  std::vector<double> gains;
  if (opt.gains) {
    gains = *opt.gains;
  } else if (!cfg.cool.gains.empty()) {
    gains = cfg.cool.gains;
  } else if (cfg.cool.gain_points > 0) {
    gains = logspace(cfg.cool.gain_min, cfg.cool.gain_max, cfg.cool.gain_points);
  } else {
    const double g_opt = best.gamma_eff - op.gamma0;
    gains = logspace(std::max(g_opt / 100.0, op.gamma0), g_opt * 100.0, 61);
  }
  for (double g : gains) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("--gains", "gains must be non-negative");
  }
  feedback::SweepOptions so;
  so.window_points = cfg.cool.window_points;
  so.half_widths = cfg.cool.half_widths;
  so.base = cfg.feedback;
  auto points = feedback::gain_sweep(osc, cfg.beam, cfg.extraneous, cfg.lever, gains, so);
  const double g_opt = std::max(0.0, best.gamma_eff - op.gamma0);
  const auto opt_row =
      feedback::gain_sweep(osc, cfg.beam, cfg.extraneous, cfg.lever, std::vector<double>{g_opt}, so);

  std::vector<std::string> labels(points.size(), "sweep");
  labels.push_back("optimum");
  points.push_back(opt_row.front());
  auto col = [&](auto field) {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(field(p));
    return v;
  };
  write_table(opt.out_dir / "cool.csv",
              {{"gamma_fb (rad/s)", col([](auto& p) { return p.gamma_fb; })},
               {"gamma_eff (rad/s)", col([](auto& p) { return p.gamma_eff; })},
               {"n_eff (1)", col([](auto& p) { return p.n_eff; })},
               {"n_eff_closed_form (1)", col([](auto& p) { return p.n_eff_closed_form; })},
               {"n_th_term (1)", col([](auto& p) { return p.n_thermal_term; })},
               {"n_imp_term (1)", col([](auto& p) { return p.n_imprecision_term; })},
               {"n_ba_term (1)", col([](auto& p) { return p.n_backaction_term; })},
               {"tail_dominated (1)", col([](auto& p) { return p.tail_dominated ? 1.0 : 0.0; })}},
              labels, "row");
  const auto min_it = std::min_element(points.begin(), points.end() - 1,
                                       [](auto& a, auto& b) { return a.n_eff < b.n_eff; });
  json report = meta(cfg, "cool", std::nullopt);
  report["n_th"] = op.n_th;
  report["n_ba"] = op.n_ba;
  report["n_imp"] = op.n_imp;
  report["gamma0"] = op.gamma0;
  report["sweep_minimum"] = {{"gamma_fb", min_it->gamma_fb},
                             {"gamma_eff", min_it->gamma_eff},
                             {"n_eff", min_it->n_eff}};
  report["optimum"] = {{"gamma_eff", best.gamma_eff},
                       {"n_eff_closed_form", best.n_eff},
                       {"n_eff_integrated", opt_row.front().n_eff}};
  report["quantum_limited_bound"] = 2.0 * std::sqrt(op.n_th * op.n_imp);
  report["rows"] = points.size();
  write_json(opt.out_dir / "cool.json", report);
  log << "cool: " << gains.size() << " gains, minimum n_eff = " << min_it->n_eff
      << ", closed-form optimum " << best.n_eff << "\n";
}

void cmd_simulate(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log) {
  ensure_dir(opt.out_dir);
  const auto seed = seed_of(cfg, opt);
  const auto& osc = cfg.oscillator;
  const auto rec = sim::simulate_closed_loop(osc, cfg.beam, cfg.extraneous, cfg.lever,
                                             cfg.feedback, cfg.sim.duration, cfg.sim.sample_rate,
                                             seed);
  io::write_timeseries_binary(rec.theta_phys, opt.out_dir / "theta_phys.bin");
  io::write_timeseries_binary(rec.theta_obs, opt.out_dir / "theta_obs.bin");
  io::write_timeseries_binary(rec.torque_fb, opt.out_dir / "torque_fb.bin");

  estimate::WelchOptions wo;
  wo.segment_length = cfg.sim.segment_length ? cfg.sim.segment_length : rec.theta_phys.size() / 8;
  wo.overlap = 0.0;
  const auto psd_phys = estimate::welch_psd(rec.theta_phys, wo);
  const auto psd_obs = estimate::welch_psd(rec.theta_obs, wo);
  io::write_spectrum_csv(psd_phys, opt.out_dir / "psd_phys.csv");
  io::write_spectrum_csv(psd_obs, opt.out_dir / "psd_obs.csv");

  const auto op = feedback::operating_point(osc, cfg.beam, cfg.extraneous, cfg.lever);
  const double geff = feedback::effective_damping(osc, cfg.feedback);
  double var = 0.0;
  for (double v : rec.theta_phys.samples) var += v * v;
  var /= static_cast<double>(rec.theta_phys.size());
  const double zp2 = osc.theta_zp() * osc.theta_zp();

  json report = meta(cfg, "simulate", seed);
  report["generator"] = rec.theta_phys.generator;
  report["samples"] = rec.theta_phys.size();
  report["sample_rate"] = rec.theta_phys.sample_rate;
  report["gamma_eff"] = geff;
  report["n_eff_closed_form"] =
      feedback::occupancy_closed_form(op.n_th, op.n_ba, op.n_imp, op.gamma0, geff);
  report["n_eff_variance"] = var / (2.0 * zp2) - 0.5;
  try {
    const auto ro = estimate::resonant_occupancy(psd_phys, osc, geff, 2.0);
    report["n_eff_resonant_fit"] = {{"n_eff", ro.n_eff},
                                    {"sigma", ro.sigma_n_eff},
                                    {"gamma_eff", ro.gamma_eff},
                                    {"reduced_chi2", ro.reduced_chi2}};
  } catch (const std::exception& e) {
    report["n_eff_resonant_fit"] = {{"error", e.what()}};
  }
  report["welch_segment_length"] = wo.segment_length;
  write_json(opt.out_dir / "simulate.json", report);
  log << "simulate: " << rec.theta_phys.size() << " samples, n_eff(variance) = "
      << report["n_eff_variance"].get<double>() << ", closed form "
      << report["n_eff_closed_form"].get<double>() << "\n";
}

void cmd_ringdown(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log) {
  ensure_dir(opt.out_dir);
  const auto seed = seed_of(cfg, opt);
  const auto& rc = cfg.ringdown;
  const auto& osc = cfg.oscillator;
  auto record = sim::simulate_ringdown(osc, rc.amplitude, rc.duration, rc.sample_rate);
  if (rc.noise_rms > 0.0) record = sim::add_white_noise(record, rc.noise_rms, seed);
  const auto env = sim::lock_in_demodulate(record, osc.frequency_hz(), rc.bandwidth);
  estimate::RingdownOptions ro;
  ro.omega0 = osc.omega0;
  ro.settle_time = sim::lock_in_settling_time(rc.bandwidth);
  const auto fit = estimate::fit_ringdown(env, ro);
  io::write_timeseries_binary(record, opt.out_dir / "ringdown_record.bin");
  io::write_timeseries_binary(env, opt.out_dir / "envelope.bin");
  json report = meta(cfg, "ringdown", seed);
  report["fit"] = json::parse(estimate::to_json(estimate::report(fit)));
  report["q_configured"] = osc.quality_factor;
  report["q_fitted"] = fit.q;
  report["energy_decay_time_s"] = 1.0 / fit.gamma0;
  write_json(opt.out_dir / "ringdown.json", report);
  log << "ringdown: Q = " << fit.q << " (configured " << osc.quality_factor << ")\n";
}

void cmd_calibrate(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log) {
  ensure_dir(opt.out_dir);
  const auto seed = seed_of(cfg, opt);
  const auto& cc = cfg.calibrate;
  std::vector<estimate::AodPoint> points;
  std::vector<double> depth, tilt, volts, alpha;
  for (std::size_t i = 0; i < cc.depths.size(); ++i) {
    sim::AodTone tone{cc.v_acoustic, cc.depths[i], cc.rate, cc.gain};
    const auto ts = sim::aod_tone(cfg.beam, tone, cc.duration, cc.sample_rate, cc.noise_rms, seed + i);
    const double v = estimate::tone_amplitude(ts, cc.rate);
    points.push_back({cc.depths[i], v});
    depth.push_back(cc.depths[i]);
    tilt.push_back(sim::aod_tilt_amplitude(cfg.beam.wavelength, cc.v_acoustic, cc.depths[i]));
    volts.push_back(v);
    alpha.push_back(
        estimate::aod_calibration(v, cfg.beam.wavelength, cc.v_acoustic, cc.depths[i]).rad_per_volt);
  }
  write_table(opt.out_dir / "calibrate.csv", {{"depth_hz (Hz)", depth},
                                              {"tilt (rad)", tilt},
                                              {"volt_amplitude (V)", volts},
                                              {"alpha (rad/V)", alpha}});
  json report = meta(cfg, "calibrate", seed);
  report["single_point"] = {{"depth_hz", depth.back()},
                            {"tilt_rad", tilt.back()},
                            {"rad_per_volt", alpha.back()}};
  if (points.size() >= 3) {
    const auto fit = estimate::aod_calibration_fit(points, cfg.beam.wavelength, cc.v_acoustic);
    report["linear_fit"] = {{"rad_per_volt", fit.factor.rad_per_volt},
                            {"relative_error", fit.factor.relative_error},
                            {"slope_v_per_hz", fit.slope},
                            {"intercept_v", fit.intercept},
                            {"r_squared", fit.r_squared}};
    log << "calibrate: alpha = " << fit.factor.rad_per_volt << " rad/V, R^2 = " << fit.r_squared << "\n";
  } else {
    log << "calibrate: alpha = " << alpha.back() << " rad/V\n";
  }
  write_json(opt.out_dir / "calibrate.json", report);
}

void cmd_fit(const ScenarioConfig& cfg, const CommandOptions& opt, std::ostream& log) {
  ensure_dir(opt.out_dir);
  const auto& fc = cfg.fit;
  const auto& osc = cfg.oscillator;
  const auto input = load_input(opt.input.value_or(fc.input));
  // The seed of a fit is the one recorded with its input data, when known.
  std::optional<std::uint64_t> seed = opt.seed;
  if (const auto* ts = std::get_if<sim::TimeSeries>(&input); ts && !seed && !ts->generator.empty() && ts->generator != "csv") {
    seed = ts->seed;
  }
  json report = meta(cfg, "fit", seed);

  if (fc.model == FitModel::ringdown) {
    const auto* ts = std::get_if<sim::TimeSeries>(&input);
    if (!ts) throw DomainError("ringdown fit needs a time series input");
    const auto env = sim::lock_in_demodulate(*ts, osc.frequency_hz(), cfg.ringdown.bandwidth);
    estimate::RingdownOptions ro;
    ro.omega0 = osc.omega0;
    ro.settle_time = sim::lock_in_settling_time(cfg.ringdown.bandwidth);
    const auto fit = estimate::fit_ringdown(env, ro);
    report["fit"] = json::parse(estimate::to_json(estimate::report(fit)));
    report["flagged"] = false;
    write_json(opt.out_dir / "fit.json", report);
    log << "fit: ringdown Q = " << fit.q << "\n";
    return;
  }

  Spectrum spec;
  if (const auto* ts = std::get_if<sim::TimeSeries>(&input)) {
    estimate::WelchOptions wo;
    wo.segment_length = fc.segment_length ? fc.segment_length : ts->size() / 100;
    wo.overlap = 0.0;
    spec = estimate::welch_psd(*ts, wo);
  } else {
    spec = std::get<Spectrum>(input);
    spec.averages = fc.averages;
  }
  spec = window_about(spec, osc.frequency_hz(), fc.window_hz);

  if (fc.model == FitModel::lorentzian) {
    const auto fit = estimate::fit_lorentzian(spec, osc.quality_factor, osc.frequency_hz(),
                                              fc.exclusion_hz);
    report["fit"] = json::parse(estimate::to_json(estimate::report(fit)));
    if (spec.unit == Unit::rad2_per_hz) {
      report["mode_temperature_k"] = estimate::mode_temperature(fit, osc.inertia);
      report["inferred_inertia"] =
          estimate::infer_inertia(fit, osc.temperature, two_pi * fit.center, fit.q_used);
    } else if (spec.unit == Unit::v2_per_hz) {
      const auto cal = estimate::thermal_reference_calibration(spec, osc, fc.exclusion_hz);
      report["calibration"] = {{"rad_per_volt", cal.rad_per_volt},
                               {"relative_error", cal.relative_error},
                               {"method", std::string(estimate::to_string(cal.method))}};
    }
    const double dof = static_cast<double>(fit.points_used) - 3.0;
    const double chi2 = dof > 0 ? fit.residual_norm * fit.residual_norm / dof : 0.0;
    report["reduced_chi2"] = chi2;
    report["flagged"] = spec.averages > 0 && chi2 > fc.flag_threshold;
    log << "fit: lorentzian peak " << fit.peak << ", floor " << fit.floor << "\n";
  } else {
    const estimate::CalibrationFactor cal{fc.rad_per_volt, 0.0, estimate::CalibrationMethod::aod};
    const auto fit = estimate::occupancy_from_data(spec, cal, osc, cfg.feedback, cfg.beam,
                                                   fc.flag_threshold);
    report["fit"] = json::parse(estimate::to_json(estimate::report(fit)));
    report["flagged"] = fit.flagged;
    log << "fit: n_eff = " << fit.n_eff << " +- " << fit.sigma_n_eff
        << (fit.flagged ? " (flagged)" : "") << "\n";
  }
  write_json(opt.out_dir / "fit.json", report);
}

bool apply_thread_limit(const char* env_value, std::string& error) {
  if (env_value == nullptr || *env_value == '\0') return true;
  char* end = nullptr;
  const long n = std::strtol(env_value, &end, 10);
  if (*end != '\0' || n < 1) {
    error = std::string("TORQUILL_THREADS must be a positive integer, got '") + env_value + "'";
    return false;
  }
  omp_set_num_threads(static_cast<int>(std::min<long>(n, omp_get_num_procs() * 4L)));
  return true;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"torquill: torsional oscillator readout and feedback-cooling toolkit"};
  app.set_version_flag("--version", std::string(TORQUILL_VERSION));
  app.require_subcommand(1, 1);
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::string gains_text, power_text, input_path;

  struct Sub {
    const char* name;
    const char* help;
    void (*run)(const ScenarioConfig&, const CommandOptions&, std::ostream&);
  };
  const Sub subs[] = {
      {"budget", "noise budget on the configured grid", cmd_budget},
      {"cool", "feedback-cooling gain sweep", cmd_cool},
      {"simulate", "closed-loop time-domain simulation", cmd_simulate},
      {"ringdown", "simulated ringdown and Q fit", cmd_ringdown},
      {"calibrate", "AOD angle calibration", cmd_calibrate},
      {"fit", "fit a recorded spectrum or time series", cmd_fit},
  };
  std::vector<CLI::App*> handles;
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    sc->add_option("--config", config_path, "scenario file (.ini or .json)")->required();
    sc->add_option("--out", out_dir, "output directory");
    sc->add_option("--seed", seed, "RNG seed, overrides sim.seed");
    if (std::string(s.name) == "cool") sc->add_option("--gains", gains_text, "comma-separated gamma_fb values (rad/s)");
    if (std::string(s.name) == "budget") sc->add_option("--power-sweep", power_text, "comma-separated probe powers (W)");
    if (std::string(s.name) == "fit") sc->add_option("--input", input_path, "data file, overrides fit.input");
    handles.push_back(sc);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    std::string thread_error;
    if (!apply_thread_limit(std::getenv("TORQUILL_THREADS"), thread_error)) {
      throw ConfigError("TORQUILL_THREADS", thread_error);
    }
    const auto cfg = load_config(config_path);
    CommandOptions opt;
    opt.out_dir = out_dir;
    opt.seed = seed;
    if (!gains_text.empty()) opt.gains = parse_list(gains_text, "--gains");
    if (!power_text.empty()) opt.power_sweep = parse_list(power_text, "--power-sweep");
    if (!input_path.empty()) opt.input = fs::path(input_path);
    for (std::size_t i = 0; i < handles.size(); ++i) {
      if (handles[i]->parsed()) subs[i].run(cfg, opt, out);
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const io::IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FitError& e) {
    err << "fit error: " << e.what();
    if (!e.diagnostics().empty()) err << " [" << e.diagnostics() << "]";
    err << "\n";
    return kExitNumerical;
  } catch (const DomainError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace torquill::app
