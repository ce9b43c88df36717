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

#include "torquill/estimate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "fft.hpp"
#include "lm.hpp"

namespace torquill::estimate {

using constants::k_boltzmann;
using constants::pi;
using constants::two_pi;
using cplx = std::complex<double>;

namespace {

// Raw segment spectra of one or two records. Every segment keeps its own
// buffer so the reduction order never depends on the thread schedule.
struct SegmentPlan {
  std::size_t length = 0;
  std::size_t step = 0;
  std::size_t count = 0;
  std::vector<double> window;
  double window_power = 0.0;  // sum of w^2
  double sample_rate = 0.0;
  std::size_t bins() const { return length / 2 + 1; }
};

SegmentPlan plan_segments(const sim::TimeSeries& ts, const WelchOptions& o) {
  ts.validate();
  if (o.segment_length < 4) throw DomainError("segment_length must be at least 4");
  if (o.segment_length > ts.size()) {
    throw DomainError("record shorter than one Welch segment");
  }
  if (!(o.overlap >= 0.0 && o.overlap <= 0.9)) {
    throw DomainError("overlap fraction must lie in [0, 0.9]");
  }
  SegmentPlan p;
  p.length = o.segment_length;
  p.step = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(p.length) * (1.0 - o.overlap))));
  p.count = (ts.size() - p.length) / p.step + 1;
  p.sample_rate = ts.sample_rate;
  p.window.resize(p.length);
  for (std::size_t n = 0; n < p.length; ++n) {
    p.window[n] = 0.5 - 0.5 * std::cos(two_pi * static_cast<double>(n) / static_cast<double>(p.length));
    p.window_power += p.window[n] * p.window[n];
  }
  return p;
}

// Windowed, mean-removed FFT of segment `s`.
void segment_fft(const SegmentPlan& p, const sim::TimeSeries& ts, std::size_t s,
                 detail::RealFft& fft, std::vector<double>& buf, std::vector<cplx>& out) {
  const double* x = ts.samples.data() + s * p.step;
  const double mean = std::accumulate(x, x + p.length, 0.0) / static_cast<double>(p.length);
  for (std::size_t n = 0; n < p.length; ++n) buf[n] = (x[n] - mean) * p.window[n];
  fft.forward(buf, out);
}

// One-sided density scale for bin k (DC excluded, Nyquist not doubled).
double bin_scale(const SegmentPlan& p, std::size_t k) {
  const bool nyquist = (p.length % 2 == 0) && k == p.length / 2;
  return (nyquist ? 1.0 : 2.0) / (p.sample_rate * p.window_power);
}

std::vector<double> frequencies(const SegmentPlan& p) {
  std::vector<double> f(p.bins() - 1);
  const double df = p.sample_rate / static_cast<double>(p.length);
  for (std::size_t k = 1; k < p.bins(); ++k) f[k - 1] = df * static_cast<double>(k);
  return f;
}

// Sum over segments of |X_k|^2 scale_k, bins 1..N/2.
std::vector<double> periodogram_sum(const SegmentPlan& p, const sim::TimeSeries& ts, Exec exec) {
  const std::size_t nb = p.bins() - 1;
  std::vector<std::vector<double>> per(p.count, std::vector<double>(nb));
  const auto count = static_cast<std::ptrdiff_t>(p.count);
#pragma omp parallel if (exec == Exec::parallel)
  {
    detail::RealFft fft(p.length);
    std::vector<double> buf(p.length);
    std::vector<cplx> spec(p.bins());
#pragma omp for schedule(static)
    for (std::ptrdiff_t s = 0; s < count; ++s) {
      segment_fft(p, ts, static_cast<std::size_t>(s), fft, buf, spec);
      auto& row = per[static_cast<std::size_t>(s)];
      for (std::size_t k = 1; k < p.bins(); ++k) row[k - 1] = std::norm(spec[k]) * bin_scale(p, k);
    }
  }
  std::vector<double> sum(nb, 0.0);
  for (const auto& row : per) {
    for (std::size_t k = 0; k < nb; ++k) sum[k] += row[k];
  }
  return sum;
}

Unit spectrum_unit(Unit signal) {
  try {
    return psd_unit(signal);
  } catch (const DomainError&) {
    return Unit::dimensionless;
  }
}

double digamma_integer(std::size_t n) {
  double s = -0.57721566490153286061;
  for (std::size_t k = 1; k < n; ++k) s += 1.0 / static_cast<double>(k);
  return s;
}

// Mean offset and weight of a log-periodogram averaged over n segments.
struct LogStats {
  double bias = 0.0;
  double weight = 1.0;
};

LogStats log_stats(std::size_t averages) {
  if (averages == 0) return {};
  const double n = static_cast<double>(averages);
  return {digamma_integer(averages) - std::log(n), std::sqrt(n)};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

double mean_spacing(const Spectrum& s) {
  if (s.size() < 2) throw DomainError("spectrum needs at least two points");
  return (s.freq_hz.back() - s.freq_hz.front()) / static_cast<double>(s.size() - 1);
}

std::string describe(const detail::LmResult& r) {
  std::ostringstream os;
  os << "iterations=" << r.iterations << " cost=" << r.cost << " params=[";
  for (Eigen::Index i = 0; i < r.params.size(); ++i) os << (i ? "," : "") << r.params[i];
  os << "] " << r.message;
  return os.str();
}

}  // namespace

Spectrum welch_psd(const sim::TimeSeries& ts, const WelchOptions& options, Exec exec) {
  const auto p = plan_segments(ts, options);
  auto sum = periodogram_sum(p, ts, exec);
  for (auto& v : sum) v /= static_cast<double>(p.count);
  return {frequencies(p), std::move(sum), spectrum_unit(ts.unit), p.count};
}

Spectrum welch_psd(std::span<const sim::TimeSeries> records, const WelchOptions& options,
                   Exec exec) {
  if (records.empty()) throw DomainError("no records to average");
  const auto p = plan_segments(records.front(), options);
  std::vector<double> total(p.bins() - 1, 0.0);
  for (const auto& r : records) {
    if (r.sample_rate != p.sample_rate || r.size() != records.front().size()) {
      throw DomainError("records must share sample rate and length");
    }
    r.validate();
    const auto sum = periodogram_sum(p, r, exec);
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += sum[k];
  }
  const std::size_t n = p.count * records.size();
  for (auto& v : total) v /= static_cast<double>(n);
  return {frequencies(p), std::move(total), spectrum_unit(records.front().unit), n};
}

CrossSpectrum cross_spectrum(const sim::TimeSeries& a, const sim::TimeSeries& b,
                             const WelchOptions& options, Exec exec) {
  if (a.sample_rate != b.sample_rate || a.size() != b.size()) {
    throw DomainError("cross spectrum needs equal sample rates and lengths");
  }
  b.validate();
  const auto p = plan_segments(a, options);
  const std::size_t nb = p.bins() - 1;
  struct Row {
    std::vector<cplx> ab;
    std::vector<double> aa, bb;
  };
  std::vector<Row> rows(p.count, Row{std::vector<cplx>(nb), std::vector<double>(nb),
                                     std::vector<double>(nb)});
  const auto count = static_cast<std::ptrdiff_t>(p.count);
#pragma omp parallel if (exec == Exec::parallel)
  {
    detail::RealFft fft(p.length);
    std::vector<double> buf(p.length);
    std::vector<cplx> xa(p.bins()), xb(p.bins());
#pragma omp for schedule(static)
    for (std::ptrdiff_t s = 0; s < count; ++s) {
      segment_fft(p, a, static_cast<std::size_t>(s), fft, buf, xa);
      segment_fft(p, b, static_cast<std::size_t>(s), fft, buf, xb);
      auto& row = rows[static_cast<std::size_t>(s)];
      for (std::size_t k = 1; k < p.bins(); ++k) {
        const double sc = bin_scale(p, k);
        row.ab[k - 1] = std::conj(xa[k]) * xb[k] * sc;
        row.aa[k - 1] = std::norm(xa[k]) * sc;
        row.bb[k - 1] = std::norm(xb[k]) * sc;
      }
    }
  }
  CrossSpectrum out{frequencies(p), std::vector<cplx>(nb, 0.0), std::vector<double>(nb, 0.0),
                    std::vector<double>(nb, 0.0), p.count};
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < nb; ++k) {
      out.s_ab[k] += row.ab[k];
      out.s_aa[k] += row.aa[k];
      out.s_bb[k] += row.bb[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(p.count);
  for (std::size_t k = 0; k < nb; ++k) {
    out.s_ab[k] *= inv;
    out.s_aa[k] *= inv;
    out.s_bb[k] *= inv;
  }
  return out;
}

Spectrum coherence(const sim::TimeSeries& a, const sim::TimeSeries& b,
                   const WelchOptions& options, Exec exec) {
  const auto cs = cross_spectrum(a, b, options, exec);
  if (cs.averages < 2) {
    throw DomainError("coherence from a single segment is identically one");
  }
  Spectrum out{cs.freq_hz, std::vector<double>(cs.freq_hz.size(), 0.0), Unit::dimensionless,
               cs.averages};
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double den = cs.s_aa[k] * cs.s_bb[k];
    out.value[k] = den > 0.0 ? std::clamp(std::norm(cs.s_ab[k]) / den, 0.0, 1.0) : 0.0;
  }
  return out;
}

double tone_amplitude(const sim::TimeSeries& ts, double freq_hz) {
  ts.validate();
  if (!(freq_hz > 0.0) || freq_hz >= ts.sample_rate / 2.0) {
    throw DomainError("tone frequency must lie in (0, Nyquist)");
  }
  if (ts.size() < 4) throw DomainError("record too short for a tone fit");
  Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
  Eigen::Vector3d atb = Eigen::Vector3d::Zero();
  const double w = two_pi * freq_hz;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double ph = w * ts.time(i);
    const Eigen::Vector3d row(std::cos(ph), std::sin(ph), 1.0);
    ata += row * row.transpose();
    atb += row * ts.samples[i];
  }
  const Eigen::Vector3d c = ata.ldlt().solve(atb);
  return std::hypot(c[0], c[1]);
}

std::string_view to_string(CalibrationMethod m) {
  return m == CalibrationMethod::aod ? "aod" : "thermal_reference";
}

void CalibrationFactor::validate() const {
  if (!(rad_per_volt > 0.0) || !std::isfinite(rad_per_volt)) {
    throw DomainError("calibration factor must be positive");
  }
  if (!(relative_error >= 0.0)) throw DomainError("calibration error must be non-negative");
}

Spectrum CalibrationFactor::to_angle(const Spectrum& volt_psd) const {
  validate();
  if (volt_psd.unit != Unit::v2_per_hz) throw DomainError("expected a V^2/Hz spectrum");
  Spectrum out = volt_psd;
  const double a2 = rad_per_volt * rad_per_volt;
  for (auto& v : out.value) v *= a2;
  out.unit = Unit::rad2_per_hz;
  return out;
}

Spectrum CalibrationFactor::to_volt(const Spectrum& angle_psd) const {
  validate();
  if (angle_psd.unit != Unit::rad2_per_hz) throw DomainError("expected a rad^2/Hz spectrum");
  Spectrum out = angle_psd;
  const double a2 = rad_per_volt * rad_per_volt;
  for (auto& v : out.value) v /= a2;
  out.unit = Unit::v2_per_hz;
  return out;
}

CalibrationFactor aod_calibration(double volt_amplitude, double wavelength, double v_acoustic,
                                  double f_depth) {
  if (!(volt_amplitude > 0.0)) throw DomainError("AOD volt amplitude must be positive");
  if (!(f_depth > 0.0)) throw DomainError("AOD modulation depth must be positive");
  const double tilt = sim::aod_tilt_amplitude(wavelength, v_acoustic, f_depth);
  return {tilt / (2.0 * volt_amplitude), 0.0, CalibrationMethod::aod};
}

AodLinearFit aod_calibration_fit(std::span<const AodPoint> points, double wavelength,
                                 double v_acoustic) {
  if (points.size() < 3) throw DomainError("linear AOD calibration needs at least three points");
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.f_depth;
    my += p.volt_amplitude;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : points) {
    sxx += (p.f_depth - mx) * (p.f_depth - mx);
    sxy += (p.f_depth - mx) * (p.volt_amplitude - my);
    syy += (p.volt_amplitude - my) * (p.volt_amplitude - my);
  }
  if (!(sxx > 0.0)) throw DomainError("AOD depths must not all be equal");
  AodLinearFit fit;
  fit.slope = sxy / sxx;
  if (!(fit.slope > 0.0)) throw FitError("AOD response does not increase with depth");
  fit.intercept = my - fit.slope * mx;
  const double ss_res = std::max(0.0, syy - fit.slope * sxy);
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  const double se = std::sqrt(ss_res / (n - 2.0) / sxx);
  const double tilt_per_hz = sim::aod_tilt_amplitude(wavelength, v_acoustic, 1.0);
  fit.factor = {tilt_per_hz / (2.0 * fit.slope), se / fit.slope, CalibrationMethod::aod};
  return fit;
}

LorentzianFit fit_lorentzian(const Spectrum& spec, double q, double center_guess,
                             double exclusion_halfwidth) {
  spec.validate();
  if (!(q > 0.0)) throw DomainError("quality factor must be positive");
  for (double v : spec.value) {
    if (!(v > 0.0)) throw DomainError("Lorentzian fit needs a strictly positive spectrum");
  }
  const double lo = spec.freq_hz.front();
  const double hi = spec.freq_hz.back();
  double f0 = center_guess;
  if (!(f0 > 0.0)) {
    const auto it = std::max_element(spec.value.begin(), spec.value.end());
    f0 = spec.freq_hz[static_cast<std::size_t>(it - spec.value.begin())];
  }
  if (f0 < lo || f0 > hi) throw DomainError("center guess outside the spectrum grid");
  if (hi - lo < 20.0 * f0 / (2.0 * q)) {
    throw DomainError("grid must span at least 20 half-widths of the resonance");
  }
  const double excl = exclusion_halfwidth < 0.0 ? 3.0 * mean_spacing(spec) : exclusion_halfwidth;

  std::vector<double> f, y;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (std::abs(spec.freq_hz[i] - f0) >= excl) {
      f.push_back(spec.freq_hz[i]);
      y.push_back(std::log(spec.value[i]));
    }
  }
  const auto m = static_cast<Eigen::Index>(f.size());
  if (m < 4) throw FitError("too few bins outside the exclusion region");
  const auto stats = log_stats(spec.averages);
  const double q2 = 4.0 * q * q;

  auto shape = [&](double fi, double c) {
    const double d = (fi - c) / c;
    return 1.0 / (1.0 + q2 * d * d);
  };

  // Start: linear least squares in relative units for floor and peak.
  double floor0 = 0.0, peak0 = 0.0;
  {
    Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
    Eigen::Vector2d b = Eigen::Vector2d::Zero();
    for (Eigen::Index i = 0; i < m; ++i) {
      const double s = std::exp(y[static_cast<std::size_t>(i)]);
      const Eigen::Vector2d row(1.0 / s, shape(f[static_cast<std::size_t>(i)], f0) / s);
      a += row * row.transpose();
      b += row;
    }
    const Eigen::Vector2d c = a.ldlt().solve(b);
    floor0 = c[0];
    peak0 = c[1];
    std::vector<double> lin(y.size());
    std::transform(y.begin(), y.end(), lin.begin(), [](double v) { return std::exp(v); });
    if (!(floor0 > 0.0)) floor0 = median(lin);
    if (!(peak0 > 0.0)) peak0 = *std::max_element(lin.begin(), lin.end());
  }

  detail::LmProblem prob;
  prob.residuals = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(m);
    const double fl = std::exp(x[0]), pk = std::exp(x[1]);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto k = static_cast<std::size_t>(i);
      r[i] = stats.weight * (std::log(fl + pk * shape(f[k], x[2])) + stats.bias - y[k]);
    }
    return r;
  };
  prob.jacobian = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd j(m, 3);
    const double fl = std::exp(x[0]), pk = std::exp(x[1]), c = x[2];
    for (Eigen::Index i = 0; i < m; ++i) {
      const double fi = f[static_cast<std::size_t>(i)];
      const double l = shape(fi, c);
      const double model = fl + pk * l;
      const double du = -2.0 * q2 * (fi - c) * fi / (c * c * c);
      j(i, 0) = stats.weight * fl / model;
      j(i, 1) = stats.weight * pk * l / model;
      j(i, 2) = stats.weight * (-pk * l * l * du) / model;
    }
    return j;
  };
  prob.lower = Eigen::Vector3d(-1e300, -1e300, lo);
  prob.upper = Eigen::Vector3d(1e300, 1e300, hi);
  const auto res = detail::levenberg_marquardt(
      prob, Eigen::Vector3d(std::log(floor0), std::log(peak0), f0));
  if (!res.converged || !res.params.allFinite()) {
    throw FitError("Lorentzian fit did not converge", describe(res));
  }
  LorentzianFit out;
  out.floor = std::exp(res.params[0]);
  out.peak = std::exp(res.params[1]);
  out.center = res.params[2];
  out.q_used = q;
  out.residual_norm = std::sqrt(res.cost);
  out.exclusion_halfwidth = excl;
  out.sigma_floor = out.floor * std::sqrt(std::max(0.0, res.covariance(0, 0)));
  out.sigma_peak = out.peak * std::sqrt(std::max(0.0, res.covariance(1, 1)));
  out.sigma_center = std::sqrt(std::max(0.0, res.covariance(2, 2)));
  out.points_used = f.size();
  out.grid_lo = lo;
  out.grid_hi = hi;
  return out;
}

double mode_temperature(const LorentzianFit& fit, double inertia) {
  const double w0 = two_pi * fit.center;
  return fit.peak * inertia * w0 * w0 * w0 / (4.0 * k_boltzmann * fit.q_used);
}

double infer_inertia(const LorentzianFit& fit, double temperature, double omega0, double q) {
  return 4.0 * k_boltzmann * temperature * q / (fit.peak * omega0 * omega0 * omega0);
}

CalibrationFactor thermal_reference_calibration(const Spectrum& volt_spectrum,
                                                const mech::OscillatorParams& osc,
                                                double exclusion_halfwidth) {
  osc.validate();
  if (volt_spectrum.unit != Unit::v2_per_hz) throw DomainError("expected a V^2/Hz spectrum");
  const auto fit = fit_lorentzian(volt_spectrum, osc.quality_factor, osc.frequency_hz(),
                                  exclusion_halfwidth);
  // Strongest peak contribution among the bins the fit actually used.
  double visible = 0.0;
  const double q2 = 4.0 * fit.q_used * fit.q_used;
  for (double f : volt_spectrum.freq_hz) {
    if (std::abs(f - fit.center) < fit.exclusion_halfwidth) continue;
    const double d = (f - fit.center) / fit.center;
    visible = std::max(visible, fit.peak / (1.0 + q2 * d * d));
  }
  if (visible < fit.floor / 10.0) {
    std::ostringstream os;
    os << "visible peak " << visible << " floor " << fit.floor;
    throw FitError("thermal peak not resolved above the imprecision floor", os.str());
  }
  const double s_theta = mech::intrinsic_psd(osc, osc.frequency_hz());
  return {std::sqrt(s_theta / fit.peak), 0.5 * fit.sigma_peak / fit.peak,
          CalibrationMethod::thermal_reference};
}

RingdownFit fit_ringdown(const sim::TimeSeries& envelope, const RingdownOptions& options) {
  envelope.validate();
  if (!(options.omega0 > 0.0)) throw DomainError("ringdown fit needs omega0 > 0");
  if (!(options.min_fraction > 0.0 && options.min_fraction < 1.0)) {
    throw DomainError("min_fraction must lie in (0, 1)");
  }
  const auto start = static_cast<std::size_t>(std::ceil(options.settle_time * envelope.sample_rate));
  if (start >= envelope.size()) throw DomainError("settle time exceeds the record");
  const double a_start = envelope.samples[start];
  if (!(a_start > 0.0)) throw FitError("envelope is not positive after settling");
  // Weighted regression of ln A on t; var(ln A) ~ 1 / A^2 for additive noise.
  double sw = 0.0, st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  std::size_t used = 0;
  std::size_t end = start;
  for (std::size_t i = start; i < envelope.size(); ++i, ++end) {
    const double a = envelope.samples[i];
    if (!(a > options.min_fraction * a_start)) break;
    const double w = a * a;
    const double t = envelope.time(i);
    const double y = std::log(a);
    sw += w;
    st += w * t;
    sy += w * y;
    stt += w * t * t;
    sty += w * t * y;
    ++used;
  }
  if (used < 3) throw FitError("too few envelope samples above the cutoff");
  const double tbar = st / sw;
  const double ybar = sy / sw;
  const double vt = stt / sw - tbar * tbar;
  if (!(vt > 0.0)) throw FitError("degenerate ringdown time base");
  const double slope = (sty / sw - tbar * ybar) / vt;
  const double icpt = ybar - slope * tbar;
  double rss = 0.0;
  for (std::size_t i = start; i < end; ++i) {
    const double a = envelope.samples[i];
    const double r = std::log(a) - icpt - slope * envelope.time(i);
    rss += a * a * r * r;
  }
  const double dof = static_cast<double>(used) - 2.0;
  const double sigma_slope = dof > 0.0 ? std::sqrt(rss / dof / (sw * vt)) : 0.0;
  const double span = envelope.time(end - 1) - envelope.time(start);
  if (!(slope < 0.0) || -slope * span < 1e-3 || -slope < 3.0 * sigma_slope) {
    std::ostringstream os;
    os << "slope " << slope << " +- " << sigma_slope << " over " << span << " s";
    throw FitError("envelope does not decay", os.str());
  }
  RingdownFit fit;
  fit.gamma0 = -2.0 * slope;
  fit.q = options.omega0 / fit.gamma0;
  fit.sigma_gamma0 = 2.0 * sigma_slope;
  fit.amplitude = std::exp(icpt);
  fit.residual_norm = std::sqrt(rss / sw);
  fit.points_used = used;
  fit.t_start = envelope.time(start);
  fit.t_end = envelope.time(end - 1);
  return fit;
}

namespace {

// Cold-damped observed and physical spectra with structural damping, for
// which W G0[W] = W0 G0 at every frequency. The thermal torque follows the
// same 1/f law, referenced to the nominal resonance `f_ref`.
struct ClosedLoopShape {
  double gamma0;  // intrinsic damping at resonance, rad/s
  double f_ref;   // Hz

  struct Terms {
    double delta;   // W0^2 - W^2
    double d0;      // |chi0^-1 / I|^2
    double im_eff;  // Im part of chi_eff^-1 / I
    double deff;    // |chi_eff^-1 / I|^2
  };
  Terms terms(double f, double f0, double geff) const {
    const double w = two_pi * f, w0 = two_pi * f0;
    const double delta = (w0 - w) * (w0 + w);
    const double c0 = w0 * gamma0;
    const double im_eff = c0 + w * (geff - gamma0);
    return {delta, delta * delta + c0 * c0, im_eff, delta * delta + im_eff * im_eff};
  }
  double torque(double f, double a) const { return a * f_ref / f; }
  double observed(double f, double a, double s, double geff, double f0) const {
    const auto t = terms(f, f0, geff);
    return (torque(f, a) + s * t.d0) / t.deff;
  }
  double physical(double f, double a, double s, double geff, double f0) const {
    const double w = two_pi * f;
    const double gfb = geff - gamma0;
    const auto t = terms(f, f0, geff);
    return (torque(f, a) + s * w * w * gfb * gfb) / t.deff;
  }
};

}  // namespace

OccupancyFromData occupancy_from_data(const Spectrum& obs_psd, const CalibrationFactor& cal,
                                      const mech::OscillatorParams& osc,
                                      const feedback::FeedbackConfig& fb,
                                      const beam::BeamParams& beam, double flag_threshold) {
  osc.validate();
  fb.validate(osc);
  Spectrum spec = obs_psd;
  double cal_error = 0.0;
  if (obs_psd.unit == Unit::v2_per_hz) {
    spec = cal.to_angle(obs_psd);
    cal_error = cal.relative_error;
  } else if (obs_psd.unit != Unit::rad2_per_hz) {
    throw DomainError("occupancy fit needs a V^2/Hz or rad^2/Hz spectrum");
  }
  spec.validate();
  for (double v : spec.value) {
    if (!(v > 0.0)) throw DomainError("occupancy fit needs a strictly positive spectrum");
  }
  const ClosedLoopShape shape{osc.gamma0(), osc.frequency_hz()};
  const auto stats = log_stats(spec.averages);
  const auto m = static_cast<Eigen::Index>(spec.size());
  if (m < 6) throw FitError("too few spectral bins for the closed-loop fit");
  std::vector<double> y(spec.size());
  std::transform(spec.value.begin(), spec.value.end(), y.begin(), [](double v) { return std::log(v); });
  const double lo = spec.freq_hz.front(), hi = spec.freq_hz.back();
  const double f0_init = std::clamp(osc.frequency_hz(), lo, hi);

  // Start: scan G_eff, solving (A, S_imp) by relative linear least squares.
  struct Start {
    double cost = std::numeric_limits<double>::infinity();
    double a = 0.0, s = 0.0, geff = 0.0;
  } best;
  auto try_start = [&](double geff) {
    Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
    Eigen::Vector2d atb = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < spec.size(); ++i) {
      const auto t = shape.terms(spec.freq_hz[i], f0_init, geff);
      const double sv = spec.value[i];
      const Eigen::Vector2d row(shape.torque(spec.freq_hz[i], 1.0) / (t.deff * sv),
                                t.d0 / (t.deff * sv));
      ata += row * row.transpose();
      atb += row;
    }
    // Column scaling keeps the 2x2 normal equations well conditioned.
    const Eigen::Vector2d scale(1.0 / std::sqrt(ata(0, 0)), 1.0 / std::sqrt(ata(1, 1)));
    const Eigen::Matrix2d scaled = scale.asDiagonal() * ata * scale.asDiagonal();
    const Eigen::Vector2d c = scale.cwiseProduct(scaled.ldlt().solve(scale.cwiseProduct(atb)));
    double a = c[0], s = c[1];
    if (!(s > 0.0)) s = spec.value.front() * 1e-3;
    if (!(a > 0.0)) a = 1e-300;
    double cost = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
      const double r = std::log(shape.observed(spec.freq_hz[i], a, s, geff, f0_init)) - y[i];
      cost += r * r;
    }
    if (std::isfinite(cost) && cost < best.cost) best = {cost, a, s, geff};
  };
  const double g_lo = shape.gamma0 / 3.0;
  const double g_hi = std::max(10.0 * two_pi * (hi - lo), 10.0 * shape.gamma0);
  for (double g : logspace(g_lo, g_hi, 161)) try_start(g);
  try_start(feedback::effective_damping(osc, fb));
  if (!std::isfinite(best.cost)) throw FitError("no usable starting point for the closed-loop fit");
  (void)beam;

  detail::LmProblem prob;
  prob.residuals = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(m);
    const double a = std::exp(x[0]), s = std::exp(x[1]), g = std::exp(x[2]);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto k = static_cast<std::size_t>(i);
      r[i] = stats.weight * (std::log(shape.observed(spec.freq_hz[k], a, s, g, x[3])) +
                             stats.bias - y[k]);
    }
    return r;
  };
  prob.jacobian = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd j(m, 4);
    const double a = std::exp(x[0]), s = std::exp(x[1]), g = std::exp(x[2]), f0 = x[3];
    const double w0 = two_pi * f0, g0 = shape.gamma0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double f = spec.freq_hz[static_cast<std::size_t>(i)];
      const double w = two_pi * f;
      const auto t = shape.terms(f, f0, g);
      const double tau = shape.torque(f, a);
      const double num = tau + s * t.d0;
      const double ddelta = 2.0 * w0 * two_pi;
      const double dd0 = 2.0 * t.delta * ddelta + 2.0 * w0 * g0 * g0 * two_pi;
      const double ddeff = 2.0 * t.delta * ddelta + 2.0 * t.im_eff * g0 * two_pi;
      j(i, 0) = stats.weight * tau / num;
      j(i, 1) = stats.weight * s * t.d0 / num;
      j(i, 2) = stats.weight * (-2.0 * t.im_eff * w * g / t.deff);
      j(i, 3) = stats.weight * (s * dd0 / num - ddeff / t.deff);
    }
    return j;
  };
  prob.lower = Eigen::Vector4d(-1e300, -1e300, -1e300, lo);
  prob.upper = Eigen::Vector4d(1e300, 1e300, 1e300, hi);
  const auto res = detail::levenberg_marquardt(
      prob, Eigen::Vector4d(std::log(best.a), std::log(best.s), std::log(best.geff), f0_init));
  if (!res.params.allFinite()) throw FitError("closed-loop fit diverged", describe(res));

  auto n_eff_of = [&](const Eigen::VectorXd& x) {
    const double a = std::exp(x[0]), s = std::exp(x[1]), g = std::exp(x[2]), f0 = x[3];
    auto model = osc;
    model.omega0 = two_pi * f0;
    const auto grid = feedback::resonance_window(model, g, 4001);
    Spectrum phys{grid, std::vector<double>(grid.size()), Unit::rad2_per_hz, 0};
    for (std::size_t i = 0; i < grid.size(); ++i) phys.value[i] = shape.physical(grid[i], a, s, g, f0);
    return feedback::occupancy_from_spectrum(phys, model.theta_zp(), f0).n_eff;
  };

  OccupancyFromData out;
  out.n_eff = n_eff_of(res.params);
  out.torque_term = std::exp(res.params[0]);
  out.s_imp = std::exp(res.params[1]);
  out.gamma_eff = std::exp(res.params[2]);
  out.center = res.params[3];
  out.residual_norm = std::sqrt(res.cost);
  const double dof = static_cast<double>(m - 4);
  out.reduced_chi2 = dof > 0 ? res.cost / dof : 0.0;
  out.flagged = !res.converged || out.reduced_chi2 > flag_threshold;
  out.sigma.resize(4);
  Eigen::Vector4d grad;
  for (int k = 0; k < 4; ++k) {
    const double var = res.covariance(k, k);
    out.sigma[static_cast<std::size_t>(k)] = std::sqrt(std::max(0.0, var));
    double h = k < 3 ? 1e-4 : 1e-4 * out.gamma_eff / two_pi;
    if (std::isfinite(var) && var > 0.0) h = std::min(h, std::sqrt(var));
    Eigen::VectorXd xp = res.params, xm = res.params;
    xp[k] += h;
    xm[k] -= h;
    grad[k] = (n_eff_of(xp) - n_eff_of(xm)) / (2.0 * h);
  }
  const Eigen::Matrix4d cov = res.covariance;
  double var_n = cov.allFinite() ? grad.dot(cov * grad) : 0.0;
  var_n += std::pow(2.0 * cal_error * out.n_eff, 2);
  out.sigma_n_eff = std::sqrt(std::max(0.0, var_n));
  out.grid_lo = lo;
  out.grid_hi = hi;
  return out;
}

ResonantOccupancy resonant_occupancy(const Spectrum& phys, const mech::OscillatorParams& osc,
                                     double gamma_guess, double window_widths) {
  osc.validate();
  phys.validate();
  if (!(gamma_guess > 0.0) || !(window_widths > 0.0)) {
    throw DomainError("gamma_guess and window_widths must be positive");
  }
  const ClosedLoopShape shape{osc.gamma0(), osc.frequency_hz()};
  const auto stats = log_stats(phys.averages);
  double center = osc.frequency_hz();
  double gamma = gamma_guess;
  ResonantOccupancy out;
  detail::LmResult res;
  // Two passes: the second re-centres the window on the first fit.
  for (int pass = 0; pass < 2; ++pass) {
    const double half = window_widths * gamma / two_pi;
    std::vector<double> f, y;
    for (std::size_t i = 0; i < phys.size(); ++i) {
      if (std::abs(phys.freq_hz[i] - center) <= half && phys.value[i] > 0.0) {
        f.push_back(phys.freq_hz[i]);
        y.push_back(std::log(phys.value[i]));
      }
    }
    const auto m = static_cast<Eigen::Index>(f.size());
    if (m < 5) throw FitError("too few bins inside the resonance window");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double g = 1.0 / shape.terms(f[i], center, gamma).deff;
      const double sv = std::exp(y[i]);
      num += g / sv;
      den += g * g / (sv * sv);
    }
    detail::LmProblem prob;
    prob.residuals = [&](const Eigen::VectorXd& x) {
      Eigen::VectorXd r(m);
      const double g = std::exp(x[1]);
      for (Eigen::Index i = 0; i < m; ++i) {
        const auto k = static_cast<std::size_t>(i);
        r[i] = stats.weight * (x[0] - std::log(shape.terms(f[k], x[2], g).deff) + stats.bias - y[k]);
      }
      return r;
    };
    prob.jacobian = [&](const Eigen::VectorXd& x) {
      Eigen::MatrixXd j(m, 3);
      const double g = std::exp(x[1]), w0 = two_pi * x[2];
      for (Eigen::Index i = 0; i < m; ++i) {
        const double fi = f[static_cast<std::size_t>(i)];
        const auto t = shape.terms(fi, x[2], g);
        const double ddeff = 2.0 * t.delta * 2.0 * w0 * two_pi + 2.0 * t.im_eff * shape.gamma0 * two_pi;
        j(i, 0) = stats.weight;
        j(i, 1) = stats.weight * (-2.0 * t.im_eff * two_pi * fi * g / t.deff);
        j(i, 2) = stats.weight * (-ddeff / t.deff);
      }
      return j;
    };
    prob.lower = Eigen::Vector3d(-1e300, -1e300, f.front());
    prob.upper = Eigen::Vector3d(1e300, 1e300, f.back());
    res = detail::levenberg_marquardt(
        prob, Eigen::Vector3d(std::log(num / den), std::log(gamma), center));
    if (!res.converged || !res.params.allFinite()) {
      throw FitError("resonant mode fit did not converge", describe(res));
    }
    gamma = std::exp(res.params[1]);
    center = res.params[2];
    out.points_used = f.size();
    out.reduced_chi2 = m > 3 ? res.cost / static_cast<double>(m - 3) : 0.0;
  }
  auto model = osc;
  model.omega0 = two_pi * center;
  const double zp2 = model.theta_zp() * model.theta_zp();
  out.level = std::exp(res.params[0]);
  out.gamma_eff = gamma;
  out.center = center;
  const double total = out.level / (8.0 * gamma * model.omega0 * model.omega0 * zp2);
  out.n_eff = total - 0.5;
  const Eigen::Vector3d g(1.0, -1.0, -1.0 / center);
  const Eigen::Matrix3d cov = res.covariance;
  const double var = cov.allFinite() ? g.dot(cov * g) : 0.0;
  out.sigma_n_eff = total * std::sqrt(std::max(0.0, var));
  return out;
}

FitReport report(const LorentzianFit& fit) {
  FitReport r;
  r.model = "lorentzian";
  r.params = {{"floor", fit.floor}, {"peak", fit.peak}, {"center_hz", fit.center},
              {"q_used", fit.q_used}, {"exclusion_halfwidth_hz", fit.exclusion_halfwidth}};
  r.sigma = {{"floor", fit.sigma_floor}, {"peak", fit.sigma_peak}, {"center_hz", fit.sigma_center}};
  r.residual_norm = fit.residual_norm;
  r.grid_lo = fit.grid_lo;
  r.grid_hi = fit.grid_hi;
  return r;
}

FitReport report(const RingdownFit& fit) {
  FitReport r;
  r.model = "ringdown";
  r.params = {{"gamma0", fit.gamma0}, {"q", fit.q}, {"amplitude", fit.amplitude}};
  r.sigma = {{"gamma0", fit.sigma_gamma0}, {"q", fit.q * fit.sigma_gamma0 / fit.gamma0}};
  r.residual_norm = fit.residual_norm;
  r.grid_lo = fit.t_start;
  r.grid_hi = fit.t_end;
  return r;
}

FitReport report(const OccupancyFromData& fit) {
  FitReport r;
  r.model = "closed_loop_observed";
  r.params = {{"n_eff", fit.n_eff},       {"gamma_eff", fit.gamma_eff}, {"s_imp", fit.s_imp},
              {"torque_term", fit.torque_term}, {"center_hz", fit.center},
              {"reduced_chi2", fit.reduced_chi2}};
  r.sigma = {{"n_eff", fit.sigma_n_eff}};
  if (fit.sigma.size() == 4) {
    r.sigma["torque_term"] = fit.torque_term * fit.sigma[0];
    r.sigma["s_imp"] = fit.s_imp * fit.sigma[1];
    r.sigma["gamma_eff"] = fit.gamma_eff * fit.sigma[2];
    r.sigma["center_hz"] = fit.sigma[3];
  }
  r.residual_norm = fit.residual_norm;
  r.grid_lo = fit.grid_lo;
  r.grid_hi = fit.grid_hi;
  r.flagged = fit.flagged;
  return r;
}

std::string to_json(const FitReport& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["params"] = r.params;
  j["sigma"] = r.sigma;
  j["residual_norm"] = r.residual_norm;
  j["grid_span"] = {r.grid_lo, r.grid_hi};
  j["flagged"] = r.flagged;
  return j.dump(2);
}

}  // namespace torquill::estimate
