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

// Times the serial reference path against the OpenMP path for each kernel
// and checks that both produce identical output.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "torquill/estimate.hpp"
#include "torquill/feedback.hpp"
#include "torquill/mech.hpp"
#include "torquill/sim.hpp"

using namespace torquill;

namespace {

double median_ms(const std::function<void()>& body, int reps) {
  std::vector<double> t;
  for (int i = 0; i < reps; ++i) {
    const auto start = std::chrono::steady_clock::now();
    body();
    t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count());
  }
  std::nth_element(t.begin(), t.begin() + reps / 2, t.end());
  return t[static_cast<std::size_t>(reps / 2)];
}

template <typename Run, typename Same>
bool bench(const char* name, int reps, Run run, Same same) {
  decltype(run(Exec::serial)) serial_out, parallel_out;
  const double ts = median_ms([&] { serial_out = run(Exec::serial); }, reps);
  const double tp = median_ms([&] { parallel_out = run(Exec::parallel); }, reps);
  const bool ok = same(serial_out, parallel_out);
  std::printf("%-22s serial %9.2f ms  parallel %9.2f ms  speedup %5.2fx  %s\n", name, ts, tp,
              ts / tp, ok ? "identical" : "MISMATCH");
  return ok;
}

bool same_spectrum(const Spectrum& a, const Spectrum& b) {
  return a.freq_hz == b.freq_hz && a.value == b.value;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* env = std::getenv("TORQUILL_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
  const int reps = argc > 1 ? std::max(1, std::atoi(argv[1])) : 5;
  std::printf("threads: %d, repetitions: %d\n", omp_get_max_threads(), reps);

  const auto osc = mech::OscillatorParams::from_frequency(35950.0, 1.365e7, 5.54e-17, 290.0);
  beam::BeamParams b;
  b.waist_radius = 180.3e-6;
  b.power = 10e-3;
  b.efficiency = 0.244;

  bool ok = true;
  const auto grid = logspace(100.0, 1e5, 1'000'000);
  ok &= bench("intrinsic_spectrum", reps,
              [&](Exec e) { return mech::intrinsic_spectrum(osc, grid, e); }, same_spectrum);

  feedback::FeedbackConfig fb;
  fb.gamma_fb = 5e4 * osc.gamma0();
  ok &= bench("closed_loop_observed", reps,
              [&](Exec e) {
                return feedback::closed_loop_observed_psd(osc, b, {}, readout::Lever::mirrored, fb,
                                                          grid, e);
              },
              same_spectrum);

  const auto gains = logspace(1.0, 1e6, 200);
  ok &= bench("gain_sweep", reps,
              [&](Exec e) {
                return feedback::gain_sweep(osc, b, {}, readout::Lever::mirrored, gains, {}, e);
              },
              [](const auto& a, const auto& c) {
                if (a.size() != c.size()) return false;
                for (std::size_t i = 0; i < a.size(); ++i)
                  if (a[i].n_eff != c[i].n_eff) return false;
                return true;
              });

  const auto record = sim::synthesize_noise([](double f) { return 1e-20 / (1.0 + f / 1e3); }, 20.0,
                                            400e3, 1);
  estimate::WelchOptions wo;
  wo.segment_length = 16384;
  ok &= bench("welch_psd", reps, [&](Exec e) { return estimate::welch_psd(record, wo, e); },
              same_spectrum);

  return ok ? 0 : 1;
}
