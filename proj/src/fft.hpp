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
#include <cstddef>
#include <span>

namespace torquill::detail {

/// Real-to-complex transform of fixed length backed by FFTW. Planning uses
/// FFTW_ESTIMATE under a process-wide lock, so plans are deterministic and
/// instances may run concurrently on different threads.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  /// Unnormalized forward transform: X_k = sum_n x_n e^{-2 pi i k n / N}.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  /// Unnormalized inverse of a Hermitian half spectrum (no 1/N factor).
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  std::size_t n_;
  double* real_;
  void* spec_;  // fftw_complex*
  void* forward_plan_;
  void* inverse_plan_;
};

}  // namespace torquill::detail
