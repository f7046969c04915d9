// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace vaealign {

// In-place radix-2 complex FFT, forward sign (e^{-i 2 pi k n / N}).
class Fft {
 public:
  explicit Fft(std::size_t n);
  std::size_t size() const noexcept { return n_; }
  void forward(std::span<std::complex<double>> data) const;

 private:
  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<double>> twiddle_;
};

// Squared-magnitude floor inside sqrt, keeps |X| differentiable at zero.
inline constexpr double kStftMagFloor = 1e-12;

// Hann-windowed (periodic) STFT magnitudes, hop = window / 4, no centering.
// Signals shorter than the window are zero-padded into a single frame.
// Returns frames x (window / 2 + 1), row-major.
std::vector<double> stft_magnitude(std::span<const double> signal, std::size_t window,
                                   std::size_t* n_frames = nullptr);

struct ReconConfig {
  bool use_stft = true;
  std::vector<std::size_t> stft_windows{512, 1024, 2048};
};

struct ReconTerms {
  double total = 0.0;
  double waveform_l1 = 0.0;  // mean |x - x_hat| over valid samples
  double stft_l1 = 0.0;      // mean over resolutions of mean ||X| - |X_hat||
};

// x and x_hat are (B, S) row-major; sample b is valid on [0, valid_lengths[b]).
// grad, when non-empty, receives d(total)/d(x_hat) (zero on padding).
ReconTerms recon_loss(std::span<const double> x, std::span<const double> x_hat, std::size_t batch,
                      std::span<const std::size_t> valid_lengths, const ReconConfig& config,
                      std::span<double> grad = {});

}  // namespace vaealign
