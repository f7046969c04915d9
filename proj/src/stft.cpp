// SPDX-License-Identifier: Apache-2.0
#include "vaealign/stft.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "vaealign/errors.hpp"
#include "vaealign/kernels.hpp"

namespace vaealign {

Fft::Fft(std::size_t n) : n_(n), bitrev_(n), twiddle_(n / 2) {
  if (n == 0 || (n & (n - 1)) != 0) throw ValidationError("FFT size must be a power of two");
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    bitrev_[i] = r;
  }
  for (std::size_t k = 0; k < n / 2; ++k)
    twiddle_[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
}

void Fft::forward(std::span<std::complex<double>> a) const {
  for (std::size_t i = 0; i < n_; ++i)
    if (i < bitrev_[i]) std::swap(a[i], a[bitrev_[i]]);
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n_ / len;
    for (std::size_t i = 0; i < n_; i += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const auto u = a[i + j];
        const auto v = a[i + j + half] * twiddle_[j * stride];
        a[i + j] = u + v;
        a[i + j + half] = u - v;
      }
    }
  }
}

namespace {

struct WindowPlan {
  Fft fft;
  std::vector<double> hann;
  explicit WindowPlan(std::size_t w) : fft(w), hann(w) {
    for (std::size_t n = 0; n < w; ++n)
      hann[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(w));
  }
};

const WindowPlan& plan_for(std::size_t w) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<WindowPlan>> plans;
  std::lock_guard lock(mu);
  auto& p = plans[w];
  if (!p) p = std::make_unique<WindowPlan>(w);
  return *p;
}

std::size_t frame_count(std::size_t len, std::size_t w) {
  const std::size_t hop = w / 4;
  return len < w ? 1 : 1 + (len - w) / hop;
}

void frame_spectrum(std::span<const double> sig, std::size_t start, const WindowPlan& plan,
                    std::vector<std::complex<double>>& buf) {
  const std::size_t w = plan.hann.size();
  buf.assign(w, {0.0, 0.0});
  for (std::size_t n = 0; n < w && start + n < sig.size(); ++n) buf[n] = sig[start + n] * plan.hann[n];
  plan.fft.forward(buf);
}

}  // namespace

std::vector<double> stft_magnitude(std::span<const double> signal, std::size_t window,
                                   std::size_t* n_frames) {
  const auto& plan = plan_for(window);
  const std::size_t frames = frame_count(signal.size(), window);
  const std::size_t bins = window / 2 + 1;
  std::vector<double> out(frames * bins);
  std::vector<std::complex<double>> buf;
  for (std::size_t fr = 0; fr < frames; ++fr) {
    frame_spectrum(signal, fr * (window / 4), plan, buf);
    for (std::size_t k = 0; k < bins; ++k) out[fr * bins + k] = std::sqrt(std::norm(buf[k]) + kStftMagFloor);
  }
  if (n_frames) *n_frames = frames;
  return out;
}

ReconTerms recon_loss(std::span<const double> x, std::span<const double> x_hat, std::size_t batch,
                      std::span<const std::size_t> valid_lengths, const ReconConfig& config,
                      std::span<double> grad) {
  if (x.size() != x_hat.size()) throw ShapeError("recon_loss: x and x_hat lengths differ");
  if (batch == 0 || x.size() % batch != 0) throw ShapeError("recon_loss: length not divisible by batch");
  if (valid_lengths.size() != batch) throw ShapeError("recon_loss: one valid length per sample required");
  if (!grad.empty() && grad.size() != x.size()) throw ShapeError("recon_loss: gradient buffer size");
  const std::size_t S = x.size() / batch;
  std::size_t total_valid = 0;
  for (auto l : valid_lengths) {
    if (l > S) throw ShapeError("recon_loss: valid length exceeds padded length");
    total_valid += l;
  }
  if (total_valid == 0) throw ShapeError("recon_loss: no valid samples");
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);

  ReconTerms out;
  const auto& k = kernels::active();
  const double inv_valid = 1.0 / static_cast<double>(total_valid);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xa = x.data() + b * S;
    const double* xb = x_hat.data() + b * S;
    out.waveform_l1 += k.abs_diff_sum(xa, xb, valid_lengths[b]);
    if (!grad.empty()) {
      double* g = grad.data() + b * S;
      for (std::size_t i = 0; i < valid_lengths[b]; ++i) {
        const double d = xb[i] - xa[i];
        g[i] = d > 0.0 ? inv_valid : (d < 0.0 ? -inv_valid : 0.0);
      }
    }
  }
  out.waveform_l1 *= inv_valid;

  if (config.use_stft && !config.stft_windows.empty()) {
    const double inv_res = 1.0 / static_cast<double>(config.stft_windows.size());
    std::vector<std::complex<double>> ref, est, back;
    for (std::size_t w : config.stft_windows) {
      const auto& plan = plan_for(w);
      const std::size_t hop = w / 4;
      const std::size_t bins = w / 2 + 1;
      std::size_t cells = 0;
      for (std::size_t b = 0; b < batch; ++b)
        if (valid_lengths[b] > 0) cells += frame_count(valid_lengths[b], w) * bins;
      const double scale = inv_res / static_cast<double>(cells);
      double sum = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t len = valid_lengths[b];
        if (len == 0) continue;
        const std::span<const double> xa(x.data() + b * S, len);
        const std::span<const double> xb(x_hat.data() + b * S, len);
        for (std::size_t fr = 0; fr < frame_count(len, w); ++fr) {
          const std::size_t start = fr * hop;
          frame_spectrum(xa, start, plan, ref);
          frame_spectrum(xb, start, plan, est);
          bool any = false;
          if (!grad.empty()) back.assign(w, {0.0, 0.0});
          for (std::size_t q = 0; q < bins; ++q) {
            const double ma = std::sqrt(std::norm(ref[q]) + kStftMagFloor);
            const double mb = std::sqrt(std::norm(est[q]) + kStftMagFloor);
            const double d = mb - ma;
            sum += std::fabs(d);
            if (!grad.empty() && d != 0.0) {
              const double g = (d > 0.0 ? scale : -scale) / mb;
              // conj of (dL/dRe + i dL/dIm) so one forward FFT applies the adjoint
              back[q] = std::complex<double>(g * est[q].real(), -g * est[q].imag());
              any = true;
            }
          }
          if (any) {
            plan.fft.forward(back);
            double* g = grad.data() + b * S;
            for (std::size_t n = 0; n < w && start + n < len; ++n) g[start + n] += back[n].real() * plan.hann[n];
          }
        }
      }
      out.stft_l1 += sum * scale;
    }
  }
  out.total = out.waveform_l1 + out.stft_l1;
  return out;
}

}  // namespace vaealign
