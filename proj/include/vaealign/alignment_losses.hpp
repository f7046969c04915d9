// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace vaealign {

// Batched (B, T, D) features with a (B, T) validity mask. Masked frames are
// excluded from every sum and every denominator.
class FeatureBatch {
 public:
  FeatureBatch() = default;
  // All frames valid, values zero.
  FeatureBatch(std::size_t batch, std::size_t frames, std::size_t dim);
  FeatureBatch(std::size_t batch, std::size_t frames, std::size_t dim, std::vector<double> values,
               std::vector<std::uint8_t> mask);

  std::size_t batch() const noexcept { return batch_; }
  std::size_t frames() const noexcept { return frames_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<std::uint8_t> mask() noexcept { return mask_; }
  std::span<const std::uint8_t> mask() const noexcept { return mask_; }

  std::span<double> frame(std::size_t b, std::size_t t) noexcept {
    return {values_.data() + (b * frames_ + t) * dim_, dim_};
  }
  std::span<const double> frame(std::size_t b, std::size_t t) const noexcept {
    return {values_.data() + (b * frames_ + t) * dim_, dim_};
  }
  bool valid(std::size_t b, std::size_t t) const noexcept { return mask_[b * frames_ + t] != 0; }
  std::size_t valid_count() const noexcept;
  std::size_t valid_count(std::size_t b) const noexcept;

  // Throws ShapeError unless dims are >= 1, sizes agree and some frame is valid.
  void validate() const;

 private:
  std::size_t batch_ = 0;
  std::size_t frames_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> mask_;
};

struct Margins {
  double m1 = 0.0;
  double m2 = 0.0;
  void validate() const;
};

inline constexpr double kCosineEps = 1e-8;
inline constexpr std::size_t kDefaultMaxPairsFrames = 4096;

// u.v / (max(|u|, eps) max(|v|, eps)), clamped to [-1, 1].
double cosine(std::span<const double> u, std::span<const double> v, double eps = kCosineEps);

// Every loss below validates that zp and f share shape and mask. When grad is
// non-empty it must hold B*T*D entries and receives d(loss)/d(zp); masked
// entries are set to zero.

// Frame-wise: mean over valid (b, t) of -log sigmoid(cos(zp[b,t], f[b,t])).
double loss_T(const FeatureBatch& zp, const FeatureBatch& f, std::span<double> grad = {});

// Dimension-wise: mean over (b, d) of -log sigmoid(cos) between the length-T
// series of dimension d, restricted to the valid frames of sample b.
double loss_D(const FeatureBatch& zp, const FeatureBatch& f, std::span<double> grad = {});

// Marginal cosine: mean over valid frames of relu(1 - m1 - cos).
double loss_mcos(const FeatureBatch& zp, const FeatureBatch& f, double m1,
                 std::span<double> grad = {});

struct MdssResult {
  double value = 0.0;
  bool approximate = false;  // computed on a seeded frame subsample
  std::size_t frames_used = 0;
};

// Marginal distance-sequence similarity over all N valid frames pooled across
// the batch: (1/N^2) sum_{i,j} relu(|cos(zp_i, zp_j) - cos(f_i, f_j)| - m2).
// When N > max_pairs_frames a seeded subsample of max_pairs_frames frames is used.
MdssResult loss_mdss(const FeatureBatch& zp, const FeatureBatch& f, double m2,
                     std::size_t max_pairs_frames = kDefaultMaxPairsFrames,
                     std::span<double> grad = {}, std::uint64_t subsample_seed = 0);

struct AlignDistances {
  double d_mcos = 0.0;
  double d_mdss = 0.0;
};

// Margin-free mcos/mdss on all frames; evaluation only.
AlignDistances align_distances(const FeatureBatch& zp, const FeatureBatch& f);

}  // namespace vaealign
