// SPDX-License-Identifier: Apache-2.0
#include "vaealign/alignment_losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "vaealign/errors.hpp"
#include "vaealign/kernels.hpp"

namespace vaealign {

FeatureBatch::FeatureBatch(std::size_t batch, std::size_t frames, std::size_t dim)
    : batch_(batch), frames_(frames), dim_(dim), values_(batch * frames * dim, 0.0),
      mask_(batch * frames, 1) {}

FeatureBatch::FeatureBatch(std::size_t batch, std::size_t frames, std::size_t dim,
                           std::vector<double> values, std::vector<std::uint8_t> mask)
    : batch_(batch), frames_(frames), dim_(dim), values_(std::move(values)), mask_(std::move(mask)) {
  if (values_.size() != batch * frames * dim || mask_.size() != batch * frames)
    throw ShapeError("FeatureBatch buffers do not match (B, T, D)");
}

std::size_t FeatureBatch::valid_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(mask_.begin(), mask_.end(), [](auto m) { return m != 0; }));
}

std::size_t FeatureBatch::valid_count(std::size_t b) const noexcept {
  const auto first = mask_.begin() + static_cast<std::ptrdiff_t>(b * frames_);
  return static_cast<std::size_t>(
      std::count_if(first, first + static_cast<std::ptrdiff_t>(frames_), [](auto m) { return m != 0; }));
}

void FeatureBatch::validate() const {
  if (batch_ == 0 || frames_ == 0 || dim_ == 0) throw ShapeError("FeatureBatch needs B, T, D >= 1");
  if (values_.size() != batch_ * frames_ * dim_ || mask_.size() != batch_ * frames_)
    throw ShapeError("FeatureBatch buffers do not match (B, T, D)");
  if (valid_count() == 0) throw ShapeError("FeatureBatch has no valid frame");
}

void Margins::validate() const {
  for (double m : {m1, m2}) {
    if (!(m >= 0.0) || m > 2.0) throw ValidationError("margin must lie in [0, 2], got " + std::to_string(m));
  }
}

namespace {

void check_pair(const FeatureBatch& zp, const FeatureBatch& f, std::span<double> grad) {
  zp.validate();
  f.validate();
  if (zp.batch() != f.batch() || zp.frames() != f.frames() || zp.dim() != f.dim())
    throw ShapeError("student/teacher shapes differ: (" + std::to_string(zp.batch()) + "," +
                     std::to_string(zp.frames()) + "," + std::to_string(zp.dim()) + ") vs (" +
                     std::to_string(f.batch()) + "," + std::to_string(f.frames()) + "," +
                     std::to_string(f.dim()) + ")");
  if (!std::equal(zp.mask().begin(), zp.mask().end(), f.mask().begin()))
    throw ShapeError("student/teacher masks differ");
  if (!grad.empty() && grad.size() != zp.values().size())
    throw ShapeError("gradient buffer size does not match (B, T, D)");
}

void check_margin(double m) {
  if (!(m >= 0.0) || m > 2.0) throw ValidationError("margin must lie in [0, 2], got " + std::to_string(m));
}

// -log sigmoid(c) and its derivative in c.
inline double neg_log_sigmoid(double c) { return std::log1p(std::exp(-c)); }
inline double neg_log_sigmoid_grad(double c) { return -1.0 / (1.0 + std::exp(c)); }

struct CosParts {
  double value;
  double nu;  // max(|u|, eps)
  double nv;
  bool clamped;
  bool u_floored;
};

CosParts cosine_parts(const double* u, const double* v, std::size_t n, double eps) {
  const auto& k = kernels::active();
  const double uu = std::sqrt(k.sum_sq(u, n));
  const double vv = std::sqrt(k.sum_sq(v, n));
  const double nu = std::max(uu, eps);
  const double nv = std::max(vv, eps);
  const double raw = k.dot(u, v, n) / (nu * nv);
  const double c = std::clamp(raw, -1.0, 1.0);
  return {c, nu, nv, c != raw, uu <= eps};
}

// g += scale * d(cos)/du
void add_cosine_grad(const double* u, const double* v, std::size_t n, const CosParts& p, double scale,
                     double* g) {
  if (p.clamped || scale == 0.0) return;
  const auto& k = kernels::active();
  k.axpy(scale / (p.nu * p.nv), v, g, n);
  if (!p.u_floored) k.axpy(-scale * p.value / (p.nu * p.nu), u, g, n);
}

template <typename PerFrame>
double framewise_mean(const FeatureBatch& zp, const FeatureBatch& f, std::span<double> grad,
                      PerFrame&& per_frame) {
  check_pair(zp, f, grad);
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  const std::size_t D = zp.dim();
  const double inv_n = 1.0 / static_cast<double>(zp.valid_count());
  double sum = 0.0;
  for (std::size_t b = 0; b < zp.batch(); ++b) {
    for (std::size_t t = 0; t < zp.frames(); ++t) {
      if (!zp.valid(b, t)) continue;
      const double* u = zp.frame(b, t).data();
      const double* v = f.frame(b, t).data();
      const CosParts p = cosine_parts(u, v, D, kCosineEps);
      const auto [value, dvalue] = per_frame(p.value);
      sum += value;
      if (!grad.empty())
        add_cosine_grad(u, v, D, p, dvalue * inv_n, grad.data() + (b * zp.frames() + t) * D);
    }
  }
  return sum * inv_n;
}

}  // namespace

double cosine(std::span<const double> u, std::span<const double> v, double eps) {
  if (u.size() != v.size() || u.empty()) throw ShapeError("cosine needs equal, non-empty vectors");
  if (!(eps > 0.0)) throw ValidationError("cosine eps must be > 0");
  return cosine_parts(u.data(), v.data(), u.size(), eps).value;
}

double loss_T(const FeatureBatch& zp, const FeatureBatch& f, std::span<double> grad) {
  return framewise_mean(zp, f, grad, [](double c) {
    return std::pair{neg_log_sigmoid(c), neg_log_sigmoid_grad(c)};
  });
}

double loss_mcos(const FeatureBatch& zp, const FeatureBatch& f, double m1, std::span<double> grad) {
  check_margin(m1);
  return framewise_mean(zp, f, grad, [m1](double c) {
    const double h = 1.0 - m1 - c;
    return h > 0.0 ? std::pair{h, -1.0} : std::pair{0.0, 0.0};
  });
}

double loss_D(const FeatureBatch& zp, const FeatureBatch& f, std::span<double> grad) {
  check_pair(zp, f, grad);
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  const std::size_t B = zp.batch(), T = zp.frames(), D = zp.dim();
  for (std::size_t b = 0; b < B; ++b) {
    if (zp.valid_count(b) == 0)
      throw ShapeError("loss_D: sample " + std::to_string(b) + " has no valid frame");
  }
  const auto& k = kernels::active();
  const double inv_n = 1.0 / static_cast<double>(B * D);
  std::vector<double> dot(D), zz(D), ff(D);
  std::vector<double> coef_v(D), coef_u(D);
  double sum = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    std::fill(dot.begin(), dot.end(), 0.0);
    std::fill(zz.begin(), zz.end(), 0.0);
    std::fill(ff.begin(), ff.end(), 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      if (!zp.valid(b, t)) continue;
      const double* u = zp.frame(b, t).data();
      const double* v = f.frame(b, t).data();
      k.mul_acc(u, v, dot.data(), D);
      k.mul_acc(u, u, zz.data(), D);
      k.mul_acc(v, v, ff.data(), D);
    }
    for (std::size_t d = 0; d < D; ++d) {
      const double uu = std::sqrt(zz[d]);
      const double nu = std::max(uu, kCosineEps);
      const double nv = std::max(std::sqrt(ff[d]), kCosineEps);
      const double raw = dot[d] / (nu * nv);
      const double c = std::clamp(raw, -1.0, 1.0);
      sum += neg_log_sigmoid(c);
      const double s = (c == raw) ? neg_log_sigmoid_grad(c) * inv_n : 0.0;
      coef_v[d] = s / (nu * nv);
      coef_u[d] = uu > kCosineEps ? -s * c / (nu * nu) : 0.0;
    }
    if (grad.empty()) continue;
    for (std::size_t t = 0; t < T; ++t) {
      if (!zp.valid(b, t)) continue;
      const double* u = zp.frame(b, t).data();
      const double* v = f.frame(b, t).data();
      double* g = grad.data() + (b * T + t) * D;
      k.mul_acc(coef_v.data(), v, g, D);
      k.mul_acc(coef_u.data(), u, g, D);
    }
  }
  return sum * inv_n;
}

namespace {

// Rows of src at the chosen frames, each scaled to unit norm (eps-floored).
void normalized_rows(const FeatureBatch& x, std::span<const std::size_t> rows, std::vector<double>& out,
                     std::vector<double>& norms, std::vector<std::uint8_t>& floored) {
  const std::size_t D = x.dim();
  const auto& k = kernels::active();
  out.assign(rows.size() * D, 0.0);
  norms.assign(rows.size(), 0.0);
  floored.assign(rows.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* src = x.values().data() + rows[i] * D;
    const double n = std::sqrt(k.sum_sq(src, D));
    floored[i] = n <= kCosineEps;
    norms[i] = std::max(n, kCosineEps);
    const double inv = 1.0 / norms[i];
    for (std::size_t d = 0; d < D; ++d) out[i * D + d] = src[d] * inv;
  }
}

}  // namespace

MdssResult loss_mdss(const FeatureBatch& zp, const FeatureBatch& f, double m2, std::size_t max_pairs_frames,
                     std::span<double> grad, std::uint64_t subsample_seed) {
  check_pair(zp, f, grad);
  check_margin(m2);
  if (max_pairs_frames == 0) throw ValidationError("max_pairs_frames must be >= 1");
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);

  std::vector<std::size_t> rows;
  rows.reserve(zp.valid_count());
  for (std::size_t r = 0; r < zp.batch() * zp.frames(); ++r) {
    if (zp.mask()[r]) rows.push_back(r);
  }
  MdssResult result;
  if (rows.size() > max_pairs_frames) {
    std::mt19937_64 rng(subsample_seed);
    for (std::size_t i = 0; i < max_pairs_frames; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, rows.size() - 1);
      std::swap(rows[i], rows[pick(rng)]);
    }
    rows.resize(max_pairs_frames);
    std::sort(rows.begin(), rows.end());
    result.approximate = true;
  }
  const std::size_t N = rows.size();
  const std::size_t D = zp.dim();
  result.frames_used = N;

  std::vector<double> zn, fn, znorm, fnorm;
  std::vector<std::uint8_t> zfloor, ffloor;
  normalized_rows(zp, rows, zn, znorm, zfloor);
  normalized_rows(f, rows, fn, fnorm, ffloor);

  std::vector<double> cz(N * N, 0.0), cf(N * N, 0.0);
  kernels::gemm_nt(zn.data(), zn.data(), cz.data(), N, D, N);
  kernels::gemm_nt(fn.data(), fn.data(), cf.data(), N, D, N);

  const double inv_nn = 1.0 / (static_cast<double>(N) * static_cast<double>(N));
  std::vector<double> s;
  if (!grad.empty()) s.assign(N * N, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < N * N; ++i) {
    const double a_raw = cz[i];
    const double a = std::clamp(a_raw, -1.0, 1.0);
    const double b = std::clamp(cf[i], -1.0, 1.0);
    const double diff = a - b;
    const double h = std::fabs(diff) - m2;
    if (h > 0.0) {
      sum += h;
      if (!grad.empty() && a == a_raw) s[i] = (diff > 0.0 ? inv_nn : -inv_nn);
    }
  }
  result.value = sum * inv_nn;

  if (!grad.empty()) {
    // d/d(zn) = (S + S^T) zn
    std::vector<double> sym(N * N);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) sym[i * N + j] = s[i * N + j] + s[j * N + i];
    std::vector<double> dzn(N * D, 0.0);
    kernels::gemm_nn(sym.data(), zn.data(), dzn.data(), N, N, D);
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < N; ++i) {
      double* g = grad.data() + rows[i] * D;
      const double* gi = dzn.data() + i * D;
      const double inv = 1.0 / znorm[i];
      if (zfloor[i]) {
        k.axpy(inv, gi, g, D);
      } else {
        // Project out the radial component of the unit-vector gradient.
        const double radial = k.dot(gi, zn.data() + i * D, D);
        k.axpy(inv, gi, g, D);
        k.axpy(-radial * inv, zn.data() + i * D, g, D);
      }
    }
  }
  return result;
}

AlignDistances align_distances(const FeatureBatch& zp, const FeatureBatch& f) {
  const double d_mcos = loss_mcos(zp, f, 0.0);
  const auto mdss = loss_mdss(zp, f, 0.0, std::numeric_limits<std::size_t>::max());
  return {d_mcos, mdss.value};
}

}  // namespace vaealign
