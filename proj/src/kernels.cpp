#include "kslab/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <limits>
#include <stdexcept>

namespace kslab {

double min_triple_perimeter(std::span<const Vec2> x) {
  const std::size_t n = x.size();
  double best = std::numeric_limits<double>::infinity();
  if (n < 3) return best;
  // Pairwise distances once, then all triples.
  thread_local std::vector<double> d;
  d.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double r = norm(x[i] - x[j]);
      d[i * n + j] = r;
      d[j * n + i] = r;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dij = d[i * n + j];
      if (dij >= best) continue;
      for (std::size_t k = j + 1; k < n; ++k) {
        best = std::min(best, dij + d[j * n + k] + d[k * n + i]);
      }
    }
  }
  return best;
}

double cutoff_phi(std::span<const Vec2> positions, double ell) {
  if (positions.size() < 3) {
    throw std::domain_error("cutoff_phi: the triple cutoff needs at least 3 particles");
  }
  const double m = min_triple_perimeter(positions);
  return std::clamp(2.0 * ell * m - 1.0, 0.0, 1.0);
}

void drift_field_into(std::span<const Vec2> x, double chi, double eps, std::optional<double> cutoff_ell,
                      std::span<Vec2> out) {
  assert(out.size() == x.size());
  const std::size_t n = x.size();
  double scale = chi / static_cast<double>(n);
  if (cutoff_ell) scale *= cutoff_phi(x, *cutoff_ell);
  const double eps2 = eps * eps;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 xi = x[i];
    double bx = 0.0, by = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = xi.x - x[j].x;
      const double dy = xi.y - x[j].y;
      const double r2 = dx * dx + dy * dy + eps2;
      const double s = r2 > 0.0 ? -1.0 / (kTwoPi * r2) : 0.0;
      bx += s * dx;
      by += s * dy;
    }
    out[i] = {scale * bx, scale * by};
  }
}

DriftField drift_field(std::span<const Vec2> positions, double chi, double eps,
                       std::optional<double> cutoff_ell) {
  DriftField out(positions.size());
  drift_field_into(positions, chi, eps, cutoff_ell, out);
  return out;
}

void drift_field_symmetric_into(std::span<const Vec2> x, double chi, double eps,
                                std::optional<double> cutoff_ell, std::span<Vec2> out) {
  assert(out.size() == x.size());
  const std::size_t n = x.size();
  double scale = chi / static_cast<double>(n);
  if (cutoff_ell) scale *= cutoff_phi(x, *cutoff_ell);
  std::fill(out.begin(), out.end(), Vec2{});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec2 k = kernel_regularized(x[i] - x[j], eps);
      out[i] += k;
      out[j] -= k;
    }
  }
  for (auto& b : out) b *= scale;
}

}  // namespace kslab
