#include "rivercast/lowess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rivercast/errors.hpp"

namespace rivercast {
namespace {

double tricube(double u) {
  if (u >= 1.0) return 0.0;
  const double t = 1.0 - u * u * u;
  return t * t * t;
}

double bisquare(double u) {
  if (std::abs(u) >= 1.0) return 0.0;
  const double t = 1.0 - u * u;
  return t * t;
}

double local_fit(std::span<const double> x, std::span<const double> y,
                 std::span<const double> robust, double at, std::size_t q) {
  const std::size_t n = x.size();
  std::vector<double> dist(n);
  for (std::size_t j = 0; j < n; ++j) dist[j] = std::abs(x[j] - at);
  std::vector<double> sorted = dist;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(q - 1), sorted.end());
  const double radius = sorted[q - 1];

  double sw = 0.0, swx = 0.0, swy = 0.0;
  std::vector<double> w(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    w[j] = robust[j] * (radius > 0.0 ? tricube(dist[j] / radius) : (dist[j] == 0.0 ? 1.0 : 0.0));
    sw += w[j];
    swx += w[j] * x[j];
    swy += w[j] * y[j];
  }
  if (!(sw > 0.0)) {
    // Every neighbour was down-weighted to zero: plain neighbourhood mean.
    double sy = 0.0;
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (dist[j] <= radius) {
        sy += y[j];
        ++k;
      }
    return sy / static_cast<double>(k);
  }
  const double mx = swx / sw;
  const double my = swy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double dx = x[j] - mx;
    sxx += w[j] * dx * dx;
    sxy += w[j] * dx * (y[j] - my);
  }
  // Degenerate neighbourhood (all weight on one abscissa): local mean.
  const double scale = std::max(1.0, mx * mx);
  if (sxx <= 1e-12 * sw * scale) return my;
  return my + (sxy / sxx) * (at - mx);
}

}  // namespace

LowessCurve LowessCurve::fit(std::span<const double> x, std::span<const double> y,
                             double fraction, int robustness_iterations) {
  if (x.size() != y.size()) throw ContractError("lowess: x and y differ in length");
  if (x.size() < 2) throw ContractError("lowess: need at least two points");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("lowess: fraction must be in (0, 1]");
  if (robustness_iterations < 0) throw ContractError("lowess: negative robustness iterations");
  const std::size_t n = x.size();
  // Neighbourhood size truncates f*n, as in the classic implementations.
  const std::size_t q = std::clamp<std::size_t>(
      static_cast<std::size_t>(fraction * static_cast<double>(n) + 1e-10), 2, n);

  std::vector<double> knots(x.begin(), x.end());
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  std::vector<double> robust(n, 1.0);
  std::vector<double> fitted;
  auto smooth = [&] {
    fitted.clear();
    fitted.reserve(knots.size());
    for (double k : knots) fitted.push_back(local_fit(x, y, robust, k, q));
  };
  smooth();
  double y_scale = 0.0;
  for (double v : y) y_scale = std::max(y_scale, std::abs(v));
  for (int it = 0; it < robustness_iterations; ++it) {
    std::vector<double> resid(n);
    for (std::size_t j = 0; j < n; ++j) {
      const auto pos = std::lower_bound(knots.begin(), knots.end(), x[j]) - knots.begin();
      resid[j] = y[j] - fitted[static_cast<std::size_t>(pos)];
    }
    std::vector<double> abs_r(n);
    for (std::size_t j = 0; j < n; ++j) abs_r[j] = std::abs(resid[j]);
    const auto mid = abs_r.begin() + static_cast<long>(n / 2);
    std::nth_element(abs_r.begin(), mid, abs_r.end());
    double median = *mid;
    if (n % 2 == 0) median = 0.5 * (median + *std::max_element(abs_r.begin(), mid));
    // Residuals already negligible: further passes would divide by ~0.
    if (median <= 1e-12 * std::max(1.0, y_scale)) break;
    for (std::size_t j = 0; j < n; ++j) robust[j] = bisquare(resid[j] / (6.0 * median));
    smooth();
  }

  LowessCurve curve;
  curve.x_ = std::move(knots);
  curve.y_ = std::move(fitted);
  return curve;
}

double LowessCurve::operator()(double x) const {
  if (x_.empty()) return 0.0;
  if (x <= x_.front()) return y_.front();
  if (x >= x_.back()) return y_.back();
  const auto it = std::upper_bound(x_.begin(), x_.end(), x);
  const std::size_t hi = static_cast<std::size_t>(it - x_.begin());
  const std::size_t lo = hi - 1;
  const double t = (x - x_[lo]) / (x_[hi] - x_[lo]);
  return y_[lo] + t * (y_[hi] - y_[lo]);
}

}  // namespace rivercast
