#pragma once

#include <span>
#include <vector>

namespace rivercast {

/// Locally weighted linear smoother with tricube neighbourhood weights and
/// optional bisquare robustness passes (Cleveland 1979). Holds the smoothed
/// value at each distinct training abscissa and interpolates linearly
/// between them, holding the end values constant outside the training range.
class LowessCurve {
 public:
  LowessCurve() = default;

  /// Throws ContractError for fewer than 2 points, mismatched lengths or a
  /// fraction outside (0, 1].
  static LowessCurve fit(std::span<const double> x, std::span<const double> y,
                         double fraction = 0.5, int robustness_iterations = 3);

  double operator()(double x) const;

  const std::vector<double>& knots() const { return x_; }
  const std::vector<double>& values() const { return y_; }

 private:
  std::vector<double> x_;
  std::vector<double> y_;
};

}  // namespace rivercast
