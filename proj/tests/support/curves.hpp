#pragma once

#include <cmath>
#include <vector>

#include "rivercast/rating_curve.hpp"

namespace rivercast::testing {

/// Continuous piecewise curve: each piece after the first picks its
/// coefficient so the flows agree at the shared boundary.
inline std::vector<CurvePiece> continuous_pieces(const std::vector<double>& bounds,
                                                 const std::vector<double>& offsets,
                                                 const std::vector<double>& exponents,
                                                 double first_coefficient) {
  std::vector<CurvePiece> pieces;
  for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
    CurvePiece p{bounds[i], bounds[i + 1], offsets[i], first_coefficient, exponents[i]};
    if (i > 0) {
      const double q = pieces.back().flow(bounds[i]);
      p.coefficient = q / std::pow(bounds[i] - offsets[i], exponents[i]);
    }
    pieces.push_back(p);
  }
  return pieces;
}

/// Three configurations: one piece, two pieces, three pieces over two
/// validity segments.
inline std::vector<RatingCurveSet> sample_curve_sets(Timestamp start, Timestamp end) {
  const Timestamp mid = start + (end - start) / 2;
  std::vector<RatingCurveSet> out;
  out.emplace_back("single", std::vector<CurveSegment>{
                                 {start, end, {CurvePiece{1.0, 30.0, 0.5, 20.0, 1.8}}}});
  out.emplace_back("double",
                   std::vector<CurveSegment>{
                       {start, end, continuous_pieces({1.0, 6.0, 30.0}, {0.5, 2.0}, {2.0, 1.6}, 30.0)}});
  out.emplace_back(
      "triple",
      std::vector<CurveSegment>{
          {start, mid, continuous_pieces({1.0, 4.0, 9.0, 30.0}, {0.2, 1.0, 3.0}, {2.2, 1.7, 1.4}, 12.0)},
          {mid, end, continuous_pieces({1.5, 5.0, 12.0, 30.0}, {0.8, 2.5, 4.0}, {2.0, 1.5, 1.3}, 18.0)}});
  return out;
}

}  // namespace rivercast::testing
