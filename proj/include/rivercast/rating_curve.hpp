#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rivercast/timeutil.hpp"

namespace rivercast {

/// Q = coefficient * (h - offset)^exponent over stage range [h_min, h_max).
struct CurvePiece {
  double h_min = 0.0;
  double h_max = 0.0;
  double offset = 0.0;
  double coefficient = 1.0;
  double exponent = 1.0;

  double flow(double stage) const;
  double stage(double discharge) const;
};

/// Curve in force over [valid_from, valid_to).
struct CurveSegment {
  Timestamp valid_from;
  Timestamp valid_to;
  std::vector<CurvePiece> pieces;
};

struct FlowResult {
  double discharge = 0.0;
  bool extrapolated = false;  // stage outside the fitted piece range
};

/// Time-segmented, piecewise power-law stage-discharge relation for one
/// station. Immutable after construction.
class RatingCurveSet {
 public:
  /// Validates the invariants (non-overlapping segments, contiguous pieces,
  /// offset below each piece, positive a and b, continuity at piece
  /// boundaries to 1e-6 relative). Throws ConfigError on violation.
  RatingCurveSet(std::string station_id, std::vector<CurveSegment> segments);

  const std::string& station_id() const { return station_id_; }
  const std::vector<CurveSegment>& segments() const { return segments_; }

  /// Throws UncoveredPeriodError if no segment covers `t`.
  const CurveSegment& segment_at(Timestamp t) const;

  /// Throws UncoveredPeriodError, or BelowOffsetError when stage <= offset.
  FlowResult to_flow(double stage, Timestamp t) const;

  /// Analytic inverse of to_flow. Throws DomainError for discharge <= 0.
  double to_stage(double discharge, Timestamp t) const;

 private:
  std::string station_id_;
  std::vector<CurveSegment> segments_;
};

std::vector<RatingCurveSet> load_rating_curves(const std::filesystem::path& path);
void save_rating_curves(const std::vector<RatingCurveSet>& curves,
                        const std::filesystem::path& path);

/// The set for `station_id`, or throws ConfigError.
const RatingCurveSet& find_curve(const std::vector<RatingCurveSet>& curves,
                                 const std::string& station_id);

}  // namespace rivercast
