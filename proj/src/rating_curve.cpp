#include "rivercast/rating_curve.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "rivercast/errors.hpp"

namespace rivercast {

double CurvePiece::flow(double h) const { return coefficient * std::pow(h - offset, exponent); }

double CurvePiece::stage(double q) const {
  return offset + std::pow(q / coefficient, 1.0 / exponent);
}

RatingCurveSet::RatingCurveSet(std::string station_id, std::vector<CurveSegment> segments)
    : station_id_(std::move(station_id)), segments_(std::move(segments)) {
  if (segments_.empty()) throw ConfigError("rating curve for " + station_id_ + " has no segments");
  std::sort(segments_.begin(), segments_.end(),
            [](const CurveSegment& a, const CurveSegment& b) { return a.valid_from < b.valid_from; });
  for (std::size_t s = 0; s < segments_.size(); ++s) {
    const CurveSegment& seg = segments_[s];
    if (!(seg.valid_from < seg.valid_to)) {
      throw ConfigError("rating curve segment with empty validity interval for " + station_id_);
    }
    if (s > 0 && seg.valid_from < segments_[s - 1].valid_to) {
      throw ConfigError("overlapping rating curve segments for " + station_id_);
    }
    if (seg.pieces.empty()) throw ConfigError("rating curve segment without pieces");
    for (std::size_t p = 0; p < seg.pieces.size(); ++p) {
      const CurvePiece& piece = seg.pieces[p];
      if (!(piece.coefficient > 0.0) || !(piece.exponent > 0.0)) {
        throw ConfigError("rating curve coefficient and exponent must be positive");
      }
      if (!(piece.h_min < piece.h_max)) throw ConfigError("rating curve piece has empty range");
      if (!(piece.offset < piece.h_min)) {
        throw ConfigError("rating curve offset must lie below the piece range");
      }
      if (p > 0) {
        const CurvePiece& prev = seg.pieces[p - 1];
        if (prev.h_max != piece.h_min) throw ConfigError("rating curve pieces are not contiguous");
        const double left = prev.flow(prev.h_max);
        const double right = piece.flow(piece.h_min);
        if (std::abs(left - right) > 1e-6 * std::max(std::abs(left), std::abs(right))) {
          throw ConfigError("rating curve is discontinuous at stage " +
                            std::to_string(piece.h_min));
        }
      }
    }
  }
}

const CurveSegment& RatingCurveSet::segment_at(Timestamp t) const {
  for (const auto& seg : segments_) {
    if (seg.valid_from <= t && t < seg.valid_to) return seg;
  }
  throw UncoveredPeriodError("no rating curve for " + station_id_ + " at " + format_iso8601(t));
}

FlowResult RatingCurveSet::to_flow(double stage, Timestamp t) const {
  const CurveSegment& seg = segment_at(t);
  const auto& pieces = seg.pieces;
  auto it = std::find_if(pieces.begin(), pieces.end(),
                         [stage](const CurvePiece& p) { return stage < p.h_max; });
  const bool above = it == pieces.end();
  const CurvePiece& piece = above ? pieces.back() : *it;
  if (!(stage > piece.offset)) {
    throw BelowOffsetError("stage " + std::to_string(stage) + " at or below curve offset " +
                           std::to_string(piece.offset) + " for " + station_id_);
  }
  return {piece.flow(stage), above || stage < pieces.front().h_min};
}

double RatingCurveSet::to_stage(double discharge, Timestamp t) const {
  if (!(discharge > 0.0)) {
    throw DomainError("discharge must be positive, got " + std::to_string(discharge));
  }
  const auto& pieces = segment_at(t).pieces;
  for (const auto& piece : pieces) {
    if (discharge < piece.flow(piece.h_max)) return piece.stage(discharge);
  }
  return pieces.back().stage(discharge);
}

std::vector<RatingCurveSet> load_rating_curves(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open rating curve file " + path.string());
  std::vector<RatingCurveSet> out;
  try {
    const auto doc = nlohmann::json::parse(in);
    for (const auto& st : doc.at("stations")) {
      std::vector<CurveSegment> segments;
      for (const auto& sj : st.at("segments")) {
        CurveSegment seg;
        seg.valid_from = parse_iso8601(sj.at("valid_from").get<std::string>());
        seg.valid_to = parse_iso8601(sj.at("valid_to").get<std::string>());
        for (const auto& pj : sj.at("pieces")) {
          seg.pieces.push_back({pj.at("h_min").get<double>(), pj.at("h_max").get<double>(),
                                pj.at("offset").get<double>(), pj.at("a").get<double>(),
                                pj.at("b").get<double>()});
        }
        segments.push_back(std::move(seg));
      }
      out.emplace_back(st.at("station_id").get<std::string>(), std::move(segments));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("rating curve file " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("rating curve file " + path.string() + ": " + e.what());
  }
  return out;
}

void save_rating_curves(const std::vector<RatingCurveSet>& curves,
                        const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["stations"] = nlohmann::json::array();
  for (const auto& c : curves) {
    nlohmann::json st{{"station_id", c.station_id()}, {"segments", nlohmann::json::array()}};
    for (const auto& seg : c.segments()) {
      nlohmann::json sj{{"valid_from", format_iso8601(seg.valid_from)},
                        {"valid_to", format_iso8601(seg.valid_to)},
                        {"pieces", nlohmann::json::array()}};
      for (const auto& p : seg.pieces) {
        sj["pieces"].push_back({{"h_min", p.h_min},
                                {"h_max", p.h_max},
                                {"offset", p.offset},
                                {"a", p.coefficient},
                                {"b", p.exponent}});
      }
      st["segments"].push_back(std::move(sj));
    }
    doc["stations"].push_back(std::move(st));
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write rating curve file " + path.string());
  out << doc.dump(2) << '\n';
}

const RatingCurveSet& find_curve(const std::vector<RatingCurveSet>& curves,
                                 const std::string& station_id) {
  for (const auto& c : curves) {
    if (c.station_id() == station_id) return c;
  }
  throw ConfigError("no rating curve for station '" + station_id + "'");
}

}  // namespace rivercast
