#include "gsc/schedule.h"

#include "gsc/errors.h"

#include <algorithm>
#include <cmath>

namespace gsc {

WeightSchedule::WeightSchedule(std::vector<std::pair<double, double>> knots) : knots_(std::move(knots)) {
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (!std::isfinite(knots_[i].first) || !std::isfinite(knots_[i].second)) {
      throw InvalidParameter("schedule knots must be finite");
    }
    if (i > 0 && !(knots_[i].first > knots_[i - 1].first)) {
      throw InvalidParameter("schedule knots must be strictly increasing in iteration");
    }
  }
}

WeightSchedule WeightSchedule::constant(double value) {
  return WeightSchedule({{0.0, value}});
}

WeightSchedule WeightSchedule::ramp(double start, double end) {
  if (!(start < end)) {
    throw InvalidParameter("schedule ramp needs start < end");
  }
  return WeightSchedule({{start, 0.0}, {end, 1.0}});
}

double WeightSchedule::at(double iteration) const {
  if (knots_.empty()) {
    return 1.0;
  }
  if (iteration <= knots_.front().first) {
    return knots_.front().second;
  }
  if (iteration >= knots_.back().first) {
    return knots_.back().second;
  }
  const auto upper = std::upper_bound(
      knots_.begin(), knots_.end(), iteration, [](double t, const auto& knot) { return t < knot.first; });
  const auto lower = upper - 1;
  const double f = (iteration - lower->first) / (upper->first - lower->first);
  return lower->second + f * (upper->second - lower->second);
}

} // namespace gsc
