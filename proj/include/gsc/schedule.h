#pragma once

#include <utility>
#include <vector>

namespace gsc {

/// Piecewise-linear weight over iterations: linear between knots, held
/// constant before the first and after the last. An empty schedule is 1.
class WeightSchedule {
 public:
  WeightSchedule() = default;
  explicit WeightSchedule(std::vector<std::pair<double, double>> knots);

  static WeightSchedule constant(double value);

  /// 0 up to start, linear ramp, 1 from end on. Requires start < end.
  static WeightSchedule ramp(double start, double end);

  double at(double iteration) const;

  const std::vector<std::pair<double, double>>& knots() const {
    return knots_;
  }

 private:
  std::vector<std::pair<double, double>> knots_;
};

} // namespace gsc
