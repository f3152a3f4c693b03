#pragma once

#include <cstdint>

#include "longiseg/core.hpp"

namespace longiseg::metrics {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  std::int64_t predicted() const { return tp + fp; }
  std::int64_t actual() const { return tp + fn; }
};

/// Class-vs-rest voxel counts. `cls` must be a foreground class.
template <std::size_t Rank>
ConfusionCounts confusion(const Grid<std::uint8_t, Rank>& pred, const Grid<std::uint8_t, Rank>& gt, int cls);

// Empty-vs-empty scores 1.0 for the ratio metrics.
double dsc(const ConfusionCounts& c);
double ppv(const ConfusionCounts& c);
double tpr(const ConfusionCounts& c);

/// 100 * |pred - gt| / gt. Both zero gives 0; gt == 0 with pred > 0 throws std::domain_error.
double vd(std::int64_t pred_volume, std::int64_t gt_volume);

struct ClassScores {
  double dsc = 0.0;
  double ppv = 0.0;
  double tpr = 0.0;
  double vd = 0.0;
  bool vd_defined = true;
};

template <std::size_t Rank>
ClassScores score(const Grid<std::uint8_t, Rank>& pred, const Grid<std::uint8_t, Rank>& gt, int cls) {
  const auto c = confusion(pred, gt, cls);
  ClassScores s{dsc(c), ppv(c), tpr(c), 0.0, true};
  if (c.actual() == 0 && c.predicted() > 0) {
    s.vd_defined = false;
  } else {
    s.vd = vd(c.predicted(), c.actual());
  }
  return s;
}

}  // namespace longiseg::metrics
