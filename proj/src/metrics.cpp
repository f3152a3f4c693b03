#include "longiseg/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace longiseg::metrics {

template <std::size_t Rank>
ConfusionCounts confusion(const Grid<std::uint8_t, Rank>& pred, const Grid<std::uint8_t, Rank>& gt, int cls) {
  require_same_extents(pred, gt, "confusion pred vs gt");
  if (cls < 1 || cls > kForegroundClasses) throw std::invalid_argument("confusion: class must be 1 or 2");
  ConfusionCounts c;
  auto p = pred.values();
  auto g = gt.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool pp = p[i] == cls;
    const bool gg = g[i] == cls;
    c.tp += pp && gg;
    c.fp += pp && !gg;
    c.fn += !pp && gg;
  }
  return c;
}

template ConfusionCounts confusion<2>(const Grid<std::uint8_t, 2>&, const Grid<std::uint8_t, 2>&, int);
template ConfusionCounts confusion<3>(const Grid<std::uint8_t, 3>&, const Grid<std::uint8_t, 3>&, int);

double dsc(const ConfusionCounts& c) {
  const std::int64_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double ppv(const ConfusionCounts& c) {
  const std::int64_t denom = c.tp + c.fp;
  if (denom == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

double tpr(const ConfusionCounts& c) {
  const std::int64_t denom = c.tp + c.fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

double vd(std::int64_t pred_volume, std::int64_t gt_volume) {
  if (pred_volume < 0 || gt_volume < 0) throw std::invalid_argument("vd: negative volume");
  if (gt_volume == 0) {
    if (pred_volume == 0) return 0.0;
    throw std::domain_error("vd: undefined for an empty ground truth with a non-empty prediction");
  }
  return 100.0 * std::abs(static_cast<double>(pred_volume - gt_volume)) / static_cast<double>(gt_volume);
}

}  // namespace longiseg::metrics
