#pragma once

// Brute-force reference implementations used by the unit and acceptance tests. Written
// independently of the library: plain loops, recursion-free flood fill, direct formulas.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <tuple>
#include <vector>

#include "longiseg/core.hpp"

namespace longiseg::oracle {

struct Metrics {
  double dsc, ppv, tpr;
  std::optional<double> vd;  // empty when undefined
  long tp, fp, fn;
};

/// Triple loop over an 8^3-style volume given as flat (pred, gt) arrays.
inline Metrics metrics(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt, int cls) {
  long tp = 0, fp = 0, fn = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == cls, g = gt[i] == cls;
    np += p;
    ng += g;
    if (p && g) ++tp;
    if (p && !g) ++fp;
    if (!p && g) ++fn;
  }
  Metrics m{};
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.dsc = (np + ng) == 0 ? 1.0 : 2.0 * tp / static_cast<double>(np + ng);
  m.ppv = np == 0 ? 1.0 : tp / static_cast<double>(np);
  m.tpr = ng == 0 ? 1.0 : tp / static_cast<double>(ng);
  if (ng > 0) {
    m.vd = 100.0 * std::abs(static_cast<double>(np - ng)) / static_cast<double>(ng);
  } else if (np == 0) {
    m.vd = 0.0;
  }
  return m;
}

struct Region {
  int cls;
  int polarity;  // 0 under, 1 over
  std::vector<std::pair<int, int>> voxels;  // row-major sorted
};

/// Explicit-stack 8-connected flood fill of every error set.
inline std::vector<Region> regions(const LabelImage& pred, const LabelImage& gt) {
  const int h = pred.extent(0), w = pred.extent(1);
  std::vector<Region> out;
  for (int cls = 1; cls <= 2; ++cls) {
    for (int pol = 0; pol < 2; ++pol) {
      auto in_set = [&](int r, int c) {
        return pol == 0 ? (gt(r, c) == cls && pred(r, c) != cls) : (pred(r, c) == cls && gt(r, c) != cls);
      };
      std::vector<char> seen(static_cast<std::size_t>(h) * w, 0);
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
          if (!in_set(r, c) || seen[r * w + c]) continue;
          Region reg{cls, pol, {}};
          std::vector<std::pair<int, int>> stack{{r, c}};
          seen[r * w + c] = 1;
          while (!stack.empty()) {
            auto [y, x] = stack.back();
            stack.pop_back();
            reg.voxels.emplace_back(y, x);
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                const int ny = y + dy, nx = x + dx;
                if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
                if (seen[ny * w + nx] || !in_set(ny, nx)) continue;
                seen[ny * w + nx] = 1;
                stack.emplace_back(ny, nx);
              }
            }
          }
          std::sort(reg.voxels.begin(), reg.voxels.end());
          out.push_back(std::move(reg));
        }
      }
    }
  }
  return out;
}

/// Largest k by area; ties by class, under first, then smallest first voxel.
inline std::vector<Region> topk(std::vector<Region> regs, int k) {
  std::sort(regs.begin(), regs.end(), [](const Region& a, const Region& b) {
    return std::make_tuple(-static_cast<long>(a.voxels.size()), a.cls, a.polarity, a.voxels.front()) <
           std::make_tuple(-static_cast<long>(b.voxels.size()), b.cls, b.polarity, b.voxels.front());
  });
  if (static_cast<int>(regs.size()) > k) regs.resize(k);
  return regs;
}

/// Most recent nonzero value of a sequence, or 0.
inline std::int8_t last_nonzero(const std::vector<std::int8_t>& seq) {
  std::int8_t out = 0;
  for (auto v : seq)
    if (v != 0) out = v;
  return out;
}

}  // namespace longiseg::oracle
