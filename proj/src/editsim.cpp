#include "longiseg/editsim.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <numeric>
#include <stdexcept>

namespace longiseg::editsim {

namespace {

int find_root(std::vector<int>& parent, int x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

void unite(std::vector<int>& parent, int a, int b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  if (a < b) {
    parent[b] = a;
  } else {
    parent[a] = b;
  }
}

// Two-pass union-find labelling over a binary row-major mask.
std::vector<std::vector<Pixel>> components(const std::vector<std::uint8_t>& mask, int rows, int cols) {
  std::vector<int> parent(mask.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto at = [&](int r, int c) { return r * cols + c; };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!mask[at(r, c)]) continue;
      // already-visited neighbours: W, NW, N, NE
      if (c > 0 && mask[at(r, c - 1)]) unite(parent, at(r, c), at(r, c - 1));
      if (r > 0) {
        if (c > 0 && mask[at(r - 1, c - 1)]) unite(parent, at(r, c), at(r - 1, c - 1));
        if (mask[at(r - 1, c)]) unite(parent, at(r, c), at(r - 1, c));
        if (c + 1 < cols && mask[at(r - 1, c + 1)]) unite(parent, at(r, c), at(r - 1, c + 1));
      }
    }
  }
  std::map<int, std::size_t> slot;
  std::vector<std::vector<Pixel>> out;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!mask[at(r, c)]) continue;
      const int root = find_root(parent, at(r, c));
      auto [it, inserted] = slot.try_emplace(root, out.size());
      if (inserted) out.emplace_back();
      out[it->second].push_back({r, c});
    }
  }
  return out;
}

bool region_less(const ErrorRegion& a, const ErrorRegion& b) {
  if (a.area() != b.area()) return a.area() > b.area();
  if (a.cls != b.cls) return a.cls < b.cls;
  if (a.polarity != b.polarity) return a.polarity < b.polarity;
  return a.voxels.front() < b.voxels.front();
}

}  // namespace

std::vector<ErrorRegion> error_regions(const LabelImage& pred, const LabelImage& gt) {
  require_same_extents(pred, gt, "error_regions pred vs gt");
  const int rows = pred.extent(0);
  const int cols = pred.extent(1);
  auto p = pred.values();
  auto g = gt.values();
  std::vector<ErrorRegion> out;
  std::vector<std::uint8_t> mask(p.size());
  for (int cls = 1; cls <= kForegroundClasses; ++cls) {
    for (Polarity pol : {Polarity::kUnder, Polarity::kOver}) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        mask[i] = pol == Polarity::kUnder ? (g[i] == cls && p[i] != cls) : (p[i] == cls && g[i] != cls);
      }
      for (auto& voxels : components(mask, rows, cols)) {
        out.push_back(ErrorRegion{cls, pol, std::move(voxels), std::nullopt});
      }
    }
  }
  return out;
}

std::vector<ErrorRegion> select_topk(std::vector<ErrorRegion> regions, int k) {
  std::stable_sort(regions.begin(), regions.end(), region_less);
  if (k >= 0 && static_cast<std::size_t>(k) < regions.size()) regions.resize(k);
  return regions;
}

std::vector<Pixel> digital_line(Pixel a, Pixel b) {
  std::vector<Pixel> out;
  int r = a.row, c = a.col;
  const int dr = std::abs(b.row - a.row), dc = std::abs(b.col - a.col);
  const int sr = a.row < b.row ? 1 : -1, sc = a.col < b.col ? 1 : -1;
  int err = dc - dr;
  while (true) {
    out.push_back({r, c});
    if (r == b.row && c == b.col) break;
    const int e2 = 2 * err;
    if (e2 > -dr) {
      err -= dr;
      c += sc;
    }
    if (e2 < dc) {
      err += dc;
      r += sr;
    }
  }
  return out;
}

std::vector<Pixel> synthesize_scribble(const ErrorRegion& region) {
  if (region.voxels.empty()) throw std::invalid_argument("synthesize_scribble: empty region");
  const auto& vox = region.voxels;  // sorted
  auto member = [&](int r, int c) { return std::binary_search(vox.begin(), vox.end(), Pixel{r, c}); };

  std::vector<Pixel> boundary;
  for (const auto& p : vox) {
    if (!member(p.row - 1, p.col) || !member(p.row + 1, p.col) || !member(p.row, p.col - 1) ||
        !member(p.row, p.col + 1)) {
      boundary.push_back(p);
    }
  }

  Pixel a = boundary.front(), b = boundary.front();
  long best = -1;
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    for (std::size_t j = i; j < boundary.size(); ++j) {
      const long dr = boundary[i].row - boundary[j].row;
      const long dc = boundary[i].col - boundary[j].col;
      const long d = dr * dr + dc * dc;
      if (d > best) {
        best = d;
        a = boundary[i];
        b = boundary[j];
      }
    }
  }

  std::vector<Pixel> line = digital_line(a, b);
  std::erase_if(line, [&](const Pixel& p) { return !member(p.row, p.col); });
  return line;
}

SimulatedEdits simulate_edits_detailed(const LabelImage& pred, const LabelImage& gt, int cap) {
  if (cap < 1) throw std::invalid_argument("simulate_edits: cap must be >= 1");
  SimulatedEdits out{EditMask<2>(pred.extents()), {}};
  const auto regions = select_topk(error_regions(pred, gt), kTopRegions);
  for (const auto& region : regions) {
    if (static_cast<int>(out.scribbles.size()) >= cap) break;
    Scribble s{region.cls, static_cast<std::int8_t>(region.polarity == Polarity::kUnder ? 1 : -1),
               synthesize_scribble(region)};
    auto& channel = out.mask.for_class(s.cls);
    for (const auto& p : s.pixels) channel(p.row, p.col) = s.value;
    out.scribbles.push_back(std::move(s));
  }
  return out;
}

EditMask<2> simulate_edits(const LabelImage& pred, const LabelImage& gt, int cap) {
  return simulate_edits_detailed(pred, gt, cap).mask;
}

}  // namespace longiseg::editsim
