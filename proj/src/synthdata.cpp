#include "longiseg/synthdata.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "longiseg/volume_io.hpp"

namespace longiseg::synthdata {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Approximately standard normal, from a counter-based hash (sum of four uniforms).
double hashed_normal(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(index));
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    s += static_cast<double>(h & 0xFFFF) / 65535.0;
    h >>= 16;
  }
  return (s - 2.0) * std::sqrt(3.0);
}

using Point = std::array<double, 3>;

// Sum of random plane waves: smooth texture with roughly unit variance.
struct Texture {
  struct Wave {
    Point k;
    double phase;
  };
  std::vector<Wave> waves;

  Texture() = default;
  Texture(std::mt19937_64& rng, int count, double min_freq, double max_freq) {
    std::uniform_real_distribution<double> freq(min_freq, max_freq), phase(0.0, 2 * std::numbers::pi);
    std::normal_distribution<double> dir(0.0, 1.0);
    for (int i = 0; i < count; ++i) {
      Point d{dir(rng), dir(rng), dir(rng)};
      const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) + 1e-12;
      const double f = freq(rng);
      waves.push_back({{d[0] / n * f, d[1] / n * f, d[2] / n * f}, phase(rng)});
    }
  }
  double operator()(const Point& p) const {
    double s = 0.0;
    for (const auto& w : waves) s += std::sin(w.k[0] * p[0] + w.k[1] * p[1] + w.k[2] * p[2] + w.phase);
    return waves.empty() ? 0.0 : s * std::sqrt(2.0 / waves.size());
  }
};

struct Ellipsoid {
  Point centre;
  Point radii;
  double level(const Point& p, double scale = 1.0) const {
    double q = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double d = (p[a] - centre[a]) / (radii[a] * scale);
      q += d * d;
    }
    return q;
  }
};

struct Blob {
  Ellipsoid shape;
  int cls = kGGO;  // intensity class; for mimics only the look
  bool contains(const Point& p, double scale, const Texture& boundary) const {
    return shape.level(p, scale) <= 1.0 + 0.25 * boundary(p);
  }
};

struct Vessel {
  Point a, b;
  double radius;
  bool contains(const Point& p) const {
    Point ab{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    Point ap{p[0] - a[0], p[1] - a[1], p[2] - a[2]};
    const double len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    double t = len2 > 0 ? (ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    double d2 = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double d = ap[i] - t * ab[i];
      d2 += d * d;
    }
    return d2 <= radius * radius;
  }
};

struct Phantom {
  Point shape;
  double body_h = 0, body_w = 0;
  std::array<Ellipsoid, 2> lungs;
  std::vector<Blob> lesions;
  std::vector<Blob> mimics;
  std::vector<Vessel> vessels;
  Texture parenchyma, lesion_texture, boundary, vessel_texture;
  std::array<Texture, 3> warp;
  double deformation = 0;

  bool in_lung(const Point& p) const { return lungs[0].level(p) <= 1.0 || lungs[1].level(p) <= 1.0; }

  Point displaced(const Point& x) const {
    if (deformation == 0.0) return x;
    return {x[0] + deformation * std::tanh(warp[0](x)), x[1] + deformation * std::tanh(warp[1](x)),
            x[2] + deformation * std::tanh(warp[2](x))};
  }

  Label label_at(const Point& p, double scale) const {
    if (!in_lung(p)) return kBackground;
    bool ggo = false;
    for (const auto& l : lesions) {
      if (!l.contains(p, scale, boundary)) continue;
      if (l.cls == kCONS) return kCONS;
      ggo = true;
    }
    return ggo ? kGGO : kBackground;
  }

  float intensity_at(const Point& p, Label label) const {
    const double dh = (p[0] - shape[0] / 2) / body_h, dw = (p[1] - shape[1] / 2) / body_w;
    if (dh * dh + dw * dw > 1.0) return -1000.0f;
    if (!in_lung(p)) return static_cast<float>(40.0 + 10.0 * parenchyma(p));
    if (label == kCONS) return static_cast<float>(15.0 + 35.0 * lesion_texture(p));
    if (label == kGGO) return static_cast<float>(-550.0 + 70.0 * lesion_texture(p));
    for (const auto& m : mimics) {
      if (!m.contains(p, 1.0, boundary)) continue;
      return m.cls == kCONS ? static_cast<float>(15.0 + 35.0 * lesion_texture(p))
                            : static_cast<float>(-550.0 + 70.0 * lesion_texture(p));
    }
    for (const auto& v : vessels)
      if (v.contains(p)) return static_cast<float>(30.0 + 40.0 * vessel_texture(p));
    return static_cast<float>(-850.0 + 30.0 * parenchyma(p));
  }
};

Point lung_point(const Ellipsoid& lung, std::mt19937_64& rng, double max_radius, double h_lo, double h_hi) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), uh(h_lo, h_hi);
  for (;;) {
    Point q{uh(rng), u(rng), u(rng)};
    if (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] > 1.0) continue;
    return {lung.centre[0] + q[0] * max_radius * lung.radii[0], lung.centre[1] + q[1] * max_radius * lung.radii[1],
            lung.centre[2] + q[2] * max_radius * lung.radii[2]};
  }
}

Blob random_blob(const Phantom& ph, int cls, std::mt19937_64& rng) {
  const double m = std::min({ph.shape[0], ph.shape[1], ph.shape[2]});
  std::uniform_int_distribution<int> side(0, 1);
  const auto& lung = ph.lungs[side(rng)];
  // CONS sits in the dependent (high row index) part of the lung.
  const Point c = cls == kCONS ? lung_point(lung, rng, 0.75, 0.15, 0.8) : lung_point(lung, rng, 0.7, -1.0, 1.0);
  const double lo = cls == kCONS ? 0.06 : 0.09, hi = cls == kCONS ? 0.12 : 0.18;
  std::uniform_real_distribution<double> r(lo * m, hi * m), jitter(0.8, 1.2);
  const double base = r(rng);
  return Blob{{c, {base * jitter(rng), base * jitter(rng), base * jitter(rng)}}, cls};
}

struct Rendered {
  VoxelGrid<float> volume;
  LabelVolume labels;
  LabelVolume lung;
};

Rendered render(const Phantom& ph, const std::array<int, 3>& e, double lesion_scale, bool deform, double noise,
                std::uint64_t noise_seed) {
  Rendered out{VoxelGrid<float>(e), LabelVolume(e), LabelVolume(e)};
  for (int i = 0; i < e[0]; ++i)
    for (int j = 0; j < e[1]; ++j)
      for (int k = 0; k < e[2]; ++k) {
        const Point x{static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)};
        const Point p = deform ? ph.displaced(x) : x;
        const Label lab = ph.label_at(p, lesion_scale);
        const std::size_t idx = out.volume.index(i, j, k);
        out.labels.data()[idx] = lab;
        out.lung.data()[idx] = ph.in_lung(p) ? 1 : 0;
        out.volume.data()[idx] = ph.intensity_at(p, lab) + static_cast<float>(noise * hashed_normal(noise_seed, idx));
      }
  return out;
}

PatientStats count_stats(const Rendered& r, const Phantom& ph) {
  PatientStats s;
  double ggo = 0, cons = 0, lung = 0;
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    lung += r.lung.data()[i];
    ggo += r.labels.data()[i] == kGGO;
    cons += r.labels.data()[i] == kCONS;
  }
  s.lung_voxels = lung;
  s.ggo_fraction = lung > 0 ? ggo / lung : 0.0;
  s.cons_fraction = lung > 0 ? cons / lung : 0.0;
  for (const auto& l : ph.lesions) (l.cls == kGGO ? s.ggo_lesions : s.cons_lesions)++;
  return s;
}

}  // namespace

void SynthConfig::validate() const {
  for (int v : shape)
    if (v < 16) throw std::invalid_argument("synth: every axis needs at least 16 voxels");
  if (progression_factor <= 0) throw std::invalid_argument("synth: progression_factor must be positive");
  if (lesion_count_range[0] < 2 || lesion_count_range[1] < lesion_count_range[0]) {
    throw std::invalid_argument("synth: lesion_count_range must be [lo, hi] with lo >= 2");
  }
  if (ggo_share < 0 || ggo_share > 1) throw std::invalid_argument("synth: ggo_share must lie in [0, 1]");
  if (n_train < 0 || n_val < 0 || n_test < 0 || n_patients() == 0) {
    throw std::invalid_argument("synth: split sizes must be non-negative and not all zero");
  }
  if (deformation < 0 || noise_level < 0) throw std::invalid_argument("synth: negative deformation or noise");
}

void to_json(json& j, const SynthConfig& c) {
  j = json{{"seed", c.seed},
           {"shape", c.shape},
           {"n_train", c.n_train},
           {"n_val", c.n_val},
           {"n_test", c.n_test},
           {"lesion_count_range", c.lesion_count_range},
           {"ggo_share", c.ggo_share},
           {"progression_factor", c.progression_factor},
           {"deformation", c.deformation},
           {"noise_level", c.noise_level},
           {"vessel_count", c.vessel_count},
           {"mimic_count", c.mimic_count},
           {"ggo_fraction_range", c.ggo_fraction_range}};
}

void from_json(const json& j, SynthConfig& c) {
  c = SynthConfig{};
  c.seed = j.value("seed", c.seed);
  c.shape = j.value("shape", c.shape);
  c.n_train = j.value("n_train", c.n_train);
  c.n_val = j.value("n_val", c.n_val);
  c.n_test = j.value("n_test", c.n_test);
  c.lesion_count_range = j.value("lesion_count_range", c.lesion_count_range);
  c.ggo_share = j.value("ggo_share", c.ggo_share);
  c.progression_factor = j.value("progression_factor", c.progression_factor);
  c.deformation = j.value("deformation", c.deformation);
  c.noise_level = j.value("noise_level", c.noise_level);
  c.vessel_count = j.value("vessel_count", c.vessel_count);
  c.mimic_count = j.value("mimic_count", c.mimic_count);
  c.ggo_fraction_range = j.value("ggo_fraction_range", c.ggo_fraction_range);
}

std::uint64_t patient_seed(const SynthConfig& cfg, int index) {
  return splitmix64(cfg.seed * 0x100000001B3ULL + static_cast<std::uint64_t>(index));
}

SynthPatient generate_patient(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(0.95, 1.05);
  const auto& e = cfg.shape;

  Phantom ph;
  ph.shape = {static_cast<double>(e[0]), static_cast<double>(e[1]), static_cast<double>(e[2])};
  ph.body_h = 0.46 * e[0];
  ph.body_w = 0.48 * e[1];
  for (int side = 0; side < 2; ++side) {
    ph.lungs[side] = Ellipsoid{{0.5 * e[0] * jitter(rng), (side == 0 ? 0.29 : 0.71) * e[1], 0.5 * e[2]},
                               {0.34 * e[0] * jitter(rng), 0.17 * e[1] * jitter(rng), 0.43 * e[2] * jitter(rng)}};
  }
  const double m = std::min({e[0], e[1], e[2]});
  ph.parenchyma = Texture(rng, 8, 0.3, 0.9);
  ph.lesion_texture = Texture(rng, 8, 0.4, 1.2);
  ph.boundary = Texture(rng, 6, 3.0 / m, 8.0 / m);
  ph.vessel_texture = Texture(rng, 4, 0.2, 0.6);
  for (auto& w : ph.warp) w = Texture(rng, 3, 2.0 / m, 5.0 / m);
  ph.deformation = cfg.deformation;

  std::uniform_int_distribution<int> side(0, 1);
  std::uniform_real_distribution<double> vr(0.8, 1.6);
  for (int v = 0; v < cfg.vessel_count; ++v) {
    const auto& lung = ph.lungs[side(rng)];
    ph.vessels.push_back({lung_point(lung, rng, 0.9, -1.0, 1.0), lung_point(lung, rng, 0.9, -1.0, 1.0), vr(rng)});
  }
  std::bernoulli_distribution dense_mimic(0.5);
  for (int v = 0; v < cfg.mimic_count; ++v) {
    ph.mimics.push_back(random_blob(ph, dense_mimic(rng) ? kCONS : kGGO, rng));
    for (auto& r : ph.mimics.back().shape.radii) r *= 0.6;
  }

  // Redraw lesion sets until the GGO share of the lung is in range, up to a bound.
  std::uniform_int_distribution<int> count(cfg.lesion_count_range[0], cfg.lesion_count_range[1]);
  std::bernoulli_distribution is_ggo(cfg.ggo_share);
  const std::uint64_t noise_seed = splitmix64(seed ^ 0xA5A5A5A5ULL);
  Rendered first;
  PatientStats stats;
  for (int attempt = 0; attempt < 64; ++attempt) {
    ph.lesions.clear();
    const int n = count(rng);
    for (int l = 0; l < n; ++l) {
      const int cls = l == 0 ? kGGO : l == 1 ? kCONS : (is_ggo(rng) ? kGGO : kCONS);
      ph.lesions.push_back(random_blob(ph, cls, rng));
    }
    first = render(ph, e, 1.0, false, cfg.noise_level, noise_seed);
    stats = count_stats(first, ph);
    if (stats.ggo_fraction >= cfg.ggo_fraction_range[0] && stats.ggo_fraction <= cfg.ggo_fraction_range[1] &&
        stats.cons_fraction > 0) {
      break;
    }
  }
  Rendered second = render(ph, e, cfg.progression_factor, true, cfg.noise_level, noise_seed);

  SynthPatient out;
  out.id = "p" + std::to_string(seed);
  out.seed = seed;
  out.stats = stats;
  out.reference = preprocess::RawStudy{std::move(first.volume), std::move(first.lung), 1, "", {1.0, 1.0, 1.0}};
  out.reference_seg = std::move(first.labels);
  out.target = preprocess::RawStudy{std::move(second.volume), std::move(second.lung), 2, "", {1.0, 1.0, 1.0}};
  out.target_seg = std::move(second.labels);
  out.reference.patient_id = out.target.patient_id = out.id;
  return out;
}

json generate_dataset(const SynthConfig& cfg, const std::filesystem::path& dir) {
  cfg.validate();
  std::filesystem::create_directories(dir);
  json manifest{{"generator", "longiseg-synth"}, {"config", cfg}, {"patients", json::array()}};
  for (int i = 0; i < cfg.n_patients(); ++i) {
    const std::string split = i < cfg.n_train ? "train" : i < cfg.n_train + cfg.n_val ? "val" : "test";
    char id[32];
    std::snprintf(id, sizeof(id), "synth%03d", i);
    auto p = generate_patient(cfg, patient_seed(cfg, i));
    p.id = p.reference.patient_id = p.target.patient_id = id;
    const auto pdir = dir / id;
    std::filesystem::create_directories(pdir);
    io::write_volume(pdir / "ref.nii.gz", p.reference.raw_volume, p.reference.spacing);
    io::write_volume(pdir / "ref_seg.nii.gz", p.reference_seg, p.reference.spacing);
    io::write_volume(pdir / "ref_lung.nii.gz", p.reference.lung_mask, p.reference.spacing);
    io::write_volume(pdir / "target.nii.gz", p.target.raw_volume, p.target.spacing);
    io::write_volume(pdir / "target_seg.nii.gz", p.target_seg, p.target.spacing);
    io::write_volume(pdir / "target_lung.nii.gz", p.target.lung_mask, p.target.spacing);
    manifest["patients"].push_back(
        {{"id", id},
         {"split", split},
         {"seed", p.seed},
         {"reference", {{"volume", std::string(id) + "/ref.nii.gz"},
                        {"seg", std::string(id) + "/ref_seg.nii.gz"},
                        {"lung", std::string(id) + "/ref_lung.nii.gz"}}},
         {"target", {{"volume", std::string(id) + "/target.nii.gz"},
                     {"seg", std::string(id) + "/target_seg.nii.gz"},
                     {"lung", std::string(id) + "/target_lung.nii.gz"}}},
         {"stats", {{"lung_voxels", p.stats.lung_voxels},
                    {"ggo_fraction", p.stats.ggo_fraction},
                    {"cons_fraction", p.stats.cons_fraction},
                    {"ggo_lesions", p.stats.ggo_lesions},
                    {"cons_lesions", p.stats.cons_lesions}}}});
  }
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace longiseg::synthdata
