#include "longiseg/service.hpp"

#include <ctime>
#include <random>
#include <set>

#include "httplib.h"
#include "longiseg/editsim.hpp"
#include "longiseg/volume_io.hpp"

namespace longiseg::service {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Strokes

void to_json(json& j, const Stroke& s) {
  json pts = json::array();
  for (const auto& p : s.polyline) pts.push_back({p[0], p[1]});
  j = json{{"plane", std::string(plane_name(s.plane))},
           {"slice", s.slice_index},
           {"cls", s.cls},
           {"polarity", s.polarity},
           {"points", pts},
           {"brush_radius", s.brush_radius}};
}

void from_json(const json& j, Stroke& s) {
  s.plane = parse_plane(j.at("plane").get<std::string>());
  s.slice_index = j.at("slice").get<int>();
  s.cls = j.at("cls").get<int>();
  s.polarity = j.at("polarity").get<int>();
  s.brush_radius = j.value("brush_radius", 0);
  s.polyline.clear();
  for (const auto& p : j.at("points")) {
    if (!p.is_array() || p.size() != 2) throw std::invalid_argument("stroke points must be [row, col] pairs");
    s.polyline.push_back({p[0].get<int>(), p[1].get<int>()});
  }
}

std::vector<std::array<int, 3>> stroke_voxels(const Stroke& s, const std::array<int, 3>& extents, int index) {
  if (s.cls != kGGO && s.cls != kCONS) throw StrokeError(index, "class must be 1 (GGO) or 2 (CONS)");
  if (s.polarity != 1 && s.polarity != -1) throw StrokeError(index, "polarity must be +1 or -1");
  if (s.brush_radius < 0) throw StrokeError(index, "brush_radius must be >= 0");
  if (s.polyline.empty()) throw StrokeError(index, "empty polyline");
  const int n = extents[normal_axis(s.plane)];
  if (s.slice_index < 0 || s.slice_index >= n) {
    throw StrokeError(index, "slice " + std::to_string(s.slice_index) + " outside [0, " + std::to_string(n) + ")");
  }
  const auto se = slice_extents(extents, s.plane);
  for (const auto& p : s.polyline) {
    if (p[0] < 0 || p[1] < 0 || p[0] >= se[0] || p[1] >= se[1]) {
      throw StrokeError(index, "point (" + std::to_string(p[0]) + ", " + std::to_string(p[1]) +
                                   ") outside the " + extents_string(se) + " slice");
    }
  }

  std::vector<char> hit(static_cast<std::size_t>(se[0]) * se[1], 0);
  const int r2 = s.brush_radius * s.brush_radius;
  auto stamp = [&](int row, int col) {
    for (int dr = -s.brush_radius; dr <= s.brush_radius; ++dr) {
      for (int dc = -s.brush_radius; dc <= s.brush_radius; ++dc) {
        if (dr * dr + dc * dc > r2) continue;
        const int r = row + dr, c = col + dc;
        if (r < 0 || c < 0 || r >= se[0] || c >= se[1]) continue;
        hit[static_cast<std::size_t>(r) * se[1] + c] = 1;
      }
    }
  };
  stamp(s.polyline[0][0], s.polyline[0][1]);
  for (std::size_t i = 1; i < s.polyline.size(); ++i) {
    const auto& a = s.polyline[i - 1];
    const auto& b = s.polyline[i];
    for (const auto& p : editsim::digital_line({a[0], a[1]}, {b[0], b[1]})) stamp(p.row, p.col);
  }

  std::vector<std::array<int, 3>> out;
  for (int r = 0; r < se[0]; ++r)
    for (int c = 0; c < se[1]; ++c)
      if (hit[static_cast<std::size_t>(r) * se[1] + c]) out.push_back(slice_to_volume(s.plane, s.slice_index, r, c));
  return out;
}

EditMask<3> rasterize_strokes(const std::vector<Stroke>& strokes, const std::array<int, 3>& extents) {
  EditMask<3> mask(extents);
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    const auto& s = strokes[i];
    auto& ch = mask.for_class(s.cls == kCONS ? kCONS : kGGO);
    for (const auto& v : stroke_voxels(s, extents, static_cast<int>(i))) {
      ch(v[0], v[1], v[2]) = static_cast<std::int8_t>(s.polarity);
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------
// RLE

json encode_rle(const LabelVolume& v) {
  json runs = json::array();
  const auto vals = v.values();
  std::size_t i = 0;
  while (i < vals.size()) {
    std::size_t j = i;
    while (j < vals.size() && vals[j] == vals[i]) ++j;
    runs.push_back(vals[i]);
    runs.push_back(j - i);
    i = j;
  }
  const auto e = v.extents();
  return json{{"shape", {e[0], e[1], e[2]}}, {"rle", runs}};
}

LabelVolume decode_rle(const json& j) {
  const auto shape = j.at("shape").get<std::array<int, 3>>();
  LabelVolume out(shape);
  const auto& runs = j.at("rle");
  if (runs.size() % 2 != 0) throw std::invalid_argument("rle: odd number of entries");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < runs.size(); i += 2) {
    const auto value = runs[i].get<int>();
    const auto count = runs[i + 1].get<std::size_t>();
    if (value < 0 || value > 255) throw std::invalid_argument("rle: value out of range");
    if (pos + count > out.size()) throw std::invalid_argument("rle: runs exceed the shape");
    std::fill_n(out.values().begin() + static_cast<std::ptrdiff_t>(pos), count, static_cast<std::uint8_t>(value));
    pos += count;
  }
  if (pos != out.size()) throw std::invalid_argument("rle: runs do not cover the shape");
  return out;
}

// ---------------------------------------------------------------------------
// Config

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) throw std::invalid_argument("service.port: must be in [0, 65535]");
  if (max_strokes < 1) throw std::invalid_argument("service.max_strokes: must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("service.batch_size: must be >= 1");
  if (data_dir.empty()) throw std::invalid_argument("service.data_dir: must not be empty");
}

void to_json(json& j, const ServiceConfig& c) {
  j = json{{"data_dir", c.data_dir.string()},
           {"model_ref", c.model_ref},
           {"port", c.port},
           {"max_strokes", c.max_strokes},
           {"batch_size", c.batch_size}};
}

void from_json(const json& j, ServiceConfig& c) {
  static const std::set<std::string> known{"data_dir", "model_ref", "port", "max_strokes", "batch_size"};
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw std::invalid_argument("service: unknown field '" + k + "'");
  }
  ServiceConfig d;
  c.data_dir = j.value("data_dir", d.data_dir.string());
  c.model_ref = j.value("model_ref", d.model_ref);
  c.port = j.value("port", d.port);
  c.max_strokes = j.value("max_strokes", d.max_strokes);
  c.batch_size = j.value("batch_size", d.batch_size);
}

// ---------------------------------------------------------------------------
// Sessions

namespace {

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json scores_json(const std::array<metrics::ClassScores, kForegroundClasses>& s) {
  json out = json::object();
  const char* names[] = {"GGO", "CONS"};
  for (int c = 0; c < kForegroundClasses; ++c) {
    json m{{"dsc", s[c].dsc}, {"ppv", s[c].ppv}, {"tpr", s[c].tpr}};
    m["vd"] = s[c].vd_defined ? json(s[c].vd) : json(nullptr);
    out[names[c]] = m;
  }
  return out;
}

std::array<metrics::ClassScores, kForegroundClasses> scores_from_json(const json& j) {
  std::array<metrics::ClassScores, kForegroundClasses> out{};
  const char* names[] = {"GGO", "CONS"};
  for (int c = 0; c < kForegroundClasses; ++c) {
    const auto& m = j.at(names[c]);
    out[c].dsc = m.at("dsc").get<double>();
    out[c].ppv = m.at("ppv").get<double>();
    out[c].tpr = m.at("tpr").get<double>();
    out[c].vd_defined = !m.at("vd").is_null();
    out[c].vd = out[c].vd_defined ? m.at("vd").get<double>() : 0.0;
  }
  return out;
}

json round_json(const RefinementRound& r) {
  json j{{"round", r.index}, {"created", r.created}, {"strokes", r.strokes}};
  std::array<long, kForegroundClasses> edited{};
  for (int c = 0; c < kForegroundClasses; ++c) {
    for (auto v : r.accumulated.channels[c].values()) edited[c] += v != 0;
  }
  j["accumulated_edit_voxels"] = {{"GGO", edited[0]}, {"CONS", edited[1]}};
  j["scores"] = r.scores ? scores_json(*r.scores) : json(nullptr);
  return j;
}

fs::path round_file(const fs::path& dir, int index, const std::string& what) {
  return dir / ("round_" + std::to_string(index) + "_" + what + ".nii.gz");
}

void write_json_atomic(const fs::path& path, const json& j) {
  const auto tmp = path.string() + ".tmp";
  io::write_file(tmp, j.dump(2) + "\n");
  fs::rename(tmp, path);
}

train::PatientVolumes load_inputs(const fs::path& dir, const std::string& id, bool has_gt) {
  train::PatientVolumes v;
  v.patient_id = id;
  v.reference = io::read_float_volume(dir / "reference.nii.gz").data;
  v.reference_seg = io::read_label_volume(dir / "reference_seg.nii.gz");
  v.target = io::read_float_volume(dir / "target.nii.gz").data;
  if (has_gt) v.target_gt = io::read_label_volume(dir / "target_gt.nii.gz");
  return v;
}

void check_inputs(const train::PatientVolumes& v) {
  if (v.target.empty()) throw ShapeError("session: empty target volume");
  require_same_extents(v.target, v.reference, "session reference vs target");
  require_same_extents(v.target, v.reference_seg, "session reference_seg vs target");
  if (!v.target_gt.empty()) require_same_extents(v.target, v.target_gt, "session target_gt vs target");
  for (auto x : v.reference_seg.values())
    if (x > kCONS) throw std::invalid_argument("session: reference_seg has labels outside {0, 1, 2}");
}

RefinementRound make_round(const train::Segmenter& seg, const train::PatientVolumes& v, const RefinementRound* prev,
                           const std::vector<Stroke>& strokes) {
  RefinementRound r;
  r.index = prev ? prev->index + 1 : 1;
  r.strokes = strokes;
  r.submitted = rasterize_strokes(strokes, v.target.extents());
  train::SessionState state;
  if (prev) {
    r.accumulated = accumulate_edits(prev->accumulated, r.submitted);
    state.previous_probs = prev->probs;
    state.previous_labels = prev->labels;
    state.edits = r.accumulated;
  } else {
    r.accumulated = EditMask<3>(v.target.extents());
  }
  auto pred = seg.predict(v, state);
  r.probs = std::move(pred.probs);
  r.labels = std::move(pred.labels);
  if (!v.target_gt.empty()) {
    std::array<metrics::ClassScores, kForegroundClasses> s{};
    for (int c = 1; c <= kForegroundClasses; ++c) s[c - 1] = metrics::score(r.labels, v.target_gt, c);
    r.scores = s;
  }
  r.created = now_iso();
  return r;
}

}  // namespace

json Session::summary() const {
  const auto e = volumes.target.extents();
  json rs = json::array();
  for (const auto& r : rounds) rs.push_back(round_json(r));
  return json{{"id", id},
              {"model_ref", model_ref},
              {"created", created},
              {"updated", updated},
              {"shape", {e[0], e[1], e[2]}},
              {"has_ground_truth", has_ground_truth()},
              {"rounds", rs}};
}

SessionStore::SessionStore(ServiceConfig cfg, std::shared_ptr<const train::Segmenter> segmenter)
    : cfg_(std::move(cfg)), segmenter_(std::move(segmenter)), id_state_(std::random_device{}()) {
  cfg_.validate();
  if (!segmenter_) throw std::invalid_argument("SessionStore: no segmenter");
  fs::create_directories(cfg_.data_dir);
  load_all();
}

std::string SessionStore::new_id() {
  // splitmix64 over a random start; caller holds the map lock
  for (;;) {
    std::uint64_t z = (id_state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(z));
    std::string id(buf, 12);
    if (!sessions_.contains(id) && !fs::exists(cfg_.data_dir / id)) return id;
  }
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("no session '" + id + "'");
  return it->second;
}

std::string SessionStore::create(train::PatientVolumes volumes) {
  check_inputs(volumes);
  auto entry = std::make_shared<Entry>();
  std::unique_lock lock(map_mutex_);
  const auto id = new_id();
  auto& s = entry->session;
  s.id = id;
  s.volumes = std::move(volumes);
  s.volumes.patient_id = id;
  s.model_ref = cfg_.model_ref;
  s.created = s.updated = now_iso();
  persist_inputs(s);
  persist_manifest(s);
  sessions_.emplace(id, entry);
  return id;
}

std::string SessionStore::create_from_raw(const preprocess::RawStudy& reference, const preprocess::RawStudy& target,
                                          const LabelVolume& reference_seg,
                                          const std::optional<LabelVolume>& target_gt,
                                          const preprocess::RegistrationBackend& backend,
                                          const std::array<int, 3>& extents) {
  auto pp = preprocess::preprocess_pair(reference, target, reference_seg, backend, target_gt, extents);
  train::PatientVolumes v;
  v.reference = std::move(pp.reference.data);
  v.reference_seg = std::move(pp.reference_seg);
  v.target = std::move(pp.target.data);
  if (pp.target_seg) v.target_gt = std::move(*pp.target_seg);
  return create(std::move(v));
}

const RefinementRound& SessionStore::run_initial(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  auto& s = entry->session;
  if (!s.rounds.empty()) throw Conflict("session " + id + " already has an initial round");
  s.rounds.push_back(make_round(*segmenter_, s.volumes, nullptr, {}));
  s.updated = s.rounds.back().created;
  persist_round(s, s.rounds.back());
  persist_manifest(s);
  return s.rounds.back();
}

const RefinementRound& SessionStore::submit(const std::string& id, const std::vector<Stroke>& strokes,
                                            int base_round) {
  if (static_cast<int>(strokes.size()) > cfg_.max_strokes) {
    throw StrokeError(cfg_.max_strokes, "more than " + std::to_string(cfg_.max_strokes) + " strokes in one submission");
  }
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  auto& s = entry->session;
  if (s.rounds.empty()) throw Conflict("session " + id + " has no initial round yet");
  const int latest = s.rounds.back().index;
  if (base_round != latest) {
    throw Conflict("session " + id + " is at round " + std::to_string(latest) + ", submission was based on round " +
                   std::to_string(base_round));
  }
  // Validate before any prediction work.
  for (std::size_t i = 0; i < strokes.size(); ++i) stroke_voxels(strokes[i], s.volumes.target.extents(), static_cast<int>(i));
  s.rounds.push_back(make_round(*segmenter_, s.volumes, &s.rounds.back(), strokes));
  s.updated = s.rounds.back().created;
  persist_round(s, s.rounds.back());
  persist_manifest(s);
  return s.rounds.back();
}

Session SessionStore::get(const std::string& id) const {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  return entry->session;
}

RefinementRound SessionStore::get_round(const std::string& id, int index) const {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  const auto& rounds = entry->session.rounds;
  if (index < 1 || index > static_cast<int>(rounds.size())) {
    throw NotFound("session " + id + " has no round " + std::to_string(index));
  }
  return rounds[index - 1];
}

std::vector<json> SessionStore::list() const {
  std::vector<std::shared_ptr<Entry>> entries;
  {
    std::shared_lock lock(map_mutex_);
    for (const auto& [id, e] : sessions_) entries.push_back(e);
  }
  std::vector<json> out;
  for (const auto& e : entries) {
    std::lock_guard lock(e->mutex);
    const auto& s = e->session;
    out.push_back({{"id", s.id},
                   {"rounds", s.rounds.size()},
                   {"created", s.created},
                   {"updated", s.updated},
                   {"has_ground_truth", s.has_ground_truth()}});
  }
  return out;
}

void SessionStore::remove(const std::string& id) {
  std::shared_ptr<Entry> entry;
  {
    std::unique_lock lock(map_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("no session '" + id + "'");
    entry = it->second;
    sessions_.erase(it);
  }
  std::lock_guard lock(entry->mutex);
  fs::remove_all(cfg_.data_dir / id);
}

void SessionStore::persist_inputs(const Session& s) const {
  const auto dir = cfg_.data_dir / s.id;
  fs::create_directories(dir);
  io::write_volume(dir / "reference.nii.gz", s.volumes.reference);
  io::write_volume(dir / "reference_seg.nii.gz", s.volumes.reference_seg);
  io::write_volume(dir / "target.nii.gz", s.volumes.target);
  if (s.has_ground_truth()) io::write_volume(dir / "target_gt.nii.gz", s.volumes.target_gt);
}

void SessionStore::persist_round(const Session& s, const RefinementRound& r) const {
  const auto dir = cfg_.data_dir / s.id;
  io::write_volume(round_file(dir, r.index, "labels"), r.labels);
  for (int c = 0; c < kNumClasses; ++c) {
    io::write_volume(round_file(dir, r.index, "prob" + std::to_string(c)), r.probs.probs[c]);
  }
  for (int c = 0; c < kForegroundClasses; ++c) {
    io::write_volume(round_file(dir, r.index, "edits" + std::to_string(c + 1)), r.accumulated.channels[c]);
  }
}

void SessionStore::persist_manifest(const Session& s) const {
  write_json_atomic(cfg_.data_dir / s.id / "session.json", s.summary());
}

void SessionStore::load_all() {
  for (const auto& d : fs::directory_iterator(cfg_.data_dir)) {
    const auto manifest_path = d.path() / "session.json";
    if (!d.is_directory() || !fs::exists(manifest_path)) continue;
    const auto j = json::parse(io::read_file(manifest_path));
    auto entry = std::make_shared<Entry>();
    auto& s = entry->session;
    s.id = j.at("id").get<std::string>();
    s.model_ref = j.value("model_ref", "");
    s.created = j.value("created", "");
    s.updated = j.value("updated", "");
    s.volumes = load_inputs(d.path(), s.id, j.value("has_ground_truth", false));
    for (const auto& rj : j.at("rounds")) {
      RefinementRound r;
      r.index = rj.at("round").get<int>();
      r.created = rj.value("created", "");
      r.strokes = rj.at("strokes").get<std::vector<Stroke>>();
      r.labels = io::read_label_volume(round_file(d.path(), r.index, "labels"));
      for (int c = 0; c < kNumClasses; ++c) {
        r.probs.probs[c] = io::read_float_volume(round_file(d.path(), r.index, "prob" + std::to_string(c))).data;
      }
      for (int c = 0; c < kForegroundClasses; ++c) {
        r.accumulated.channels[c] = io::read_int8_volume(round_file(d.path(), r.index, "edits" + std::to_string(c + 1)));
      }
      r.submitted = rasterize_strokes(r.strokes, s.volumes.target.extents());
      if (!rj.at("scores").is_null()) r.scores = scores_from_json(rj.at("scores"));
      s.rounds.push_back(std::move(r));
    }
    sessions_.emplace(s.id, entry);
  }
}

std::vector<LabelVolume> replay_session(const fs::path& session_dir, const train::Segmenter& segmenter, int) {
  const auto j = json::parse(io::read_file(session_dir / "session.json"));
  const auto volumes = load_inputs(session_dir, j.at("id").get<std::string>(), j.value("has_ground_truth", false));
  std::vector<LabelVolume> out;
  std::optional<RefinementRound> prev;
  for (const auto& rj : j.at("rounds")) {
    const auto strokes = rj.at("strokes").get<std::vector<Stroke>>();
    auto r = make_round(segmenter, volumes, prev ? &*prev : nullptr, strokes);
    out.push_back(r.labels);
    prev = std::move(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& what) {
  send_json(res, status, json{{"error", what}});
}

// Maps exceptions to status codes.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const NotFound& e) {
    send_error(res, 404, e.what());
  } catch (const Conflict& e) {
    send_error(res, 409, e.what());
  } catch (const StrokeError& e) {
    json body{{"error", e.what()}, {"stroke_index", e.index()}};
    send_json(res, 400, body);
  } catch (const json::exception& e) {
    send_error(res, 400, std::string("malformed JSON: ") + e.what());
  } catch (const std::invalid_argument& e) {
    send_error(res, 400, e.what());
  } catch (const io::IoError& e) {
    send_error(res, 400, e.what());
  } catch (const preprocess::StageError& e) {
    send_error(res, 400, e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    throw std::invalid_argument(what + " must be an integer, got '" + s + "'");
  }
}

}  // namespace

void register_routes(httplib::Server& server, SessionStore& store) {
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, json{{"status", "ok"}});
  });

  server.Get("/sessions", [&store](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, json{{"sessions", store.list()}}); });
  });

  server.Post("/sessions", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto file = [&](const char* name) -> std::string {
        if (!req.has_file(name)) throw std::invalid_argument(std::string("missing multipart field '") + name + "'");
        return req.get_file_value(name).content;
      };
      std::optional<LabelVolume> gt;
      if (req.has_file("target_gt")) gt = io::decode_label_volume(file("target_gt"));
      std::string id;
      if (req.has_file("reference_lung") || req.has_file("target_lung")) {
        preprocess::RawStudy ref, tgt;
        ref.raw_volume = io::decode_float_volume(file("reference")).data;
        ref.lung_mask = io::decode_label_volume(file("reference_lung"));
        ref.timepoint = 1;
        tgt.raw_volume = io::decode_float_volume(file("target")).data;
        tgt.lung_mask = io::decode_label_volume(file("target_lung"));
        tgt.timepoint = 2;
        const auto backend_spec = req.has_file("backend") ? file("backend") : std::string("affine");
        if (backend_spec.rfind("external:", 0) == 0) {
          throw std::invalid_argument("external registration backends are not accepted over HTTP");
        }
        const auto backend = preprocess::make_backend(backend_spec);
        id = store.create_from_raw(ref, tgt, io::decode_label_volume(file("reference_seg")), gt, *backend);
      } else {
        train::PatientVolumes v;
        v.reference = io::decode_float_volume(file("reference")).data;
        v.reference_seg = io::decode_label_volume(file("reference_seg"));
        v.target = io::decode_float_volume(file("target")).data;
        if (gt) v.target_gt = std::move(*gt);
        id = store.create(std::move(v));
      }
      send_json(res, 201, store.get(id).summary());
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+))", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, store.get(req.matches[1]).summary()); });
  });

  server.Delete(R"(/sessions/([0-9a-f]+))", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      store.remove(req.matches[1]);
      send_json(res, 200, json{{"deleted", req.matches[1].str()}});
    });
  });

  server.Post(R"(/sessions/([0-9a-f]+)/initial)", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 201, round_json(store.run_initial(req.matches[1]))); });
  });

  server.Post(R"(/sessions/([0-9a-f]+)/rounds)", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = json::parse(req.body);
      const int base = body.at("base_round").get<int>();
      std::vector<Stroke> strokes;
      const auto& arr = body.at("strokes");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        try {
          strokes.push_back(arr[i].get<Stroke>());
        } catch (const std::exception& e) {
          throw StrokeError(static_cast<int>(i), e.what());
        }
      }
      send_json(res, 201, round_json(store.submit(req.matches[1], strokes, base)));
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/rounds/(\d+))", [&store](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto r = store.get_round(req.matches[1], parse_int(req.matches[2], "round"));
      send_json(res, 200, round_json(r));
    });
  });

  server.Get(R"(/sessions/([0-9a-f]+)/rounds/(\d+)/mask)",
             [&store](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 const auto r = store.get_round(req.matches[1], parse_int(req.matches[2], "round"));
                 const auto format = req.has_param("format") ? req.get_param_value("format") : "rle";
                 if (format == "rle") {
                   send_json(res, 200, encode_rle(r.labels));
                 } else if (format == "raw") {
                   const auto e = r.labels.extents();
                   res.set_header("X-Shape", std::to_string(e[0]) + "," + std::to_string(e[1]) + "," +
                                                 std::to_string(e[2]));
                   res.set_content(io::encode_raw(r.labels), "application/octet-stream");
                 } else {
                   throw std::invalid_argument("format must be 'rle' or 'raw'");
                 }
               });
             });

  server.Get(R"(/sessions/([0-9a-f]+)/slices/(axial|coronal|sagittal)/(\d+))",
             [&store](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 const auto s = store.get(req.matches[1]);
                 const auto which = req.has_param("volume") ? req.get_param_value("volume") : "target";
                 const VoxelGrid<float>* vol = nullptr;
                 if (which == "target") vol = &s.volumes.target;
                 if (which == "reference") vol = &s.volumes.reference;
                 if (!vol) throw std::invalid_argument("volume must be 'target' or 'reference'");
                 const Plane plane = parse_plane(req.matches[2].str());
                 const int index = parse_int(req.matches[3], "slice");
                 const int n = vol->extent(normal_axis(plane));
                 if (index < 0 || index >= n) throw NotFound("slice " + std::to_string(index) + " out of range");
                 const auto img = extract_slice(*vol, plane, index);
                 std::string bytes(img.size(), '\0');
                 for (std::size_t i = 0; i < img.size(); ++i) {
                   const float v = std::clamp(img.values()[i], 0.0f, 1.0f);
                   bytes[i] = static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
                 }
                 res.set_header("X-Shape", std::to_string(img.extent(0)) + "," + std::to_string(img.extent(1)));
                 res.set_content(bytes, "application/octet-stream");
               });
             });
}

}  // namespace longiseg::service
