#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "longiseg/core.hpp"
#include "longiseg/metrics.hpp"
#include "longiseg/preprocess.hpp"
#include "longiseg/train.hpp"

namespace httplib {
class Server;
}

namespace longiseg::service {

/// A brush stroke on one slice. Points are (row, col) in slice coordinates.
struct Stroke {
  Plane plane = Plane::kAxial;
  int slice_index = 0;
  int cls = kGGO;
  int polarity = 1;  // +1 foreground correction, -1 background correction
  std::vector<std::array<int, 2>> polyline;
  int brush_radius = 0;
};

void to_json(nlohmann::json& j, const Stroke& s);
void from_json(const nlohmann::json& j, Stroke& s);

/// Rejected stroke; `index` is its position in the submitted list.
class StrokeError : public std::invalid_argument {
 public:
  StrokeError(int index, const std::string& what)
      : std::invalid_argument("stroke " + std::to_string(index) + ": " + what), index_(index) {}
  int index() const { return index_; }

 private:
  int index_;
};

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Submission against a round that is no longer the latest.
class Conflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Volume voxels covered by one stroke: digital polyline, then a disc of brush_radius,
/// clipped to the slice. Throws StrokeError(index) on invalid or out-of-bounds input.
std::vector<std::array<int, 3>> stroke_voxels(const Stroke& s, const std::array<int, 3>& extents, int index = 0);

/// Rasterises a submission into one edit mask. Later strokes overwrite earlier ones.
EditMask<3> rasterize_strokes(const std::vector<Stroke>& strokes, const std::array<int, 3>& extents);

/// {"shape":[h,w,s],"rle":[value,count,...]} over the row-major (h, w, s) voxel order.
nlohmann::json encode_rle(const LabelVolume& v);
LabelVolume decode_rle(const nlohmann::json& j);

struct RefinementRound {
  int index = 1;  // 1 is the initial prediction
  ProbMap<3> probs;
  LabelVolume labels;
  EditMask<3> submitted;    // strokes of this round; zero for round 1
  EditMask<3> accumulated;  // accumulate_edits over rounds 1..index
  std::vector<Stroke> strokes;
  std::optional<std::array<metrics::ClassScores, kForegroundClasses>> scores;  // when ground truth is known
  std::string created;
};

struct Session {
  std::string id;
  train::PatientVolumes volumes;  // target_gt is empty when no ground truth was supplied
  std::vector<RefinementRound> rounds;
  std::string model_ref;
  std::string created;
  std::string updated;

  bool has_ground_truth() const { return !volumes.target_gt.empty(); }
  nlohmann::json summary() const;
};

struct ServiceConfig {
  std::filesystem::path data_dir = "sessions";
  std::string model_ref;     // recorded in every session
  int port = 8080;
  int max_strokes = 256;     // per submission
  int batch_size = 16;

  void validate() const;
};

void to_json(nlohmann::json& j, const ServiceConfig& c);
void from_json(const nlohmann::json& j, ServiceConfig& c);

/// Sessions kept in memory and mirrored to <data_dir>/<id>/. Rounds of one session are
/// serialised; different sessions run concurrently. The segmenter is shared read-only.
class SessionStore {
 public:
  SessionStore(ServiceConfig cfg, std::shared_ptr<const train::Segmenter> segmenter);

  /// Preprocessed inputs; all grids must share one shape.
  std::string create(train::PatientVolumes volumes);
  /// Raw studies with lung masks, preprocessed on the server.
  std::string create_from_raw(const preprocess::RawStudy& reference, const preprocess::RawStudy& target,
                              const LabelVolume& reference_seg, const std::optional<LabelVolume>& target_gt,
                              const preprocess::RegistrationBackend& backend,
                              const std::array<int, 3>& extents = preprocess::kModelExtents);

  /// Round 1. Throws Conflict if the session already has rounds.
  const RefinementRound& run_initial(const std::string& id);
  /// Appends round base_round + 1. Throws Conflict unless base_round is the latest round.
  const RefinementRound& submit(const std::string& id, const std::vector<Stroke>& strokes, int base_round);

  /// Copies, so callers never race with a running round.
  Session get(const std::string& id) const;
  RefinementRound get_round(const std::string& id, int index) const;
  std::vector<nlohmann::json> list() const;
  void remove(const std::string& id);

  const ServiceConfig& config() const { return cfg_; }

 private:
  struct Entry {
    std::mutex mutex;
    Session session;
  };
  std::shared_ptr<Entry> find(const std::string& id) const;
  std::string new_id();
  void persist_inputs(const Session& s) const;
  void persist_round(const Session& s, const RefinementRound& r) const;
  void persist_manifest(const Session& s) const;
  void load_all();

  ServiceConfig cfg_;
  std::shared_ptr<const train::Segmenter> segmenter_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t id_state_;
};

/// Recomputes a persisted session from its inputs and stroke log. Returns the rounds'
/// label volumes in order.
std::vector<LabelVolume> replay_session(const std::filesystem::path& session_dir, const train::Segmenter& segmenter,
                                        int batch_size = 16);

/// Routes:
///   GET    /health
///   GET    /sessions
///   POST   /sessions                          multipart: reference, reference_seg, target, [target_gt],
///                                             [reference_lung, target_lung, backend] for raw studies
///   GET    /sessions/{id}
///   DELETE /sessions/{id}
///   POST   /sessions/{id}/initial
///   POST   /sessions/{id}/rounds              {"base_round":T,"strokes":[...]}
///   GET    /sessions/{id}/rounds/{T}
///   GET    /sessions/{id}/rounds/{T}/mask     ?format=rle (default) | raw
///   GET    /sessions/{id}/slices/{plane}/{k}  ?volume=target|reference; 8-bit grey, row-major
/// Errors are {"error": message} with 400, 404 or 409.
void register_routes(httplib::Server& server, SessionStore& store);

}  // namespace longiseg::service
