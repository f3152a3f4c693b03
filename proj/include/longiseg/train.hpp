#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "longiseg/core.hpp"
#include "longiseg/editsim.hpp"
#include "longiseg/metrics.hpp"
#include "longiseg/model.hpp"

namespace longiseg::train {

/// Which input channels a model sees. Hidden channels are zeroed; the backbone always
/// takes eight.
enum class InputScheme {
  kProposed,             // everything
  kStaticEdit,           // no reference image or reference segmentation
  kLongEditRefSeg,       // no previous target prediction
  kBaselineStatic,       // target image only
  kBaselineLong,         // target and reference images
  kBaselineLongRefSeg,   // target, reference image and reference segmentation
};

std::string_view scheme_name(InputScheme s);
InputScheme parse_scheme(std::string_view name);
std::array<bool, kInputChannels> scheme_channels(InputScheme s);
/// Schemes that consume edit masks, and so train with refinement passes.
bool scheme_is_interactive(InputScheme s);
void apply_scheme(InputStack& stack, InputScheme s);

/// One preprocessed, aligned patient at model resolution.
struct PatientVolumes {
  std::string patient_id;
  VoxelGrid<float> reference;
  LabelVolume reference_seg;
  VoxelGrid<float> target;
  LabelVolume target_gt;
};

/// Manifest layout: {"patients":[{"id","split","reference":{"volume","lung","seg"},
/// "target":{"volume","lung","seg"}}]}; paths relative to the manifest's directory.
struct DatasetSpec {
  std::filesystem::path manifest;
  std::string registration = "affine";
  std::array<int, 3> extents{64, 64, 64};
};

/// Loads and preprocesses every patient of `split`. Throws if a patient id appears in
/// more than one split.
std::vector<PatientVolumes> load_split(const DatasetSpec& spec, const std::string& split);

struct Sample {
  std::string patient_id;
  Plane plane = Plane::kAxial;
  int slice_index = 0;
  Image<float> ref_slice;
  LabelImage ref_seg;
  Image<float> target_slice;
  LabelImage gt;
};

Sample make_sample(const PatientVolumes& p, Plane plane, int index);

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 16;
  int epochs = 20;
  double refine_probability = 0.5;
  std::uint64_t seed = 0;
  InputScheme scheme = InputScheme::kProposed;
  int edit_cap = editsim::kDefaultEditCap;
  int slices_per_epoch = 0;    // 0: every slice of every plane
  int validation_rounds = 1;   // refinement rounds behind the validation Dice
  std::filesystem::path checkpoint;  // best model; empty: do not write
  std::filesystem::path log_csv;     // empty: do not write

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  int epoch = 0;
  std::string split;
  double loss = 0;
  double dice_ggo = 0;
  double dice_cons = 0;
};

struct TrainResult {
  int best_epoch = -1;
  double best_metric = -1;
  std::vector<EpochRecord> history;
};

/// Input-2 stacks for a batch: first-pass prediction (evaluation mode), scripted edits
/// against the ground truth, then reassembly with the previous prediction and the edits.
struct RefinementBatch {
  std::vector<InputStack> stacks;
  std::vector<ProbMap<2>> first_probs;
  std::vector<LabelImage> first_labels;
  std::vector<EditMask<2>> edits;
};
RefinementBatch build_refinement_batch(const model::DenseNet<float>& net, std::span<const Sample> samples,
                                       InputScheme scheme, int edit_cap);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Training loop. Each batch: draw Z ~ U[0, 1); with probability refine_probability (and an
/// interactive scheme) the loss is taken on Input-2 stacks from build_refinement_batch,
/// otherwise on Input-1 stacks. Keeps the weights with the best mean foreground validation Dice.
/// The "val" log row reports the fused-volume MSE of the last validation round as its loss.
TrainResult train(model::DenseNet<float>& net, std::span<const PatientVolumes> train_set,
                  std::span<const PatientVolumes> val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Previous-round state fed to the next prediction. Empty for round 0.
struct SessionState {
  std::optional<ProbMap<3>> previous_probs;
  std::optional<LabelVolume> previous_labels;
  std::optional<EditMask<3>> edits;  // accumulated
  bool empty() const { return !previous_probs && !edits; }
};

/// Per-plane forward over every slice, restacked and fused.
FusedPrediction predict_volume(const model::DenseNet<float>& net, const VoxelGrid<float>& reference,
                               const LabelVolume& reference_seg, const VoxelGrid<float>& target,
                               const SessionState& state, InputScheme scheme = InputScheme::kProposed,
                               int batch_size = 16);

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual FusedPrediction predict(const PatientVolumes& patient, const SessionState& state) const = 0;
};

class ModelSegmenter final : public Segmenter {
 public:
  ModelSegmenter(const model::DenseNet<float>& net, InputScheme scheme, int batch_size = 16)
      : net_(net), scheme_(scheme), batch_size_(batch_size) {}
  FusedPrediction predict(const PatientVolumes& patient, const SessionState& state) const override;

 private:
  const model::DenseNet<float>& net_;
  InputScheme scheme_;
  int batch_size_;
};

/// Returns the ground truth; for protocol tests.
class OracleSegmenter final : public Segmenter {
 public:
  FusedPrediction predict(const PatientVolumes& patient, const SessionState& state) const override;
};

/// Scripted edits for every slice of every plane, written into one volume. Under- and
/// over-segmentation voxels of a class are disjoint, so planes never disagree.
struct VolumeEdits {
  EditMask<3> mask;
  int scribbles = 0;
};
VolumeEdits simulate_volume_edits(const LabelVolume& pred, const LabelVolume& gt, int cap);

struct MetricSummary {
  double mean = 0;
  double sem = 0;  // standard error across patients
  int n = 0;
};

struct ClassReport {
  MetricSummary dsc, ppv, tpr, vd;  // vd over patients where it is defined
};

struct PatientRound {
  std::string patient_id;
  std::array<metrics::ClassScores, kForegroundClasses> scores;
  int scribbles = 0;
};

struct RoundReport {
  int round = 0;
  std::array<ClassReport, kForegroundClasses> classes;  // GGO, CONS
  int edit_count = 0;  // scribbles simulated for this round, summed over patients
  std::vector<PatientRound> patients;

  double mean_foreground_dice() const { return 0.5 * (classes[0].dsc.mean + classes[1].dsc.mean); }
};

/// Sees every prediction evaluate_rounds makes.
using RoundObserver = std::function<void(int round, const PatientVolumes&, const FusedPrediction&)>;

/// Round 0 is the Input-1 prediction. Each later round simulates edits on the previous
/// prediction, accumulates them, and predicts again.
std::vector<RoundReport> evaluate_rounds(const Segmenter& segmenter, std::span<const PatientVolumes> test_set,
                                         int n_rounds, int cap = editsim::kDefaultEditCap,
                                         const RoundObserver& observer = {});

/// One JSON object per (round, class, metric).
std::string metrics_jsonl(std::span<const RoundReport> rounds);
/// round,patient,dice_ggo,dice_cons rows.
std::string dice_by_round_csv(std::span<const RoundReport> rounds);

}  // namespace longiseg::train
