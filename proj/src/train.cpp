#include "longiseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include "longiseg/preprocess.hpp"
#include "longiseg/volume_io.hpp"

namespace longiseg::train {

using nlohmann::json;

namespace {

struct SchemeInfo {
  InputScheme scheme;
  std::string_view name;
  std::array<bool, kInputChannels> channels;
  bool interactive;
};

constexpr std::array<SchemeInfo, 6> kSchemes{{
    {InputScheme::kProposed, "proposed", {true, true, true, true, true, true, true, true}, true},
    {InputScheme::kStaticEdit, "static_edit", {false, false, false, true, true, true, true, true}, true},
    {InputScheme::kLongEditRefSeg, "long_edit_ref_seg", {true, true, true, true, false, false, true, true}, true},
    {InputScheme::kBaselineStatic, "baseline_static", {false, false, false, true, false, false, false, false}, false},
    {InputScheme::kBaselineLong, "baseline_long", {true, false, false, true, false, false, false, false}, false},
    {InputScheme::kBaselineLongRefSeg, "baseline_long_ref_seg", {true, true, true, true, false, false, false, false},
     false},
}};

const SchemeInfo& info(InputScheme s) {
  for (const auto& i : kSchemes)
    if (i.scheme == s) return i;
  throw std::invalid_argument("unknown input scheme");
}

}  // namespace

std::string_view scheme_name(InputScheme s) { return info(s).name; }

InputScheme parse_scheme(std::string_view name) {
  for (const auto& i : kSchemes)
    if (i.name == name) return i.scheme;
  throw std::invalid_argument("unknown input scheme '" + std::string(name) + "'");
}

std::array<bool, kInputChannels> scheme_channels(InputScheme s) { return info(s).channels; }

bool scheme_is_interactive(InputScheme s) { return info(s).interactive; }

void apply_scheme(InputStack& stack, InputScheme s) {
  const auto keep = scheme_channels(s);
  for (int c = 0; c < kInputChannels; ++c) {
    if (!keep[c]) std::ranges::fill(stack.channel(c), 0.0f);
  }
}

// ---------------------------------------------------------------------------
// Data

std::vector<PatientVolumes> load_split(const DatasetSpec& spec, const std::string& split) {
  const json manifest = json::parse(io::read_file(spec.manifest));
  const auto root = spec.manifest.parent_path();

  std::map<std::string, std::string> split_of;
  for (const auto& p : manifest.at("patients")) {
    const auto id = p.at("id").get<std::string>();
    const auto s = p.at("split").get<std::string>();
    auto [it, inserted] = split_of.emplace(id, s);
    if (!inserted && it->second != s) {
      throw std::invalid_argument("patient " + id + " appears in splits '" + it->second + "' and '" + s + "'");
    }
    if (!inserted) throw std::invalid_argument("patient " + id + " is listed twice");
  }

  const auto backend = preprocess::make_backend(spec.registration);
  std::vector<PatientVolumes> out;
  for (const auto& p : manifest.at("patients")) {
    if (p.at("split").get<std::string>() != split) continue;
    const auto id = p.at("id").get<std::string>();
    auto study = [&](const json& j, int timepoint) {
      auto vol = io::read_float_volume(root / j.at("volume").get<std::string>());
      preprocess::RawStudy s;
      s.raw_volume = std::move(vol.data);
      s.spacing = vol.spacing;
      s.lung_mask = io::read_label_volume(root / j.at("lung").get<std::string>());
      s.timepoint = timepoint;
      s.patient_id = id;
      return s;
    };
    const auto ref = study(p.at("reference"), 1);
    const auto tgt = study(p.at("target"), 2);
    const auto ref_seg = io::read_label_volume(root / p.at("reference").at("seg").get<std::string>());
    const auto tgt_seg = io::read_label_volume(root / p.at("target").at("seg").get<std::string>());
    auto pp = preprocess::preprocess_pair(ref, tgt, ref_seg, *backend, tgt_seg, spec.extents);
    out.push_back({id, std::move(pp.reference.data), std::move(pp.reference_seg), std::move(pp.target.data),
                   std::move(*pp.target_seg)});
  }
  return out;
}

Sample make_sample(const PatientVolumes& p, Plane plane, int index) {
  return {p.patient_id,
          plane,
          index,
          extract_slice(p.reference, plane, index),
          extract_slice(p.reference_seg, plane, index),
          extract_slice(p.target, plane, index),
          extract_slice(p.target_gt, plane, index)};
}

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("train." + field + ": " + why);
  };
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) fail("learning_rate", "must be positive");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (epochs < 1) fail("epochs", "must be >= 1");
  if (!(refine_probability >= 0 && refine_probability <= 1)) fail("refine_probability", "must be in [0, 1]");
  if (edit_cap < 0) fail("edit_cap", "must be >= 0");
  if (slices_per_epoch < 0) fail("slices_per_epoch", "must be >= 0");
  if (validation_rounds < 0) fail("validation_rounds", "must be >= 0");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate},
           {"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"refine_probability", c.refine_probability},
           {"seed", c.seed},
           {"scheme", std::string(scheme_name(c.scheme))},
           {"edit_cap", c.edit_cap},
           {"slices_per_epoch", c.slices_per_epoch},
           {"validation_rounds", c.validation_rounds},
           {"checkpoint", c.checkpoint.string()},
           {"log_csv", c.log_csv.string()}};
}

void from_json(const json& j, TrainConfig& c) {
  static const std::set<std::string> known{"learning_rate", "batch_size",       "epochs",
                                           "refine_probability", "seed",        "scheme",
                                           "edit_cap",      "slices_per_epoch", "validation_rounds",
                                           "checkpoint",    "log_csv"};
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw std::invalid_argument("train: unknown field '" + k + "'");
  }
  TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  c.refine_probability = j.value("refine_probability", d.refine_probability);
  c.seed = j.value("seed", d.seed);
  c.scheme = parse_scheme(j.value("scheme", std::string(scheme_name(d.scheme))));
  c.edit_cap = j.value("edit_cap", d.edit_cap);
  c.slices_per_epoch = j.value("slices_per_epoch", d.slices_per_epoch);
  c.validation_rounds = j.value("validation_rounds", d.validation_rounds);
  c.checkpoint = j.value("checkpoint", std::string());
  c.log_csv = j.value("log_csv", std::string());
}

// ---------------------------------------------------------------------------
// Training

namespace {

InputStack input1(const Sample& s, InputScheme scheme) {
  auto stack = assemble_input(s.ref_slice, s.ref_seg, s.target_slice);
  apply_scheme(stack, scheme);
  return stack;
}

struct Pooled {
  std::array<metrics::ConfusionCounts, kForegroundClasses> counts{};
  void add(const LabelImage& pred, const LabelImage& gt) {
    for (int c = 1; c <= kForegroundClasses; ++c) {
      const auto k = metrics::confusion(pred, gt, c);
      counts[c - 1].tp += k.tp;
      counts[c - 1].fp += k.fp;
      counts[c - 1].fn += k.fn;
    }
  }
};

void write_log(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,split,loss,dice_ggo,dice_cons\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.dice_ggo << ',' << r.dice_cons << '\n';
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_file(path, out.str());
}

std::vector<std::vector<float>> snapshot(const model::DenseNet<float>& net) {
  std::vector<std::vector<float>> out;
  for (const auto& p : net.parameters()) out.push_back(p.value);
  return out;
}

double volume_mse(const ProbMap<3>& probs, const LabelVolume& gt) {
  double total = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    auto p = probs.probs[c].values();
    auto g = gt.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = p[i] - (g[i] == c ? 1.0 : 0.0);
      total += d * d;
    }
  }
  return total / (static_cast<double>(gt.size()) * kNumClasses);
}

void restore(model::DenseNet<float>& net, std::vector<std::vector<float>>& weights) {
  auto& params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = std::move(weights[i]);
}

}  // namespace

RefinementBatch build_refinement_batch(const model::DenseNet<float>& net, std::span<const Sample> samples,
                                       InputScheme scheme, int edit_cap) {
  RefinementBatch out;
  std::vector<InputStack> first;
  first.reserve(samples.size());
  for (const auto& s : samples) first.push_back(input1(s, scheme));
  out.first_probs = model::forward(net, first);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    out.first_labels.push_back(labels_from_probs(out.first_probs[i]).labels);
    out.edits.push_back(editsim::simulate_edits(out.first_labels[i], s.gt, edit_cap));
    auto stack = assemble_input(s.ref_slice, s.ref_seg, s.target_slice, &out.first_probs[i], &out.first_labels[i],
                                &out.edits[i]);
    apply_scheme(stack, scheme);
    out.stacks.push_back(std::move(stack));
  }
  return out;
}

TrainResult train(model::DenseNet<float>& net, std::span<const PatientVolumes> train_set,
                  std::span<const PatientVolumes> val_set, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  {
    std::set<std::string> ids;
    for (const auto& p : train_set) ids.insert(p.patient_id);
    for (const auto& p : val_set) {
      if (ids.contains(p.patient_id)) {
        throw std::invalid_argument("train: patient " + p.patient_id + " is in both training and validation sets");
      }
    }
  }

  std::vector<std::tuple<int, Plane, int>> refs;
  for (int p = 0; p < static_cast<int>(train_set.size()); ++p) {
    for (Plane plane : kAllPlanes) {
      const int n = train_set[p].target.extent(normal_axis(plane));
      for (int i = 0; i < n; ++i) refs.emplace_back(p, plane, i);
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  model::Adam<float> optimizer(model::AdamConfig{.learning_rate = cfg.learning_rate});
  const bool interactive = scheme_is_interactive(cfg.scheme);
  const int val_rounds = interactive && cfg.refine_probability > 0 ? cfg.validation_rounds : 0;

  TrainResult result;
  std::vector<std::vector<float>> best_weights;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(refs.begin(), refs.end(), rng);
    const std::size_t n = cfg.slices_per_epoch > 0
                              ? std::min<std::size_t>(refs.size(), static_cast<std::size_t>(cfg.slices_per_epoch))
                              : refs.size();
    double loss_sum = 0;
    int batches = 0;
    Pooled pooled;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<Sample> samples;
      std::vector<LabelImage> gts;
      for (std::size_t k = start; k < end; ++k) {
        const auto& [p, plane, index] = refs[k];
        samples.push_back(make_sample(train_set[p], plane, index));
        gts.push_back(samples.back().gt);
      }
      const double z = uniform(rng);
      std::vector<InputStack> stacks;
      if (interactive && z < cfg.refine_probability) {
        stacks = build_refinement_batch(net, samples, cfg.scheme, cfg.edit_cap).stacks;
      } else {
        for (const auto& s : samples) stacks.push_back(input1(s, cfg.scheme));
      }
      model::Tensor<float> probs;
      loss_sum += model::training_step(net, model::stack_inputs(stacks), gts, optimizer, &probs);
      ++batches;
      const auto maps = model::unstack_probs(probs);
      for (std::size_t i = 0; i < maps.size(); ++i) pooled.add(labels_from_probs(maps[i]).labels, gts[i]);
    }
    EpochRecord tr{epoch, "train", loss_sum / batches, metrics::dsc(pooled.counts[0]),
                   metrics::dsc(pooled.counts[1])};
    result.history.push_back(tr);
    if (on_epoch) on_epoch(tr);

    double metric = 0.5 * (tr.dice_ggo + tr.dice_cons);
    if (!val_set.empty()) {
      ModelSegmenter seg(net, cfg.scheme, cfg.batch_size);
      double mse_sum = 0;
      int mse_n = 0;
      const RoundObserver observe = [&](int round, const PatientVolumes& p, const FusedPrediction& pred) {
        if (round != val_rounds) return;
        mse_sum += volume_mse(pred.probs, p.target_gt);
        ++mse_n;
      };
      const auto rounds = evaluate_rounds(seg, val_set, val_rounds, cfg.edit_cap, observe);
      const auto& last = rounds.back();
      const double val_loss = mse_sum / mse_n;
      EpochRecord vr{epoch, "val", val_loss, last.classes[0].dsc.mean, last.classes[1].dsc.mean};
      result.history.push_back(vr);
      if (on_epoch) on_epoch(vr);
      metric = last.mean_foreground_dice();
    }
    if (metric > result.best_metric) {
      result.best_metric = metric;
      result.best_epoch = epoch;
      best_weights = snapshot(net);
      if (!cfg.checkpoint.empty()) {
        model::CheckpointInfo ckpt{epoch, metric, json{{"scheme", std::string(scheme_name(cfg.scheme))},
                                                       {"train_config", cfg}}};
        model::save_checkpoint(cfg.checkpoint, net, ckpt);
      }
    }
    if (!cfg.log_csv.empty()) write_log(cfg.log_csv, result.history);
  }
  restore(net, best_weights);
  return result;
}

// ---------------------------------------------------------------------------
// Inference

FusedPrediction predict_volume(const model::DenseNet<float>& net, const VoxelGrid<float>& reference,
                               const LabelVolume& reference_seg, const VoxelGrid<float>& target,
                               const SessionState& state, InputScheme scheme, int batch_size) {
  require_same_extents(target, reference, "predict_volume reference vs target");
  require_same_extents(target, reference_seg, "predict_volume reference_seg vs target");
  if (state.previous_probs) {
    for (const auto& p : state.previous_probs->probs) require_same_extents(target, p, "predict_volume previous_probs");
  }
  if (state.previous_labels) require_same_extents(target, *state.previous_labels, "predict_volume previous_labels");
  if (state.edits) {
    for (const auto& c : state.edits->channels) require_same_extents(target, c, "predict_volume edits");
  }
  if (batch_size < 1) throw std::invalid_argument("predict_volume: batch_size must be >= 1");

  std::array<ProbMap<3>, 3> views;
  for (Plane plane : kAllPlanes) {
    auto& view = views[static_cast<int>(plane)];
    view = ProbMap<3>(target.extents());
    const int n = target.extent(normal_axis(plane));
    for (int start = 0; start < n; start += batch_size) {
      const int end = std::min(n, start + batch_size);
      std::vector<InputStack> stacks;
      for (int i = start; i < end; ++i) {
        const auto ref = extract_slice(reference, plane, i);
        const auto seg = extract_slice(reference_seg, plane, i);
        const auto tgt = extract_slice(target, plane, i);
        std::optional<ProbMap<2>> prob;
        std::optional<LabelImage> labels;
        std::optional<EditMask<2>> edits;
        if (state.previous_probs) prob = extract_slice(*state.previous_probs, plane, i);
        if (state.previous_labels) labels = extract_slice(*state.previous_labels, plane, i);
        if (state.edits) edits = extract_slice(*state.edits, plane, i);
        auto stack = assemble_input(ref, seg, tgt, prob ? &*prob : nullptr, labels ? &*labels : nullptr,
                                    edits ? &*edits : nullptr);
        apply_scheme(stack, scheme);
        stacks.push_back(std::move(stack));
      }
      const auto probs = model::forward(net, stacks);
      for (int i = start; i < end; ++i) {
        for (int c = 0; c < kNumClasses; ++c) insert_slice(view.probs[c], plane, i, probs[i - start].probs[c]);
      }
    }
  }
  return fuse_views(views[0], views[1], views[2]);
}

FusedPrediction ModelSegmenter::predict(const PatientVolumes& patient, const SessionState& state) const {
  return predict_volume(net_, patient.reference, patient.reference_seg, patient.target, state, scheme_, batch_size_);
}

FusedPrediction OracleSegmenter::predict(const PatientVolumes& patient, const SessionState&) const {
  FusedPrediction out{ProbMap<3>(patient.target_gt.extents()), patient.target_gt};
  for (int c = 0; c < kNumClasses; ++c) out.probs.probs[c] = class_indicator(patient.target_gt, c);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

VolumeEdits simulate_volume_edits(const LabelVolume& pred, const LabelVolume& gt, int cap) {
  require_same_extents(pred, gt, "simulate_volume_edits");
  VolumeEdits out{EditMask<3>(gt.extents()), 0};
  for (Plane plane : kAllPlanes) {
    const int n = gt.extent(normal_axis(plane));
    for (int i = 0; i < n; ++i) {
      const auto p = extract_slice(pred, plane, i);
      const auto g = extract_slice(gt, plane, i);
      if (p == g) continue;
      const auto sim = editsim::simulate_edits_detailed(p, g, cap);
      for (const auto& s : sim.scribbles) {
        auto& ch = out.mask.for_class(s.cls);
        for (const auto& px : s.pixels) {
          const auto [a, b, c] = slice_to_volume(plane, i, px.row, px.col);
          ch(a, b, c) = s.value;
        }
      }
      out.scribbles += static_cast<int>(sim.scribbles.size());
    }
  }
  return out;
}

namespace {

MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  s.n = static_cast<int>(xs.size());
  if (xs.empty()) return s;
  double sum = 0;
  for (double x : xs) sum += x;
  s.mean = sum / s.n;
  if (s.n > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sem = std::sqrt(ss / (s.n - 1)) / std::sqrt(static_cast<double>(s.n));
  }
  return s;
}

PatientRound score_round(const PatientVolumes& p, const LabelVolume& labels, int scribbles) {
  PatientRound r{p.patient_id, {}, scribbles};
  for (int c = 1; c <= kForegroundClasses; ++c) r.scores[c - 1] = metrics::score(labels, p.target_gt, c);
  return r;
}

}  // namespace

std::vector<RoundReport> evaluate_rounds(const Segmenter& segmenter, std::span<const PatientVolumes> test_set,
                                         int n_rounds, int cap, const RoundObserver& observer) {
  if (n_rounds < 0) throw std::invalid_argument("evaluate_rounds: n_rounds must be >= 0");
  std::vector<RoundReport> reports(n_rounds + 1);
  for (int t = 0; t <= n_rounds; ++t) reports[t].round = t;

  for (const auto& p : test_set) {
    SessionState state;
    auto pred = segmenter.predict(p, state);
    if (observer) observer(0, p, pred);
    reports[0].patients.push_back(score_round(p, pred.labels, 0));
    EditMask<3> accumulated(p.target_gt.extents());
    for (int t = 1; t <= n_rounds; ++t) {
      auto edits = simulate_volume_edits(pred.labels, p.target_gt, cap);
      accumulated = accumulate_edits(accumulated, edits.mask);
      state.previous_probs = std::move(pred.probs);
      state.previous_labels = std::move(pred.labels);
      state.edits = accumulated;
      pred = segmenter.predict(p, state);
      if (observer) observer(t, p, pred);
      reports[t].patients.push_back(score_round(p, pred.labels, edits.scribbles));
    }
  }

  for (auto& r : reports) {
    for (int c = 0; c < kForegroundClasses; ++c) {
      std::vector<double> dsc, ppv, tpr, vd;
      for (const auto& pr : r.patients) {
        const auto& s = pr.scores[c];
        dsc.push_back(s.dsc);
        ppv.push_back(s.ppv);
        tpr.push_back(s.tpr);
        if (s.vd_defined) vd.push_back(s.vd);
      }
      r.classes[c] = {summarize(dsc), summarize(ppv), summarize(tpr), summarize(vd)};
    }
    for (const auto& pr : r.patients) r.edit_count += pr.scribbles;
  }
  return reports;
}

std::string metrics_jsonl(std::span<const RoundReport> rounds) {
  static constexpr std::array<std::string_view, kForegroundClasses> kClassNames{"GGO", "CONS"};
  std::string out;
  for (const auto& r : rounds) {
    for (int c = 0; c < kForegroundClasses; ++c) {
      const auto& cr = r.classes[c];
      const std::array<std::pair<std::string_view, const MetricSummary*>, 4> items{
          {{"dsc", &cr.dsc}, {"ppv", &cr.ppv}, {"tpr", &cr.tpr}, {"vd", &cr.vd}}};
      for (const auto& [name, m] : items) {
        json j{{"round", r.round},
               {"class", kClassNames[c]},
               {"metric", name},
               {"mean", m->mean},
               {"sem", m->sem},
               {"n", m->n},
               {"edit_count", r.edit_count}};
        out += j.dump();
        out += '\n';
      }
    }
  }
  return out;
}

std::string dice_by_round_csv(std::span<const RoundReport> rounds) {
  std::ostringstream out;
  out.precision(17);
  out << "round,patient,dice_ggo,dice_cons\n";
  for (const auto& r : rounds) {
    for (const auto& p : r.patients) {
      out << r.round << ',' << p.patient_id << ',' << p.scores[0].dsc << ',' << p.scores[1].dsc << '\n';
    }
  }
  return out.str();
}

}  // namespace longiseg::train
