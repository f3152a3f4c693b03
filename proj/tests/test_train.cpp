#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "longiseg/preprocess.hpp"
#include "longiseg/synthdata.hpp"
#include "longiseg/train.hpp"
#include "longiseg/volume_io.hpp"

using namespace longiseg;
using namespace longiseg::train;
using longiseg::model::BackboneConfig;
using longiseg::model::DenseNet;

namespace {

PatientVolumes small_patient(std::uint64_t seed, int extent = 16) {
  synthdata::SynthConfig cfg;
  cfg.shape = {32, 32, 32};
  auto p = synthdata::generate_patient(cfg, seed);
  auto backend = preprocess::make_backend("affine");
  auto pp = preprocess::preprocess_pair(p.reference, p.target, p.reference_seg, *backend, p.target_seg,
                                        {extent, extent, extent});
  return {p.id, pp.reference.data, pp.reference_seg, pp.target.data, *pp.target_seg};
}

BackboneConfig small_net() {
  auto c = BackboneConfig::preset("fc-densenet-tiny");
  c.seed = 3;
  return c;
}

std::vector<Sample> some_samples(const PatientVolumes& p) {
  std::vector<Sample> out;
  for (Plane plane : kAllPlanes) {
    for (int i : {3, 8, 12}) out.push_back(make_sample(p, plane, i));
  }
  return out;
}

}  // namespace

TEST_CASE("input schemes keep the documented channels") {
  using C = std::array<bool, kInputChannels>;
  CHECK(scheme_channels(InputScheme::kProposed) == C{1, 1, 1, 1, 1, 1, 1, 1});
  CHECK(scheme_channels(InputScheme::kStaticEdit) == C{0, 0, 0, 1, 1, 1, 1, 1});
  CHECK(scheme_channels(InputScheme::kLongEditRefSeg) == C{1, 1, 1, 1, 0, 0, 1, 1});
  CHECK(scheme_channels(InputScheme::kBaselineStatic) == C{0, 0, 0, 1, 0, 0, 0, 0});
  CHECK(scheme_channels(InputScheme::kBaselineLong) == C{1, 0, 0, 1, 0, 0, 0, 0});
  CHECK(scheme_channels(InputScheme::kBaselineLongRefSeg) == C{1, 1, 1, 1, 0, 0, 0, 0});
  for (auto s : {InputScheme::kProposed, InputScheme::kStaticEdit, InputScheme::kLongEditRefSeg,
                 InputScheme::kBaselineStatic, InputScheme::kBaselineLong, InputScheme::kBaselineLongRefSeg}) {
    CHECK(parse_scheme(scheme_name(s)) == s);
    const bool uses_edits = scheme_channels(s)[6];
    CHECK(scheme_is_interactive(s) == uses_edits);
  }
  CHECK_THROWS_AS(parse_scheme("bogus"), std::invalid_argument);

  InputStack stack(4, 5);
  for (int c = 0; c < kInputChannels; ++c) std::ranges::fill(stack.channel(c), 1.0f + c);
  apply_scheme(stack, InputScheme::kStaticEdit);
  for (int c = 0; c < kInputChannels; ++c) {
    const float want = c < 3 ? 0.0f : 1.0f + c;
    for (float v : stack.channel(c)) CHECK(v == want);
  }
  CHECK(stack.channels() == kInputChannels);
}

TEST_CASE("train config json round trip and validation") {
  TrainConfig c;
  c.learning_rate = 3e-4;
  c.batch_size = 4;
  c.scheme = InputScheme::kLongEditRefSeg;
  c.seed = 11;
  c.checkpoint = "out/best.ckpt";
  nlohmann::json j = c;
  auto back = j.get<TrainConfig>();
  CHECK(back.learning_rate == c.learning_rate);
  CHECK(back.batch_size == 4);
  CHECK(back.scheme == InputScheme::kLongEditRefSeg);
  CHECK(back.seed == 11);
  CHECK(back.checkpoint == c.checkpoint);

  CHECK_THROWS_WITH_AS(nlohmann::json({{"batchsize", 3}}).get<TrainConfig>(), doctest::Contains("batchsize"),
                       std::invalid_argument);
  TrainConfig bad;
  bad.refine_probability = 1.5;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("refine_probability"), std::invalid_argument);
  bad = {};
  bad.batch_size = 0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("batch_size"), std::invalid_argument);
}

TEST_CASE("samples share one slice shape") {
  const auto p = small_patient(21);
  for (const auto& s : some_samples(p)) {
    CHECK(s.ref_slice.extents() == s.target_slice.extents());
    CHECK(s.ref_seg.extents() == s.target_slice.extents());
    CHECK(s.gt.extents() == s.target_slice.extents());
    CHECK(s.gt == extract_slice(p.target_gt, s.plane, s.slice_index));
  }
}

TEST_CASE("refinement batch: first pass leaves weights alone and channels carry its outputs") {
  const auto p = small_patient(22);
  DenseNet<float> net(small_net());
  const auto samples = some_samples(p);
  const auto before = net.digest();
  const auto batch = build_refinement_batch(net, samples, InputScheme::kProposed, 20);
  CHECK(net.digest() == before);

  REQUIRE(batch.stacks.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto& st = batch.stacks[i];
    CHECK(st.channels() == kInputChannels);
    const auto argmax = labels_from_probs(batch.first_probs[i]);
    CHECK(batch.first_labels[i] == argmax.labels);
    CHECK(batch.edits[i] == editsim::simulate_edits(argmax.labels, s.gt, 20));
    auto ch = [&](InputChannel c) { return st.channel(c); };
    for (std::size_t k = 0; k < st.plane_size(); ++k) {
      CHECK(ch(InputChannel::kReferenceImage)[k] == s.ref_slice.values()[k]);
      CHECK(ch(InputChannel::kReferenceGGO)[k] == (s.ref_seg.values()[k] == kGGO ? 1.0f : 0.0f));
      CHECK(ch(InputChannel::kReferenceCONS)[k] == (s.ref_seg.values()[k] == kCONS ? 1.0f : 0.0f));
      CHECK(ch(InputChannel::kTargetImage)[k] == s.target_slice.values()[k]);
      CHECK(ch(InputChannel::kPreviousMaxProb)[k] == argmax.max_prob.values()[k]);
      CHECK(ch(InputChannel::kPreviousLabels)[k] == argmax.labels.values()[k] / 2.0f);
      CHECK(ch(InputChannel::kEditGGO)[k] == batch.edits[i].channels[0].values()[k]);
      CHECK(ch(InputChannel::kEditCONS)[k] == batch.edits[i].channels[1].values()[k]);
    }
  }

  // The first pass of a masked scheme sees the masked Input-1 stack.
  const auto masked = build_refinement_batch(net, samples, InputScheme::kStaticEdit, 20);
  for (const auto& st : masked.stacks) {
    for (int c = 0; c < 3; ++c) {
      for (float v : st.channel(c)) CHECK(v == 0.0f);
    }
  }
}

TEST_CASE("predict_volume matches a per-plane recomputation from Input-1 stacks") {
  const auto p = small_patient(23);
  DenseNet<float> net(small_net());
  const auto fused = predict_volume(net, p.reference, p.reference_seg, p.target, {}, InputScheme::kProposed, 5);

  std::array<ProbMap<3>, 3> views;
  for (Plane plane : kAllPlanes) {
    const int n = p.target.extent(normal_axis(plane));
    std::vector<Image<float>> per_class[kNumClasses];
    for (int i = 0; i < n; ++i) {
      auto stack = assemble_input(extract_slice(p.reference, plane, i), extract_slice(p.reference_seg, plane, i),
                                  extract_slice(p.target, plane, i));
      for (int c = 4; c < kInputChannels; ++c) {
        for (float v : stack.channel(c)) REQUIRE(v == 0.0f);
      }
      std::vector<InputStack> one{stack};
      const auto probs = model::forward(net, one);
      for (int c = 0; c < kNumClasses; ++c) per_class[c].push_back(probs[0].probs[c]);
    }
    for (int c = 0; c < kNumClasses; ++c) views[static_cast<int>(plane)].probs[c] = restack(per_class[c], plane);
  }
  const auto expected = fuse_views(views[0], views[1], views[2]);
  CHECK(fused.labels == expected.labels);
  for (int c = 0; c < kNumClasses; ++c) {
    const auto a = fused.probs.probs[c].values();
    const auto b = expected.probs.probs[c].values();
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(a[i] - b[i])));
    CHECK(worst < 1e-5);
  }

  const auto again = predict_volume(net, p.reference, p.reference_seg, p.target, {}, InputScheme::kProposed, 5);
  CHECK(again.labels == fused.labels);
  CHECK(again.probs.probs[1] == fused.probs.probs[1]);

  VoxelGrid<float> wrong({16, 16, 15});
  CHECK_THROWS_AS(predict_volume(net, wrong, p.reference_seg, p.target, {}), ShapeError);
  SessionState bad;
  bad.edits = EditMask<3>({16, 15, 16});
  CHECK_THROWS_AS(predict_volume(net, p.reference, p.reference_seg, p.target, bad), ShapeError);
}

TEST_CASE("volume edits lie in the error set of their class") {
  const auto p = small_patient(24);
  std::mt19937 rng(5);
  LabelVolume pred = p.target_gt;
  for (auto& v : pred.values()) {
    if (rng() % 9 == 0) v = static_cast<std::uint8_t>(rng() % 3);
  }
  const auto edits = simulate_volume_edits(pred, p.target_gt, 20);
  CHECK(edits.scribbles > 0);
  int marked = 0;
  for (int cls = 1; cls <= kForegroundClasses; ++cls) {
    const auto& ch = edits.mask.for_class(cls).values();
    for (std::size_t i = 0; i < ch.size(); ++i) {
      if (ch[i] == 1) {
        CHECK((p.target_gt.values()[i] == cls && pred.values()[i] != cls));
        ++marked;
      } else if (ch[i] == -1) {
        CHECK((pred.values()[i] == cls && p.target_gt.values()[i] != cls));
        ++marked;
      } else {
        CHECK(ch[i] == 0);
      }
    }
  }
  CHECK(marked > 0);
  const auto none = simulate_volume_edits(p.target_gt, p.target_gt, 20);
  CHECK(none.scribbles == 0);
  CHECK(none.mask == EditMask<3>(p.target_gt.extents()));
}

TEST_CASE("oracle segmenter scores perfectly with no edits in every round") {
  const std::vector<PatientVolumes> set{small_patient(25), small_patient(26)};
  const auto reports = evaluate_rounds(OracleSegmenter{}, set, 3);
  REQUIRE(reports.size() == 4);
  for (const auto& r : reports) {
    CHECK(r.edit_count == 0);
    CHECK(r.patients.size() == 2);
    for (const auto& c : r.classes) {
      CHECK(c.dsc.mean == 1.0);
      CHECK(c.ppv.mean == 1.0);
      CHECK(c.tpr.mean == 1.0);
      CHECK(c.vd.mean == 0.0);
      CHECK(c.dsc.sem == 0.0);
      CHECK(c.dsc.n == 2);
    }
    CHECK(r.mean_foreground_dice() == 1.0);
  }
}

namespace {

// Predicts the previous labels with edits applied, or everything background in round 0.
class EditFollower final : public Segmenter {
 public:
  FusedPrediction predict(const PatientVolumes& p, const SessionState& state) const override {
    LabelVolume labels(p.target_gt.extents());
    if (state.previous_labels) labels = *state.previous_labels;
    if (state.edits) {
      for (int cls = 1; cls <= kForegroundClasses; ++cls) {
        const auto e = state.edits->for_class(cls).values();
        for (std::size_t i = 0; i < e.size(); ++i) {
          if (e[i] == 1) labels.values()[i] = static_cast<std::uint8_t>(cls);
          if (e[i] == -1 && labels.values()[i] == cls) labels.values()[i] = kBackground;
        }
      }
    }
    FusedPrediction out{ProbMap<3>(labels.extents()), labels};
    for (int c = 0; c < kNumClasses; ++c) out.probs.probs[c] = class_indicator(labels, c);
    return out;
  }
};

}  // namespace

TEST_CASE("evaluate_rounds feeds accumulated edits back and reports each round") {
  const std::vector<PatientVolumes> set{small_patient(27)};
  const auto zero = evaluate_rounds(EditFollower{}, set, 0);
  REQUIRE(zero.size() == 1);
  CHECK(zero[0].edit_count == 0);
  CHECK(zero[0].round == 0);

  const auto reports = evaluate_rounds(EditFollower{}, set, 2);
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].classes[0].dsc.mean == 0.0);
  CHECK(reports[1].edit_count > 0);
  CHECK(reports[1].mean_foreground_dice() > reports[0].mean_foreground_dice());
  CHECK(reports[2].mean_foreground_dice() >= reports[1].mean_foreground_dice());
  for (const auto& r : reports) {
    for (const auto& c : r.classes) {
      CHECK(c.dsc.mean >= 0.0);
      CHECK(c.dsc.mean <= 1.0);
      CHECK(c.ppv.mean <= 1.0);
      CHECK(c.tpr.mean <= 1.0);
      CHECK(c.vd.mean >= 0.0);
    }
  }

  std::vector<int> seen;
  evaluate_rounds(EditFollower{}, set, 2, 20, [&](int round, const PatientVolumes&, const FusedPrediction&) {
    seen.push_back(round);
  });
  CHECK(seen == std::vector<int>{0, 1, 2});

  const auto jsonl = metrics_jsonl(reports);
  std::istringstream lines(jsonl);
  std::string line;
  int count = 0;
  std::set<std::string> metrics_seen;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("mean"));
    CHECK(j.contains("sem"));
    CHECK(j.at("round").get<int>() >= 0);
    metrics_seen.insert(j.at("metric").get<std::string>());
    ++count;
  }
  CHECK(count == 3 * 2 * 4);
  CHECK(metrics_seen == std::set<std::string>{"dsc", "ppv", "tpr", "vd"});

  const auto csv = dice_by_round_csv(reports);
  CHECK(csv.rfind("round,patient,dice_ggo,dice_cons\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3);
}

TEST_CASE("mean and standard error across patients") {
  struct Fixed final : Segmenter {
    FusedPrediction predict(const PatientVolumes& p, const SessionState&) const override {
      LabelVolume labels(p.target_gt.extents());
      FusedPrediction out{ProbMap<3>(labels.extents()), labels};
      return out;
    }
  };
  // All-background prediction: DSC is 0 when the class is present and 1 when absent.
  auto a = small_patient(28);
  auto b = a;
  b.patient_id = "b";
  b.target_gt.fill(kBackground);
  const std::vector<PatientVolumes> set{a, b};
  const auto r = evaluate_rounds(Fixed{}, set, 0);
  CHECK(r[0].classes[0].dsc.mean == doctest::Approx(0.5));
  CHECK(r[0].classes[0].dsc.sem == doctest::Approx(0.5));  // sd 1/sqrt(2), n 2
}

TEST_CASE("training rejects bad inputs and is deterministic") {
  DenseNet<float> net(small_net());
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.slices_per_epoch = 24;
  cfg.seed = 9;
  cfg.learning_rate = 1e-3;
  CHECK_THROWS_AS(train::train(net, {}, {}, cfg), std::invalid_argument);

  const std::vector<PatientVolumes> tr{small_patient(31), small_patient(32)};
  const std::vector<PatientVolumes> va{small_patient(33)};
  CHECK_THROWS_WITH_AS(train::train(net, tr, std::vector<PatientVolumes>{tr[0]}, cfg),
                       doctest::Contains(tr[0].patient_id.c_str()), std::invalid_argument);

  auto run = [&](double p, const std::filesystem::path& ckpt) {
    DenseNet<float> m(small_net());
    auto c = cfg;
    c.refine_probability = p;
    c.checkpoint = ckpt;
    auto result = train::train(m, tr, va, c);
    return std::make_pair(result, m.digest());
  };
  const auto dir = std::filesystem::temp_directory_path() / "longiseg_test_train";
  std::filesystem::remove_all(dir);
  const auto [r1, d1] = run(0.5, dir / "a.ckpt");
  const auto [r2, d2] = run(0.5, dir / "b.ckpt");
  REQUIRE(r1.history.size() == 4);
  CHECK(r1.history[0].split == "train");
  CHECK(r1.history[1].split == "val");
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].loss == r2.history[i].loss);
    CHECK(std::isfinite(r1.history[i].loss));
  }
  CHECK(d1 == d2);
  CHECK(model::load_checkpoint(dir / "a.ckpt").net.digest() == model::load_checkpoint(dir / "b.ckpt").net.digest());

  // The returned network holds the best-epoch weights, which are also the checkpoint.
  const auto loaded = model::load_checkpoint(dir / "a.ckpt");
  CHECK(loaded.net.digest() == d1);
  CHECK(loaded.info.epoch == r1.best_epoch);
  CHECK(loaded.info.extra.at("scheme") == "proposed");

  // p = 0 and p = 1 take different paths through the same data.
  const auto [r0, d0] = run(0.0, {});
  const auto [rall, dall] = run(1.0, {});
  CHECK(r0.history[0].loss != rall.history[0].loss);
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-interactive schemes never refine") {
  const std::vector<PatientVolumes> tr{small_patient(34)};
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.slices_per_epoch = 16;
  cfg.scheme = InputScheme::kBaselineLongRefSeg;
  auto run = [&](double p) {
    DenseNet<float> m(small_net());
    auto c = cfg;
    c.refine_probability = p;
    train::train(m, tr, {}, c);
    return m.digest();
  };
  CHECK(run(0.0) == run(1.0));
}

TEST_CASE("load_split reads one split of a generated dataset") {
  const auto dir = std::filesystem::temp_directory_path() / "longiseg_test_split";
  std::filesystem::remove_all(dir);
  synthdata::SynthConfig cfg;
  cfg.shape = {24, 24, 24};
  cfg.n_train = 2;
  cfg.n_val = 1;
  cfg.n_test = 1;
  synthdata::generate_dataset(cfg, dir);

  DatasetSpec spec{dir / "manifest.json", "affine", {16, 16, 16}};
  const auto train_set = load_split(spec, "train");
  const auto val_set = load_split(spec, "val");
  CHECK(train_set.size() == 2);
  CHECK(val_set.size() == 1);
  for (const auto& p : train_set) {
    CHECK(p.target.extents() == std::array<int, 3>{16, 16, 16});
    CHECK(p.reference.extents() == p.target.extents());
    CHECK(p.target_gt.extents() == p.target.extents());
    CHECK(p.patient_id != val_set[0].patient_id);
  }

  auto manifest = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  auto dup = manifest["patients"][0];
  dup["split"] = "test";
  manifest["patients"].push_back(dup);
  io::write_file(dir / "manifest.json", manifest.dump());
  const auto dup_id = dup["id"].get<std::string>();
  CHECK_THROWS_WITH_AS(load_split(spec, "train"), doctest::Contains(dup_id.c_str()),
                       std::invalid_argument);
  std::filesystem::remove_all(dir);
}
