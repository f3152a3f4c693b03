#include "longiseg/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "httplib.h"
#include "longiseg/metrics.hpp"
#include "longiseg/preprocess.hpp"
#include "longiseg/volume_io.hpp"

namespace longiseg::cli {

using nlohmann::json;
namespace fs = std::filesystem;

void Config::set_seed(std::uint64_t seed) {
  synth.seed = seed;
  model.seed = seed;
  train.seed = seed;
}

void Config::validate() const {
  synth.validate();
  model.validate();
  train.validate();
  service.validate();
  preprocess::make_backend(registration);
  for (int e : extents)
    if (e < 1) throw std::invalid_argument("data.extents: every extent must be >= 1");
}

void to_json(json& j, const Config& c) {
  j = json{{"synth", c.synth},
           {"model", c.model},
           {"train", c.train},
           {"data", {{"registration", c.registration}, {"extents", c.extents}}},
           {"service", c.service}};
}

void from_json(const json& j, Config& c) {
  static const std::set<std::string> sections{"synth", "model", "train", "data", "service"};
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!sections.contains(k)) throw std::invalid_argument("config: unknown section '" + k + "'");
  }
  if (j.contains("synth")) c.synth = j["synth"].get<synthdata::SynthConfig>();
  if (j.contains("model")) c.model = j["model"].get<model::BackboneConfig>();
  if (j.contains("train")) c.train = j["train"].get<train::TrainConfig>();
  if (j.contains("service")) c.service = j["service"].get<service::ServiceConfig>();
  if (j.contains("data")) {
    for (const auto& [k, v] : j["data"].items()) {
      if (k != "registration" && k != "extents") throw std::invalid_argument("data: unknown field '" + k + "'");
    }
    c.registration = j["data"].value("registration", c.registration);
    c.extents = j["data"].value("extents", c.extents);
  }
}

Config load_config(const fs::path& path) {
  const auto text = io::read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return j.get<Config>();
}

namespace {

void require_file(const std::string& path, const char* flag) {
  if (!fs::is_regular_file(path)) throw io::IoError(std::string(flag) + ": no such file '" + path + "'");
}

json scores_json(const metrics::ClassScores& s) {
  return json{{"dsc", s.dsc}, {"ppv", s.ppv}, {"tpr", s.tpr}, {"vd", s.vd_defined ? json(s.vd) : json(nullptr)}};
}

std::array<int, 3> parse_extents(const std::string& s) {
  std::array<int, 3> e{};
  char c1 = 0, c2 = 0;
  std::istringstream in(s);
  if (!(in >> e[0] >> c1 >> e[1] >> c2 >> e[2]) || c1 != ',' || c2 != ',' || !in.eof()) {
    throw std::invalid_argument("--extents: expected h,w,s, got '" + s + "'");
  }
  return e;
}

// Options shared by every command that reads the config file.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file");
    app->add_option("--seed", seed, "Seed for every random stream");
  }
  Config load() const {
    Config c;
    if (!config_path.empty()) {
      require_file(config_path, "--config");
      c = load_config(config_path);
    }
    if (seed) c.set_seed(*seed);
    return c;
  }
};

httplib::Server* g_server = nullptr;
extern "C" void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Longitudinal interactive lesion segmentation", "longiseg_cli"};
  app.require_subcommand(1);
  std::function<void()> action;

  // synth
  Common synth_common;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic longitudinal dataset");
  synth_common.add(synth);
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->callback([&] {
    action = [&] {
      auto cfg = synth_common.load();
      cfg.synth.validate();
      const auto manifest = synthdata::generate_dataset(cfg.synth, synth_out);
      out << "wrote " << manifest.at("patients").size() << " patients to " << synth_out << "\n";
    };
  });

  // preprocess
  std::string pp_ref, pp_ref_lung, pp_tgt, pp_tgt_lung, pp_ref_seg, pp_tgt_seg, pp_backend = "affine", pp_out,
                                                                                pp_extents = "150,150,150";
  auto* pp = app.add_subcommand("preprocess", "Crop, register, normalise and resize one study pair");
  pp->add_option("--ref", pp_ref, "Reference (timepoint 1) volume")->required();
  pp->add_option("--ref-lung", pp_ref_lung, "Reference lung mask")->required();
  pp->add_option("--target", pp_tgt, "Target (timepoint 2) volume")->required();
  pp->add_option("--target-lung", pp_tgt_lung, "Target lung mask")->required();
  pp->add_option("--ref-seg", pp_ref_seg, "Reference lesion labels")->required();
  pp->add_option("--target-seg", pp_tgt_seg, "Target lesion labels (optional)");
  pp->add_option("--backend", pp_backend, "identity | affine | external:<cmd>");
  pp->add_option("--extents", pp_extents, "Output grid h,w,s");
  pp->add_option("--out", pp_out, "Output directory")->required();
  pp->callback([&] {
    action = [&] {
      const auto extents = parse_extents(pp_extents);
      const auto backend = preprocess::make_backend(pp_backend);
      for (auto [p, f] : {std::pair{&pp_ref, "--ref"}, {&pp_ref_lung, "--ref-lung"}, {&pp_tgt, "--target"},
                          {&pp_tgt_lung, "--target-lung"}, {&pp_ref_seg, "--ref-seg"}}) {
        require_file(*p, f);
      }
      auto study = [](const std::string& vol, const std::string& lung, int tp) {
        auto v = io::read_float_volume(vol);
        preprocess::RawStudy s;
        s.raw_volume = std::move(v.data);
        s.spacing = v.spacing;
        s.lung_mask = io::read_label_volume(lung);
        s.timepoint = tp;
        return s;
      };
      const auto ref = study(pp_ref, pp_ref_lung, 1);
      const auto tgt = study(pp_tgt, pp_tgt_lung, 2);
      std::optional<LabelVolume> tgt_seg;
      if (!pp_tgt_seg.empty()) {
        require_file(pp_tgt_seg, "--target-seg");
        tgt_seg = io::read_label_volume(pp_tgt_seg);
      }
      const auto r = preprocess::preprocess_pair(ref, tgt, io::read_label_volume(pp_ref_seg), *backend, tgt_seg,
                                                 extents);
      fs::create_directories(pp_out);
      const fs::path dir = pp_out;
      io::write_volume(dir / "reference.nii.gz", r.reference.data);
      io::write_volume(dir / "target.nii.gz", r.target.data);
      io::write_volume(dir / "reference_seg.nii.gz", r.reference_seg);
      if (r.target_seg) io::write_volume(dir / "target_seg.nii.gz", *r.target_seg);
      io::write_file(dir / "preprocess.json",
                     json{{"backend", backend->name()}, {"extents", extents}, {"kept_axial", r.kept_axial}}.dump(2) +
                         "\n");
      out << "wrote " << dir.string() << "\n";
    };
  });

  // train
  Common train_common;
  std::string train_data, train_out, train_log, train_scheme;
  std::optional<int> train_epochs;
  auto* tr = app.add_subcommand("train", "Train a model on a dataset manifest");
  train_common.add(tr);
  tr->add_option("--data", train_data, "Dataset manifest.json")->required();
  tr->add_option("--out", train_out, "Checkpoint path")->required();
  tr->add_option("--log", train_log, "Per-epoch CSV log");
  tr->add_option("--epochs", train_epochs, "Override train.epochs");
  tr->add_option("--scheme", train_scheme, "Override train.scheme");
  tr->callback([&] {
    action = [&] {
      auto cfg = train_common.load();
      cfg.train.checkpoint = train_out;
      if (!train_log.empty()) cfg.train.log_csv = train_log;
      if (train_epochs) cfg.train.epochs = *train_epochs;
      if (!train_scheme.empty()) cfg.train.scheme = train::parse_scheme(train_scheme);
      cfg.validate();
      require_file(train_data, "--data");
      const train::DatasetSpec spec{train_data, cfg.registration, cfg.extents};
      const auto train_set = train::load_split(spec, "train");
      const auto val_set = train::load_split(spec, "val");
      model::DenseNet<float> net(cfg.model);
      const auto result = train::train(net, train_set, val_set, cfg.train, [&](const train::EpochRecord& r) {
        out << "epoch " << r.epoch << " " << r.split << " loss=" << r.loss << " dice_ggo=" << r.dice_ggo
            << " dice_cons=" << r.dice_cons << "\n"
            << std::flush;
      });
      out << "best epoch " << result.best_epoch << " metric " << result.best_metric << " -> " << train_out << "\n";
    };
  });

  // eval
  std::string eval_ckpt, eval_data, eval_out, eval_split = "test", eval_scheme, eval_config;
  int eval_rounds = 2, eval_cap = editsim::kDefaultEditCap;
  auto* ev = app.add_subcommand("eval", "Simulated refinement rounds on a split");
  ev->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  ev->add_option("--data", eval_data, "Dataset manifest.json")->required();
  ev->add_option("--out", eval_out, "Output directory")->required();
  ev->add_option("--rounds", eval_rounds, "Refinement rounds after the initial prediction");
  ev->add_option("--cap", eval_cap, "Scribbles per slice per round");
  ev->add_option("--split", eval_split, "Manifest split");
  ev->add_option("--scheme", eval_scheme, "Input scheme; default is the one stored in the checkpoint");
  ev->add_option("--config", eval_config, "JSON config file (data section)");
  ev->callback([&] {
    action = [&] {
      if (eval_rounds < 0) throw std::invalid_argument("--rounds: must be >= 0");
      if (eval_cap < 1) throw std::invalid_argument("--cap: must be >= 1");
      Config cfg;
      if (!eval_config.empty()) {
        require_file(eval_config, "--config");
        cfg = load_config(eval_config);
      }
      require_file(eval_ckpt, "--checkpoint");
      require_file(eval_data, "--data");
      const auto ckpt = model::load_checkpoint(eval_ckpt);
      const auto scheme = train::parse_scheme(
          !eval_scheme.empty() ? eval_scheme : ckpt.info.extra.value("scheme", std::string("proposed")));
      const auto test_set = train::load_split({eval_data, cfg.registration, cfg.extents}, eval_split);
      if (test_set.empty()) throw std::invalid_argument("--split: no patients in split '" + eval_split + "'");
      const train::ModelSegmenter seg(ckpt.net, scheme, cfg.train.batch_size);
      const auto reports = train::evaluate_rounds(seg, test_set, eval_rounds, eval_cap);
      fs::create_directories(eval_out);
      io::write_file(fs::path(eval_out) / "metrics.jsonl", train::metrics_jsonl(reports));
      io::write_file(fs::path(eval_out) / "dice_by_round.csv", train::dice_by_round_csv(reports));
      for (const auto& r : reports) {
        out << "round " << r.round << " dice_ggo=" << r.classes[0].dsc.mean << " dice_cons=" << r.classes[1].dsc.mean
            << " edits=" << r.edit_count << "\n";
      }
    };
  });

  // serve
  Common serve_common;
  std::string serve_ckpt, serve_dir, serve_scheme;
  std::optional<int> serve_port;
  auto* sv = app.add_subcommand("serve", "HTTP refinement service");
  serve_common.add(sv);
  sv->add_option("--checkpoint", serve_ckpt, "Model checkpoint")->required();
  sv->add_option("--port", serve_port, "Override service.port");
  sv->add_option("--data-dir", serve_dir, "Override service.data_dir");
  sv->add_option("--scheme", serve_scheme, "Input scheme; default is the one stored in the checkpoint");
  sv->callback([&] {
    action = [&] {
      auto cfg = serve_common.load();
      if (serve_port) cfg.service.port = *serve_port;
      if (!serve_dir.empty()) cfg.service.data_dir = serve_dir;
      cfg.service.model_ref = fs::path(serve_ckpt).filename().string();
      cfg.service.validate();
      require_file(serve_ckpt, "--checkpoint");
      const auto ckpt = model::load_checkpoint(serve_ckpt);
      const auto scheme = train::parse_scheme(
          !serve_scheme.empty() ? serve_scheme : ckpt.info.extra.value("scheme", std::string("proposed")));
      auto seg = std::make_shared<train::ModelSegmenter>(ckpt.net, scheme, cfg.service.batch_size);
      service::SessionStore store(cfg.service, seg);
      httplib::Server server;
      service::register_routes(server, store);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      out << "listening on 0.0.0.0:" << cfg.service.port << "\n" << std::flush;
      const bool ok = server.listen("0.0.0.0", cfg.service.port);
      g_server = nullptr;
      if (!ok) throw std::runtime_error("could not listen on port " + std::to_string(cfg.service.port));
    };
  });

  // metrics
  std::string m_pred, m_gt;
  auto* me = app.add_subcommand("metrics", "DSC, PPV, TPR and VD per lesion class");
  me->add_option("--pred", m_pred, "Predicted label volume")->required();
  me->add_option("--gt", m_gt, "Ground-truth label volume")->required();
  me->callback([&] {
    action = [&] {
      require_file(m_pred, "--pred");
      require_file(m_gt, "--gt");
      const auto pred = io::read_label_volume(m_pred);
      const auto gt = io::read_label_volume(m_gt);
      out << json{{"GGO", scores_json(metrics::score(pred, gt, kGGO))},
                  {"CONS", scores_json(metrics::score(pred, gt, kCONS))}}
                 .dump(2)
          << "\n";
    };
  });

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();  // program name
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kUsage;
  }

  try {
    action();
    return kOk;
  } catch (const io::IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const preprocess::StageError& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace longiseg::cli
