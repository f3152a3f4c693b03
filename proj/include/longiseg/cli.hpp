#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "longiseg/model.hpp"
#include "longiseg/service.hpp"
#include "longiseg/synthdata.hpp"
#include "longiseg/train.hpp"

namespace longiseg::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,    // bad flags or invalid configuration
  kIo = 3,       // missing or unreadable files
  kRuntime = 4,  // anything that failed while running
};

/// One file for every command:
/// {"synth":{...},"model":{...},"train":{...},"data":{"registration","extents"},"service":{...}}.
/// Sections are optional; unknown sections and unknown fields are errors.
struct Config {
  synthdata::SynthConfig synth;
  model::BackboneConfig model = model::BackboneConfig::preset("fc-densenet-desk");
  train::TrainConfig train;
  std::string registration = "affine";
  std::array<int, 3> extents{64, 64, 64};
  service::ServiceConfig service;

  /// Sets the synth, model and train seeds.
  void set_seed(std::uint64_t seed);
  void validate() const;
};

void to_json(nlohmann::json& j, const Config& c);
void from_json(const nlohmann::json& j, Config& c);
Config load_config(const std::filesystem::path& path);

/// Runs one command; argv[0] is the program name. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace longiseg::cli
