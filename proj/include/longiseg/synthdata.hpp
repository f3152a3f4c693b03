#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "longiseg/core.hpp"
#include "longiseg/preprocess.hpp"

// Synthetic longitudinal chest-CT-like phantoms with exact lesion labels.
namespace longiseg::synthdata {

struct SynthConfig {
  std::uint64_t seed = 7;
  std::array<int, 3> shape{64, 64, 64};
  int n_train = 12;
  int n_val = 4;
  int n_test = 6;
  std::array<int, 2> lesion_count_range{3, 6};
  double ggo_share = 0.6;           // probability that a lesion is GGO rather than CONS
  double progression_factor = 1.25;  // lesion radius scale from timepoint 1 to 2
  double deformation = 1.5;          // peak smooth displacement in voxels
  double noise_level = 20.0;         // HU standard deviation of voxel noise
  int vessel_count = 10;
  int mimic_count = 2;               // unlabelled lesion-like blobs, present at both timepoints
  std::array<double, 2> ggo_fraction_range{0.05, 0.30};

  int n_patients() const { return n_train + n_val + n_test; }
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct PatientStats {
  double lung_voxels = 0;
  double ggo_fraction = 0;   // of lung, timepoint 1
  double cons_fraction = 0;
  int ggo_lesions = 0;
  int cons_lesions = 0;
};

struct SynthPatient {
  std::string id;
  std::uint64_t seed = 0;
  preprocess::RawStudy reference;  // timepoint 1, HU
  LabelVolume reference_seg;
  preprocess::RawStudy target;     // timepoint 2
  LabelVolume target_seg;
  PatientStats stats;
};

/// Deterministic in (config, patient_seed). Lesions are confined to the lung and CONS
/// overrides GGO where they overlap.
SynthPatient generate_patient(const SynthConfig& cfg, std::uint64_t patient_seed);

/// Per-patient seed derived from the dataset seed.
std::uint64_t patient_seed(const SynthConfig& cfg, int index);

/// Writes <dir>/<id>/{ref,ref_seg,ref_lung,target,target_seg,target_lung}.nii.gz and
/// <dir>/manifest.json. Returns the manifest.
nlohmann::json generate_dataset(const SynthConfig& cfg, const std::filesystem::path& dir);

}  // namespace longiseg::synthdata
