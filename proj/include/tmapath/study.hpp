#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tmapath/detection.hpp"
#include "tmapath/forest.hpp"
#include "tmapath/staining.hpp"
#include "tmapath/survival.hpp"
#include "tmapath/survival_data.hpp"

namespace tmapath {

inline constexpr const char* kCodeVersion = "tmapath 0.1.0";

struct StudyConfig {
  std::filesystem::path spots_dir;        // one PNG/TIFF per spot, file stem = spot id
  std::filesystem::path annotations_dir;  // <spot_id>.json expert annotations
  std::filesystem::path survival_csv;
  std::filesystem::path output_dir;
  /// Load this forest instead of training when set.
  std::optional<std::filesystem::path> forest_path;
  ForestConfig forest;
  /// When non-empty, the forest config is chosen by OOB grid search.
  std::vector<ForestConfig> forest_grid;
  DetectConfig detect;
  /// Background samples closer than this to an annotated nucleus are dropped.
  double negative_min_distance = 10.0;
  double staining_radius = 6.0;
  int staining_bins = 8;
  SplitSpec split;
  std::uint64_t seed = 1;
};

/// Throws ConfigError for unusable paths or parameters, before any compute.
void validate(const StudyConfig& cfg);

struct QuarantinedSpot {
  std::string spot_id;
  std::string stage;
  std::string message;
};

struct StudyResult {
  std::vector<PatientStaining> staining;
  /// Patients entering the split, in split input order.
  std::vector<std::string> split_patients;
  std::vector<std::string> low_group;
  std::vector<std::string> high_group;
  KaplanMeierCurve km_low;
  KaplanMeierCurve km_high;
  LogRankResult log_rank;
  std::vector<QuarantinedSpot> quarantined;
  int n_spots = 0;
  int n_processed = 0;
  std::vector<std::string> excluded;  // "<patient>: reason"
  std::string provenance_json;
  std::shared_ptr<const DetectionForest> forest;
};

/// Spot ids (sorted) with the image path for each.
std::vector<std::pair<std::string, std::filesystem::path>> list_spots(const std::filesystem::path& dir);

/// Annotated spots for training: positives at nucleus centers, background at
/// filtered Voronoi vertices. Spots whose tessellation is degenerate are
/// skipped.
TrainingSet build_training_set(const StudyConfig& cfg);

StainingModel build_staining_model(const StudyConfig& cfg);

/// Train (or load) the forest, detect per spot with per-spot quarantine,
/// quantify staining per patient, split, and compare groups. Everything is
/// written to cfg.output_dir; study_result.json is byte-identical across runs
/// with the same config, while wall-clock times go to run_log.json.
StudyResult run_study(const StudyConfig& cfg);

std::string study_result_json(const StudyResult& r);
std::string study_config_json(const StudyConfig& cfg);

struct SyntheticStudyParams {
  int n_patients = 200;
  int spot_size = 256;
  int discs_per_spot = 10;
  int n_annotated = 8;         // spots with expert annotations for training
  bool planted_effect = true;  // high staining doubles the hazard
  double hazard_ratio = 2.0;
  double alpha = 1.5;
  double lambda = 2.0;
  double censoring_fraction = 0.2;
};

/// Writes spots/, annotations/ and survival.csv under `root`. Patients in the
/// first half carry 10-40% stained nuclei, the rest 60-90%. With the effect
/// planted, the high half has hazard multiplied by hazard_ratio; without it,
/// survival times are dealt in identical pairs to one low and one high
/// patient so both groups share the same survival distribution exactly.
StudyConfig generate_synthetic_study(const std::filesystem::path& root, const SyntheticStudyParams& params,
                                     std::uint64_t seed);

}  // namespace tmapath
