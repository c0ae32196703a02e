#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tmapath/annotation.hpp"
#include "tmapath/image.hpp"

namespace tmapath {

/// n objects x D experts. Label codes: -1 missing, 0 benign, 1 cancerous.
/// Confidence codes: -1 missing, 0 certainly, 1 probably, 2 maybe.
struct LabelMatrix {
  std::vector<std::string> objects;
  std::vector<std::string> experts;
  Raster<std::int8_t> labels;
  Raster<std::int8_t> confidence;

  LabelMatrix() = default;
  LabelMatrix(std::vector<std::string> object_ids, std::vector<std::string> expert_ids);

  Eigen::Index n_objects() const { return labels.rows(); }
  Eigen::Index n_experts() const { return labels.cols(); }
  void set(Eigen::Index object, Eigen::Index expert, NucleusClass label, Confidence conf);
};

inline constexpr std::int8_t kMissing = -1;

/// Throws std::invalid_argument if a label lacks a confidence or vice versa.
void validate(const LabelMatrix& m);

enum class VoteLabel { benign, cancerous, disputed };

struct Vote {
  VoteLabel label = VoteLabel::disputed;
  double margin = 0.0;  // (winner - runner-up) / votes cast
  int votes_cast = 0;
};

/// Plurality over non-missing labels; an exact tie is "disputed". Throws
/// std::invalid_argument for a row without any label.
std::vector<Vote> majority_vote(const LabelMatrix& m);

/// One object labeled twice by the same expert.
struct RepeatPair {
  Eigen::Index object;
  Eigen::Index expert;
  NucleusClass first;
  NucleusClass second;
  Confidence first_confidence = Confidence::certainly;
};

struct AgreementReport {
  int n_unanimous_benign = 0;
  int n_unanimous_cancerous = 0;
  int n_disputed = 0;
  /// Per expert; NaN when the expert has no repeated object.
  std::vector<double> intra_error;
  double overall_intra_error = 0.0;
  /// confusion[c](first, second) counts repeat outcomes for first-trial
  /// confidence c; index 0 benign, 1 cancerous.
  std::array<Eigen::Matrix2i, 3> confusion{Eigen::Matrix2i::Zero(), Eigen::Matrix2i::Zero(),
                                          Eigen::Matrix2i::Zero()};
};

/// Confidence is reported only; it never weights any statistic.
AgreementReport agreement_report(const LabelMatrix& m, const std::vector<RepeatPair>& repeats);

std::string agreement_report_json(const AgreementReport& r, const LabelMatrix& m);

/// Single-linkage clustering of all expert marks at match_radius; clusters
/// marked by at least `quorum` distinct experts are returned as centroids.
std::vector<Point2d> gold_standard(const std::vector<std::vector<Point2d>>& per_expert,
                                   double match_radius, int quorum = 2);

struct DispersionResult {
  Eigen::VectorXd mean;  // per spot
  Eigen::VectorXd sd;    // per spot, sample standard deviation
  double slope = 0.0;    // sd ~ slope * mean + intercept
  double intercept = 0.0;
  double max_sd = 0.0;
};

/// Rows are spots, columns experts; NaN marks a missing estimate. Throws
/// std::invalid_argument for fewer than two spots or a spot with fewer than
/// two estimates.
DispersionResult staining_dispersion(const Eigen::MatrixXd& estimates);

/// CSV object_id,expert_id,label,confidence,session. The first occurrence of
/// an (object, expert) pair fills the matrix; a later occurrence from another
/// session becomes a RepeatPair.
struct LabelTable {
  LabelMatrix matrix;
  std::vector<RepeatPair> repeats;
};
LabelTable parse_label_csv(const std::string& text);

}  // namespace tmapath
