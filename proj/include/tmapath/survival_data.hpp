#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tmapath {

/// Right-censored observation: event = 1 death observed, 0 censored.
struct SurvivalRecord {
  std::string patient_id;
  double time = 1.0;  // months, > 0
  int event = 0;
  Eigen::VectorXd covariates;

  bool operator==(const SurvivalRecord& o) const {
    return patient_id == o.patient_id && time == o.time && event == o.event &&
           covariates.size() == o.covariates.size() && covariates == o.covariates;
  }
};

struct SurvivalTable {
  std::vector<std::string> covariate_names;
  std::vector<SurvivalRecord> records;
};

/// Throws DataError when a record violates time > 0 or event in {0,1}.
void validate(const SurvivalRecord& r);

/// CSV with header patient_id,time_months,event,cov_1,...,cov_p.
SurvivalTable read_survival_csv(const std::filesystem::path& path);
SurvivalTable parse_survival_csv(const std::string& text);
std::string survival_csv(const SurvivalTable& table);

/// Covariates of all records stacked as an n x p matrix.
Eigen::MatrixXd covariate_matrix(const std::vector<SurvivalRecord>& records);

}  // namespace tmapath
