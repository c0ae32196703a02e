#include "tmapath/survival_data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "tmapath/error.hpp"

namespace tmapath {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": not a number '" + s + "'");
  }
}

}  // namespace

void validate(const SurvivalRecord& r) {
  if (!(r.time > 0.0) || !std::isfinite(r.time))
    throw DataError("non-positive survival time for patient '" + r.patient_id + "'");
  if (r.event != 0 && r.event != 1)
    throw DataError("event indicator must be 0 or 1 for patient '" + r.patient_id + "'");
}

SurvivalTable parse_survival_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("survival table is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "patient_id" || header[1] != "time_months" ||
      header[2] != "event")
    throw DataError("survival table header must start with patient_id,time_months,event");
  SurvivalTable table;
  table.covariate_names.assign(header.begin() + 3, header.end());
  const auto p = table.covariate_names.size();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields");
    SurvivalRecord r;
    r.patient_id = fields[0];
    r.time = parse_double(fields[1], line_no);
    const double ev = parse_double(fields[2], line_no);
    r.event = ev == 1.0 ? 1 : (ev == 0.0 ? 0 : -1);
    r.covariates.resize(static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < p; ++j)
      r.covariates(static_cast<Eigen::Index>(j)) = parse_double(fields[3 + j], line_no);
    validate(r);
    table.records.push_back(std::move(r));
  }
  return table;
}

SurvivalTable read_survival_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("unreadable file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_survival_csv(ss.str());
}

std::string survival_csv(const SurvivalTable& table) {
  std::ostringstream out;
  out.precision(17);
  out << "patient_id,time_months,event";
  for (const auto& n : table.covariate_names) out << ',' << n;
  out << '\n';
  for (const auto& r : table.records) {
    out << r.patient_id << ',' << r.time << ',' << r.event;
    for (Eigen::Index j = 0; j < r.covariates.size(); ++j) out << ',' << r.covariates(j);
    out << '\n';
  }
  return out.str();
}

Eigen::MatrixXd covariate_matrix(const std::vector<SurvivalRecord>& records) {
  if (records.empty()) return {};
  const auto p = records.front().covariates.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()), p);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].covariates.size() != p) throw DataError("inconsistent covariate dimension");
    x.row(static_cast<Eigen::Index>(i)) = records[i].covariates.transpose();
  }
  return x;
}

}  // namespace tmapath
