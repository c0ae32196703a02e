#include "tmapath/expert_panel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "tmapath/error.hpp"

namespace tmapath {

LabelMatrix::LabelMatrix(std::vector<std::string> object_ids, std::vector<std::string> expert_ids)
    : objects(std::move(object_ids)),
      experts(std::move(expert_ids)),
      labels(Raster<std::int8_t>::Constant(static_cast<Eigen::Index>(objects.size()),
                                           static_cast<Eigen::Index>(experts.size()), kMissing)),
      confidence(labels) {}

void LabelMatrix::set(Eigen::Index object, Eigen::Index expert, NucleusClass label, Confidence conf) {
  labels(object, expert) = label == NucleusClass::cancerous ? 1 : 0;
  confidence(object, expert) = static_cast<std::int8_t>(conf);
}

void validate(const LabelMatrix& m) {
  if (m.labels.rows() != static_cast<Eigen::Index>(m.objects.size()) ||
      m.labels.cols() != static_cast<Eigen::Index>(m.experts.size()) ||
      m.confidence.rows() != m.labels.rows() || m.confidence.cols() != m.labels.cols())
    throw std::invalid_argument("label matrix dimensions inconsistent");
  if (((m.labels == kMissing) != (m.confidence == kMissing)).any())
    throw std::invalid_argument("confidence must be present exactly where a label is present");
}

std::vector<Vote> majority_vote(const LabelMatrix& m) {
  validate(m);
  std::vector<Vote> out;
  out.reserve(static_cast<std::size_t>(m.n_objects()));
  for (Eigen::Index i = 0; i < m.n_objects(); ++i) {
    const int cancerous = (m.labels.row(i) == 1).count();
    const int benign = (m.labels.row(i) == 0).count();
    const int cast = cancerous + benign;
    if (cast == 0) throw std::invalid_argument("object '" + m.objects[static_cast<std::size_t>(i)] + "' has no label");
    Vote v;
    v.votes_cast = cast;
    v.margin = static_cast<double>(std::abs(cancerous - benign)) / cast;
    v.label = cancerous > benign ? VoteLabel::cancerous
                                 : (benign > cancerous ? VoteLabel::benign : VoteLabel::disputed);
    out.push_back(v);
  }
  return out;
}

AgreementReport agreement_report(const LabelMatrix& m, const std::vector<RepeatPair>& repeats) {
  validate(m);
  AgreementReport r;
  for (Eigen::Index i = 0; i < m.n_objects(); ++i) {
    const int cancerous = (m.labels.row(i) == 1).count();
    const int benign = (m.labels.row(i) == 0).count();
    if (cancerous > 0 && benign == 0)
      ++r.n_unanimous_cancerous;
    else if (benign > 0 && cancerous == 0)
      ++r.n_unanimous_benign;
    else
      ++r.n_disputed;
  }
  std::vector<int> total(static_cast<std::size_t>(m.n_experts()), 0), flips(total);
  int all_flips = 0;
  for (const auto& rep : repeats) {
    if (rep.object < 0 || rep.object >= m.n_objects() || rep.expert < 0 || rep.expert >= m.n_experts())
      throw std::invalid_argument("repeat references an unknown object or expert");
    const auto e = static_cast<std::size_t>(rep.expert);
    ++total[e];
    const int a = rep.first == NucleusClass::cancerous ? 1 : 0;
    const int b = rep.second == NucleusClass::cancerous ? 1 : 0;
    if (a != b) {
      ++flips[e];
      ++all_flips;
    }
    ++r.confusion[static_cast<std::size_t>(rep.first_confidence)](a, b);
  }
  for (std::size_t e = 0; e < total.size(); ++e)
    r.intra_error.push_back(total[e] ? static_cast<double>(flips[e]) / total[e]
                                     : std::numeric_limits<double>::quiet_NaN());
  r.overall_intra_error = repeats.empty() ? 0.0 : static_cast<double>(all_flips) / repeats.size();
  return r;
}

std::string agreement_report_json(const AgreementReport& r, const LabelMatrix& m) {
  nlohmann::json doc;
  doc["n_objects"] = m.n_objects();
  doc["n_unanimous_benign"] = r.n_unanimous_benign;
  doc["n_unanimous_cancerous"] = r.n_unanimous_cancerous;
  doc["n_disputed"] = r.n_disputed;
  doc["overall_intra_error"] = r.overall_intra_error;
  doc["intra_error"] = nlohmann::json::object();
  for (std::size_t e = 0; e < r.intra_error.size(); ++e)
    doc["intra_error"][m.experts[e]] =
        std::isnan(r.intra_error[e]) ? nlohmann::json(nullptr) : nlohmann::json(r.intra_error[e]);
  const std::array<Confidence, 3> levels{Confidence::certainly, Confidence::probably, Confidence::maybe};
  for (std::size_t c = 0; c < levels.size(); ++c) {
    const auto& t = r.confusion[c];
    doc["confusion"][to_string(levels[c])] = {{t(0, 0), t(0, 1)}, {t(1, 0), t(1, 1)}};
  }
  return doc.dump(2);
}

std::vector<Point2d> gold_standard(const std::vector<std::vector<Point2d>>& per_expert,
                                   double match_radius, int quorum) {
  if (per_expert.size() < 2) throw std::invalid_argument("gold standard needs at least two experts");
  if (quorum < 1 || quorum > static_cast<int>(per_expert.size()))
    throw std::invalid_argument("quorum must be in [1, number of experts]");
  struct Mark {
    Point2d p;
    std::size_t expert;
  };
  std::vector<Mark> marks;
  for (std::size_t e = 0; e < per_expert.size(); ++e)
    for (const auto& p : per_expert[e]) marks.push_back({p, e});

  std::vector<std::size_t> parent(marks.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < marks.size(); ++i)
    for (std::size_t j = i + 1; j < marks.size(); ++j)
      if ((marks[i].p - marks[j].p).norm() <= match_radius) {
        const auto a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }

  std::map<std::size_t, std::vector<std::size_t>> clusters;  // keyed by smallest member index
  for (std::size_t i = 0; i < marks.size(); ++i) clusters[find(i)].push_back(i);
  std::vector<Point2d> out;
  for (const auto& [root, members] : clusters) {
    std::vector<bool> seen(per_expert.size(), false);
    Point2d sum = Point2d::Zero();
    for (auto i : members) {
      seen[marks[i].expert] = true;
      sum += marks[i].p;
    }
    if (std::count(seen.begin(), seen.end(), true) >= quorum)
      out.push_back(sum / static_cast<double>(members.size()));
  }
  return out;
}

DispersionResult staining_dispersion(const Eigen::MatrixXd& estimates) {
  const Eigen::Index n = estimates.rows();
  if (n < 2) throw std::invalid_argument("dispersion fit needs at least two spots");
  DispersionResult r;
  r.mean.resize(n);
  r.sd.resize(n);
  for (Eigen::Index s = 0; s < n; ++s) {
    double sum = 0.0;
    int k = 0;
    for (Eigen::Index e = 0; e < estimates.cols(); ++e)
      if (!std::isnan(estimates(s, e))) {
        sum += estimates(s, e);
        ++k;
      }
    if (k < 2) throw std::invalid_argument("every spot needs at least two expert estimates");
    const double mean = sum / k;
    double ss = 0.0;
    for (Eigen::Index e = 0; e < estimates.cols(); ++e)
      if (!std::isnan(estimates(s, e))) ss += (estimates(s, e) - mean) * (estimates(s, e) - mean);
    r.mean(s) = mean;
    r.sd(s) = std::sqrt(ss / (k - 1));
  }
  r.max_sd = r.sd.maxCoeff();
  Eigen::MatrixXd design(n, 2);
  design.col(0) = r.mean;
  design.col(1).setOnes();
  const double spread = (r.mean.array() - r.mean.mean()).square().sum();
  if (spread > 0.0) {
    const Eigen::Vector2d coef = design.colPivHouseholderQr().solve(r.sd);
    r.slope = coef(0);
    r.intercept = coef(1);
  } else {
    r.slope = 0.0;
    r.intercept = r.sd.mean();
  }
  return r;
}

LabelTable parse_label_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("label table is empty");
  if (line.rfind("object_id,expert_id,label,confidence", 0) != 0)
    throw DataError("label table header must be object_id,expert_id,label,confidence,session");
  struct Row {
    std::string object, expert, label, confidence, session;
  };
  std::vector<Row> rows;
  std::vector<std::string> objects, experts;
  std::map<std::string, Eigen::Index> object_index, expert_index;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    Row r;
    std::getline(ls, r.object, ',');
    std::getline(ls, r.expert, ',');
    std::getline(ls, r.label, ',');
    std::getline(ls, r.confidence, ',');
    std::getline(ls, r.session, ',');
    if (r.object.empty() || r.expert.empty()) throw DataError("label row without object or expert id");
    if (!object_index.count(r.object)) {
      object_index[r.object] = static_cast<Eigen::Index>(objects.size());
      objects.push_back(r.object);
    }
    if (!expert_index.count(r.expert)) {
      expert_index[r.expert] = static_cast<Eigen::Index>(experts.size());
      experts.push_back(r.expert);
    }
    rows.push_back(std::move(r));
  }
  LabelTable table{LabelMatrix(objects, experts), {}};
  std::map<std::pair<Eigen::Index, Eigen::Index>, std::string> first_session;
  for (const auto& r : rows) {
    const auto oi = object_index.at(r.object), ei = expert_index.at(r.expert);
    if (r.label.empty() || r.label == "missing") continue;
    const auto cls = parse_nucleus_class(r.label);
    const auto conf = parse_confidence(r.confidence);
    const auto key = std::make_pair(oi, ei);
    if (!first_session.count(key)) {
      first_session[key] = r.session;
      table.matrix.set(oi, ei, cls, conf);
    } else if (first_session[key] != r.session) {
      const auto first = table.matrix.labels(oi, ei) == 1 ? NucleusClass::cancerous : NucleusClass::benign;
      const auto first_conf = static_cast<Confidence>(table.matrix.confidence(oi, ei));
      table.repeats.push_back({oi, ei, first, cls, first_conf});
    }
  }
  return table;
}

}  // namespace tmapath
