#include "tmapath/interactive.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "tmapath/error.hpp"

namespace tmapath {

using nlohmann::json;

std::string correction_to_json_line(const Correction& c) {
  json j{{"spot_id", c.spot_id},
         {"x", c.x},
         {"y", c.y},
         {"label", c.asserted_label == kNucleus ? "nucleus" : "background"},
         {"expert_id", c.expert_id},
         {"timestamp", c.timestamp}};
  return j.dump();
}

Correction correction_from_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    Correction c;
    c.spot_id = j.at("spot_id").get<std::string>();
    c.x = j.at("x").get<int>();
    c.y = j.at("y").get<int>();
    const auto label = j.at("label").get<std::string>();
    if (label == "nucleus" || label == "cancerous-nucleus")
      c.asserted_label = kNucleus;
    else if (label == "background")
      c.asserted_label = kBackground;
    else
      throw DataError("unknown correction label '" + label + "'");
    c.expert_id = j.value("expert_id", "");
    c.timestamp = j.value("timestamp", "");
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed correction: ") + e.what());
  }
}

std::vector<Correction> read_correction_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("unreadable file: " + path.string());
  std::vector<Correction> out;
  std::string line;
  while (std::getline(in, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(correction_from_json_line(line));
  return out;
}

void append_correction_log(const std::filesystem::path& path, const Correction& c) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot append to " + path.string());
  out << correction_to_json_line(c) << '\n';
  out.flush();
  if (!out) throw DataError("write failed for " + path.string());
}

void validate(const OnlineParams& p) {
  if (!(p.beta > 0.0 && p.beta <= 1.0)) throw std::invalid_argument("beta must be in (0, 1]");
  if (!(p.w_min > 0.0)) throw std::invalid_argument("w_min must be positive");
  if (p.k_new < 0 || p.buffer_batch < 1 || p.max_grow_attempts < 1)
    throw std::invalid_argument("online growth parameters out of range");
}

OnlineSessionState make_session(DetectionForest forest, TrainingSet original_data,
                                std::shared_ptr<const SpotLibrary> spots, OnlineParams params) {
  validate(params);
  OnlineSessionState s;
  s.seed = forest.config.rng_seed;
  for (auto& w : forest.weights) w = std::max(w, params.w_min);
  forest.in_bag.clear();
  s.forest = std::move(forest);
  s.original_data = std::move(original_data);
  s.spots = std::move(spots);
  s.params = params;
  return s;
}

Patch resolve_sample(const OnlineSessionState& state, const Correction& c) {
  const auto& src = state.spots->at(c.spot_id);
  return extract_patch(src, {c.x, c.y}, state.forest.window);
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void grow_trees(OnlineSessionState& state, const Patch& trigger_patch, int trigger_label) {
  TrainingSet data = state.original_data;
  std::vector<std::uint32_t> buffer_idx;
  for (const auto& c : state.buffer) {
    buffer_idx.push_back(static_cast<std::uint32_t>(data.size()));
    data.push_back({resolve_sample(state, c), c.asserted_label});
  }
  const double w_new = median(state.forest.weights);
  const int n_classes = std::max(state.forest.n_classes, num_classes(data));
  for (int k = 0; k < state.params.k_new; ++k) {
    const auto tree_index = static_cast<std::uint64_t>(state.forest.trees.size());
    for (int attempt = 0; attempt < state.params.max_grow_attempts; ++attempt) {
      const std::uint64_t base = derive_seed(state.seed, tree_index);
      Rng rng(attempt == 0 ? base : derive_seed(base, static_cast<std::uint64_t>(attempt)));
      std::vector<std::uint32_t> draw;
      if (!state.original_data.empty()) draw = tree_sample(state.original_data, state.forest.config, rng);
      draw.insert(draw.end(), buffer_idx.begin(), buffer_idx.end());
      auto tree = std::make_shared<const DecisionTree>(
          train_tree(data, draw, n_classes, state.forest.config, rng));
      if (tree->vote(trigger_patch) != trigger_label) continue;
      state.forest.trees.push_back(std::move(tree));
      state.forest.weights.push_back(w_new);
      break;
    }
  }
}

}  // namespace

CorrectionOutcome apply_correction(OnlineSessionState& state, const Correction& c) {
  const Patch patch = resolve_sample(state, c);
  if (c.asserted_label < 0 || c.asserted_label >= state.forest.n_classes)
    throw std::invalid_argument("asserted label out of range");
  CorrectionOutcome out;
  out.margin_before = vote_margin(state.forest, patch, c.asserted_label);

  // Copy-on-update: readers holding the previous forest keep a consistent view.
  std::vector<double> weights = state.forest.weights;
  int majority = 0;
  {
    double best = -1.0;
    std::vector<double> tally(static_cast<std::size_t>(state.forest.n_classes), 0.0);
    for (std::size_t t = 0; t < state.forest.trees.size(); ++t) {
      const int v = state.forest.trees[t]->vote(patch);
      tally[static_cast<std::size_t>(v)] += weights[t];
      if (v != c.asserted_label) {
        weights[t] = std::max(state.params.w_min, weights[t] * state.params.beta);
        ++out.trees_penalized;
      }
    }
    for (std::size_t k = 0; k < tally.size(); ++k)
      if (tally[k] > best) {
        best = tally[k];
        majority = static_cast<int>(k);
      }
  }
  state.forest.weights = std::move(weights);

  Correction logged = c;
  logged.predicted_label = majority;
  state.buffer.push_back(std::move(logged));

  const auto before = state.forest.trees.size();
  if (state.params.k_new > 0 && state.buffer.size() % static_cast<std::size_t>(state.params.buffer_batch) == 0)
    grow_trees(state, patch, c.asserted_label);
  out.trees_added = static_cast<int>(state.forest.trees.size() - before);
  out.margin_after = vote_margin(state.forest, patch, c.asserted_label);
  return out;
}

DetectionForest session_loop(OnlineSessionState& state, const std::vector<SessionEvent>& events,
                             const std::function<void(const DetectionForest&)>& on_classify) {
  for (const auto& e : events) {
    if (e.kind == SessionEvent::Kind::stop) break;
    if (e.kind == SessionEvent::Kind::classify_all) {
      if (on_classify) on_classify(state.forest);
      continue;
    }
    apply_correction(state, e.correction);
  }
  return state.forest;
}

std::string session_snapshot_json(const OnlineSessionState& state) {
  json doc;
  doc["forest"] = json::parse(forest_to_json(state.forest));
  doc["buffer"] = json::array();
  for (const auto& c : state.buffer) {
    json j = json::parse(correction_to_json_line(c));
    if (c.predicted_label) j["predicted"] = *c.predicted_label == kNucleus ? "nucleus" : "background";
    doc["buffer"].push_back(std::move(j));
  }
  doc["params"] = {{"beta", state.params.beta},
                   {"k_new", state.params.k_new},
                   {"buffer_batch", state.params.buffer_batch},
                   {"w_min", state.params.w_min}};
  return doc.dump();
}

}  // namespace tmapath
