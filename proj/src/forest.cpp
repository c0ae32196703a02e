#include "tmapath/forest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "tmapath/error.hpp"

namespace tmapath {

namespace {

Rect canonical(Rect r) {
  if (r.x1 > r.x2) std::swap(r.x1, r.x2);
  if (r.y1 > r.y2) std::swap(r.y1, r.y2);
  return r;
}

bool inside(const Rect& r, int window) {
  return r.x1 >= 0 && r.y1 >= 0 && r.x2 <= window && r.y2 <= window;
}

Rect sample_rect(Rng& rng, int window) {
  for (;;) {
    Rect r;
    r.x1 = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(window) + 1));
    r.y1 = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(window) + 1));
    r.x2 = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(window) + 1));
    r.y2 = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(window) + 1));
    r = canonical(r);
    if (r.area() > 0) return r;
  }
}

double gini(const std::vector<std::uint32_t>& counts, std::uint32_t total) {
  if (total == 0) return 0.0;
  double s = 0.0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / total;
    s += p * p;
  }
  return 1.0 - s;
}

class TreeBuilder {
 public:
  TreeBuilder(const TrainingSet& data, int n_classes, const ForestConfig& cfg, Rng& rng)
      : data_(data), n_classes_(n_classes), cfg_(cfg), rng_(rng) {}

  DecisionTree build(std::vector<std::uint32_t> indices) {
    DecisionTree tree;
    grow(tree, std::move(indices), 0);
    return tree;
  }

 private:
  std::vector<std::uint32_t> class_counts(const std::vector<std::uint32_t>& idx) const {
    std::vector<std::uint32_t> counts(static_cast<std::size_t>(n_classes_), 0);
    for (auto i : idx) ++counts[static_cast<std::size_t>(data_[i].label)];
    return counts;
  }

  std::int32_t grow(DecisionTree& tree, std::vector<std::uint32_t> idx, int depth) {
    const auto node_id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    auto counts = class_counts(idx);
    const bool pure =
        std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
    if (depth >= cfg_.max_depth || pure || static_cast<int>(idx.size()) < cfg_.min_samples_split) {
      tree.nodes[static_cast<std::size_t>(node_id)].counts = std::move(counts);
      return node_id;
    }

    const auto n = static_cast<std::uint32_t>(idx.size());
    std::vector<std::uint8_t> outcome(idx.size());
    std::vector<std::uint8_t> best_outcome;
    RelationalFeature best_feature;
    double best_impurity = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg_.n_features_per_node; ++k) {
      const RelationalFeature f{sample_rect(rng_, cfg_.window), sample_rect(rng_, cfg_.window)};
      std::vector<std::uint32_t> true_counts(counts.size(), 0);
      std::uint32_t n_true = 0;
      for (std::size_t s = 0; s < idx.size(); ++s) {
        const auto& sample = data_[idx[s]];
        outcome[s] = eval_feature(f, sample.patch) ? 1 : 0;
        if (outcome[s]) {
          ++n_true;
          ++true_counts[static_cast<std::size_t>(sample.label)];
        }
      }
      if (n_true == 0 || n_true == n) continue;
      std::vector<std::uint32_t> false_counts(counts.size());
      for (std::size_t c = 0; c < counts.size(); ++c) false_counts[c] = counts[c] - true_counts[c];
      const double impurity =
          (n_true * gini(true_counts, n_true) + (n - n_true) * gini(false_counts, n - n_true)) / n;
      if (impurity < best_impurity) {
        best_impurity = impurity;
        best_feature = f;
        best_outcome = outcome;
      }
    }
    if (best_outcome.empty()) {
      tree.nodes[static_cast<std::size_t>(node_id)].counts = std::move(counts);
      return node_id;
    }

    std::vector<std::uint32_t> left, right;
    for (std::size_t s = 0; s < idx.size(); ++s) (best_outcome[s] ? right : left).push_back(idx[s]);
    idx.clear();
    idx.shrink_to_fit();
    const auto f_child = grow(tree, std::move(left), depth + 1);
    const auto t_child = grow(tree, std::move(right), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(node_id)];
    node.feature = best_feature;
    node.child_false = f_child;
    node.child_true = t_child;
    return node_id;
  }

  const TrainingSet& data_;
  int n_classes_;
  const ForestConfig& cfg_;
  Rng& rng_;
};

int depth_from(const DecisionTree& t, std::int32_t id) {
  const auto& node = t.nodes[static_cast<std::size_t>(id)];
  if (node.is_leaf()) return 0;
  return 1 + std::max(depth_from(t, node.child_false), depth_from(t, node.child_true));
}

}  // namespace

RelationalFeature make_feature(Rect r1, Rect r2, int window) {
  r1 = canonical(r1);
  r2 = canonical(r2);
  if (r1.area() == 0 || r2.area() == 0) throw std::invalid_argument("rectangle has zero area");
  if (!inside(r1, window) || !inside(r2, window))
    throw std::invalid_argument("rectangle outside window");
  return {r1, r2};
}

RelationalFeature sample_feature(Rng& rng, int window) {
  RelationalFeature f;
  f.r1 = sample_rect(rng, window);
  f.r2 = sample_rect(rng, window);
  return f;
}

double feature_space_cardinality(int window) {
  if (window < 2) throw std::invalid_argument("window must be >= 2");
  const double side = window - 1;
  const double per_rect = std::pow(side, 4) / 4.0;
  return per_rect * per_rect;
}

const TreeNode& DecisionTree::leaf(const Patch& p) const {
  const TreeNode* node = &nodes.front();
  while (!node->is_leaf())
    node = &nodes[static_cast<std::size_t>(eval_feature(node->feature, p) ? node->child_true
                                                                            : node->child_false)];
  return *node;
}

Eigen::VectorXd DecisionTree::posterior(const Patch& p) const {
  const auto& counts = leaf(p).counts;
  Eigen::VectorXd post(static_cast<Eigen::Index>(counts.size()));
  double total = 0.0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    post(static_cast<Eigen::Index>(c)) = counts[c] + 1.0;
    total += counts[c] + 1.0;
  }
  return post / total;
}

int DecisionTree::vote(const Patch& p) const {
  const auto& counts = leaf(p).counts;
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

int DecisionTree::depth() const { return nodes.empty() ? 0 : depth_from(*this, 0); }

void validate(const ForestConfig& cfg) {
  if (cfg.n_trees < 1 || cfg.max_depth < 0 || cfg.n_features_per_node < 1 ||
      cfg.min_samples_split < 1 || !(cfg.background_subsample_ratio > 0.0))
    throw std::invalid_argument("forest configuration values must be positive");
  if (cfg.window < 1 || cfg.window % 2 == 0) throw std::invalid_argument("window must be odd");
}

bool same_model(const DetectionForest& a, const DetectionForest& b) {
  if (a.window != b.window || a.n_classes != b.n_classes || a.weights != b.weights ||
      a.trees.size() != b.trees.size() || !(a.config == b.config))
    return false;
  for (std::size_t t = 0; t < a.trees.size(); ++t)
    if (!(*a.trees[t] == *b.trees[t])) return false;
  return true;
}

int num_classes(const TrainingSet& data) {
  int k = 2;
  for (const auto& s : data) {
    if (s.label < 0) throw std::invalid_argument("negative class label");
    k = std::max(k, s.label + 1);
  }
  return k;
}

DecisionTree train_tree(const TrainingSet& data, const std::vector<std::uint32_t>& indices,
                        int n_classes, const ForestConfig& cfg, Rng& rng) {
  if (indices.empty()) throw DataError("empty training set");
  validate(cfg);
  for (auto i : indices)
    if (data[i].patch.window() != cfg.window)
      throw std::invalid_argument("training patch window differs from forest window");
  return TreeBuilder(data, n_classes, cfg, rng).build(indices);
}

DecisionTree train_tree(const TrainingSet& data, const ForestConfig& cfg, Rng& rng) {
  std::vector<std::uint32_t> all(data.size());
  std::iota(all.begin(), all.end(), 0u);
  return train_tree(data, all, num_classes(data), cfg, rng);
}

std::vector<std::uint32_t> tree_sample(const TrainingSet& data, const ForestConfig& cfg, Rng& rng) {
  std::vector<std::uint32_t> positives, background;
  for (std::uint32_t i = 0; i < data.size(); ++i)
    (data[i].label == kBackground ? background : positives).push_back(i);
  std::vector<std::uint32_t> draw;
  draw.reserve(positives.size() * 2);
  for (std::size_t k = 0; k < positives.size(); ++k)
    draw.push_back(positives[uniform_index(rng, positives.size())]);
  const auto want = std::min<std::size_t>(
      background.size(),
      static_cast<std::size_t>(std::ceil(cfg.background_subsample_ratio * positives.size())));
  // Partial Fisher-Yates: first `want` entries form a uniform subsample.
  for (std::size_t k = 0; k < want; ++k) {
    const auto j = k + uniform_index(rng, background.size() - k);
    std::swap(background[k], background[j]);
    draw.push_back(background[k]);
  }
  return draw;
}

DetectionForest train_forest(const TrainingSet& data, const ForestConfig& cfg) {
  validate(cfg);
  if (data.empty()) throw DataError("empty training set");
  const bool has_bg = std::any_of(data.begin(), data.end(),
                                  [](const auto& s) { return s.label == kBackground; });
  const bool has_pos = std::any_of(data.begin(), data.end(),
                                   [](const auto& s) { return s.label != kBackground; });
  if (!has_bg || !has_pos) throw DataError("training set needs background and nucleus samples");
  const int n_classes = num_classes(data);

  DetectionForest forest;
  forest.window = cfg.window;
  forest.n_classes = n_classes;
  forest.config = cfg;
  forest.trees.resize(static_cast<std::size_t>(cfg.n_trees));
  forest.in_bag.resize(static_cast<std::size_t>(cfg.n_trees));
  forest.weights.assign(static_cast<std::size_t>(cfg.n_trees), 1.0);

  auto train_one = [&](int t) {
    Rng rng(derive_seed(cfg.rng_seed, static_cast<std::uint64_t>(t)));
    auto draw = tree_sample(data, cfg, rng);
    std::vector<std::uint8_t> bag(data.size(), 0);
    for (auto i : draw) bag[i] = 1;
    forest.in_bag[static_cast<std::size_t>(t)] = std::move(bag);
    forest.trees[static_cast<std::size_t>(t)] =
        std::make_shared<const DecisionTree>(train_tree(data, draw, n_classes, cfg, rng));
  };

  const int workers = std::max(1u, std::thread::hardware_concurrency());
  if (workers == 1 || cfg.n_trees == 1) {
    for (int t = 0; t < cfg.n_trees; ++t) train_one(t);
  } else {
    std::vector<std::future<void>> jobs;
    for (int w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (int t = w; t < cfg.n_trees; t += workers) train_one(t);
      }));
    for (auto& j : jobs) j.get();
  }
  return forest;
}

Eigen::VectorXd predict(const DetectionForest& forest, const Patch& p) {
  if (p.window() != forest.window) throw std::invalid_argument("patch window differs from forest window");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(forest.n_classes);
  double total = 0.0;
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    acc += forest.weights[t] * forest.trees[t]->posterior(p);
    total += forest.weights[t];
  }
  return acc / total;
}

double vote_margin(const DetectionForest& forest, const Patch& p, int label) {
  double agree = 0.0, total = 0.0;
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    total += forest.weights[t];
    if (forest.trees[t]->vote(p) == label) agree += forest.weights[t];
  }
  return (2.0 * agree - total) / total;
}

double oob_error(const DetectionForest& forest, const TrainingSet& data) {
  if (forest.in_bag.size() != forest.trees.size())
    throw std::invalid_argument("forest has no out-of-bag bookkeeping");
  std::size_t evaluated = 0, wrong = 0;
  Eigen::VectorXd votes(forest.n_classes), soft(forest.n_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    votes.setZero();
    soft.setZero();
    bool any = false;
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
      if (forest.in_bag[t].size() != data.size())
        throw std::invalid_argument("out-of-bag bookkeeping does not match the data");
      if (forest.in_bag[t][i]) continue;
      any = true;
      votes(forest.trees[t]->vote(data[i].patch)) += forest.weights[t];
      soft += forest.weights[t] * forest.trees[t]->posterior(data[i].patch);
    }
    if (!any) continue;
    ++evaluated;
    const double top = votes.maxCoeff();
    int pred = -1;
    double best_soft = -1.0;
    for (Eigen::Index c = 0; c < votes.size(); ++c)
      if (votes(c) == top && soft(c) > best_soft) {
        best_soft = soft(c);
        pred = static_cast<int>(c);
      }
    if (pred != data[i].label) ++wrong;
  }
  if (evaluated == 0) throw std::invalid_argument("no out-of-bag sample exists");
  return static_cast<double>(wrong) / static_cast<double>(evaluated);
}

GridResult grid_search_oob(const TrainingSet& data, const std::vector<ForestConfig>& grid) {
  if (grid.empty()) throw std::invalid_argument("empty configuration grid");
  GridResult result;
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    result.oob_errors.push_back(oob_error(train_forest(data, grid[g]), data));
    const auto key = [&](std::size_t k) {
      return std::make_tuple(result.oob_errors[k], grid[k].n_trees, grid[k].max_depth,
                             grid[k].n_features_per_node);
    };
    if (g > 0 && key(g) < key(best)) best = g;
  }
  result.best = grid[best];
  return result;
}

// Serialization ---------------------------------------------------------------

namespace {

using nlohmann::json;

constexpr int kForestFormatVersion = 1;

json config_json(const ForestConfig& c) {
  return {{"n_trees", c.n_trees},
          {"max_depth", c.max_depth},
          {"n_features_per_node", c.n_features_per_node},
          {"window", c.window},
          {"rng_seed", c.rng_seed},
          {"background_subsample_ratio", c.background_subsample_ratio},
          {"min_samples_split", c.min_samples_split}};
}

ForestConfig config_from(const json& j) {
  ForestConfig c;
  c.n_trees = j.at("n_trees").get<int>();
  c.max_depth = j.at("max_depth").get<int>();
  c.n_features_per_node = j.at("n_features_per_node").get<int>();
  c.window = j.at("window").get<int>();
  c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  c.background_subsample_ratio = j.at("background_subsample_ratio").get<double>();
  c.min_samples_split = j.value("min_samples_split", 2);
  return c;
}

}  // namespace

std::string forest_to_json(const DetectionForest& forest) {
  json doc;
  doc["format"] = "tmapath-forest";
  doc["version"] = kForestFormatVersion;
  doc["window"] = forest.window;
  doc["n_classes"] = forest.n_classes;
  doc["seed"] = forest.config.rng_seed;
  doc["config"] = config_json(forest.config);
  doc["weights"] = forest.weights;
  json trees = json::array();
  for (const auto& tree : forest.trees) {
    json nodes = json::array();
    for (const auto& n : tree->nodes) {
      if (n.is_leaf()) {
        nodes.push_back({{"counts", n.counts}});
      } else {
        const auto& f = n.feature;
        nodes.push_back({{"r1", {f.r1.x1, f.r1.y1, f.r1.x2, f.r1.y2}},
                         {"r2", {f.r2.x1, f.r2.y1, f.r2.x2, f.r2.y2}},
                         {"false", n.child_false},
                         {"true", n.child_true}});
      }
    }
    trees.push_back(std::move(nodes));
  }
  doc["trees"] = std::move(trees);
  return doc.dump();
}

DetectionForest forest_from_json(const std::string& text) {
  DetectionForest forest;
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != "tmapath-forest")
      throw DataError("not a forest document");
    if (doc.at("version").get<int>() != kForestFormatVersion)
      throw DataError("unsupported forest format version");
    forest.window = doc.at("window").get<int>();
    forest.n_classes = doc.at("n_classes").get<int>();
    forest.config = config_from(doc.at("config"));
    forest.weights = doc.at("weights").get<std::vector<double>>();
    for (const auto& jt : doc.at("trees")) {
      DecisionTree tree;
      for (const auto& jn : jt) {
        TreeNode n;
        if (jn.contains("counts")) {
          n.counts = jn.at("counts").get<std::vector<std::uint32_t>>();
          if (n.counts.size() != static_cast<std::size_t>(forest.n_classes))
            throw DataError("leaf class count mismatch");
        } else {
          const auto a = jn.at("r1").get<std::array<int, 4>>();
          const auto b = jn.at("r2").get<std::array<int, 4>>();
          n.feature = make_feature({a[0], a[1], a[2], a[3]}, {b[0], b[1], b[2], b[3]}, forest.window);
          n.child_false = jn.at("false").get<std::int32_t>();
          n.child_true = jn.at("true").get<std::int32_t>();
        }
        tree.nodes.push_back(std::move(n));
      }
      const auto size = static_cast<std::int32_t>(tree.nodes.size());
      for (const auto& n : tree.nodes)
        if (!n.is_leaf() && (n.child_false >= size || n.child_true >= size || n.child_true < 0))
          throw DataError("tree child index out of range");
      if (tree.nodes.empty()) throw DataError("empty tree");
      forest.trees.push_back(std::make_shared<const DecisionTree>(std::move(tree)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed forest document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("malformed forest document: ") + e.what());
  }
  if (forest.trees.empty() || forest.weights.size() != forest.trees.size())
    throw DataError("forest needs one weight per tree and at least one tree");
  return forest;
}

void save_forest(const std::string& path, const DetectionForest& forest) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << forest_to_json(forest) << '\n';
}

DetectionForest load_forest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("unreadable file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return forest_from_json(ss.str());
}

}  // namespace tmapath
