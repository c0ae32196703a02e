#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tmapath/image.hpp"
#include "tmapath/random.hpp"

namespace tmapath {

/// Axis-aligned rectangle covering window pixels [x1, x2) x [y1, y2).
/// Corners are lattice coordinates in [0, w].
struct Rect {
  int x1 = 0, y1 = 0, x2 = 1, y2 = 1;

  long area() const { return static_cast<long>(x2 - x1) * (y2 - y1); }
  bool operator==(const Rect&) const = default;
};

/// Boolean relation between the mean intensities of two rectangles.
struct RelationalFeature {
  Rect r1, r2;
  bool operator==(const RelationalFeature&) const = default;
};

/// Canonicalizes corner order; throws std::invalid_argument for zero-area
/// rectangles or corners outside [0, window].
RelationalFeature make_feature(Rect r1, Rect r2, int window);

/// 1 iff mean(R1) < mean(R2). Compared by cross-multiplication of sums and
/// areas so the outcome is invariant under positive affine intensity maps.
inline bool eval_feature(const RelationalFeature& f, const Patch& p) {
  const double s1 = p.rect_sum(f.r1.x1, f.r1.y1, f.r1.x2 - 1, f.r1.y2 - 1);
  const double s2 = p.rect_sum(f.r2.x1, f.r2.y1, f.r2.x2 - 1, f.r2.y2 - 1);
  return s1 * static_cast<double>(f.r2.area()) < s2 * static_cast<double>(f.r1.area());
}

/// Corner coordinates drawn uniformly from [0, w]; zero-area draws resampled.
RelationalFeature sample_feature(Rng& rng, int window);

/// ((w-1)^4 / 4)^2 as a real number; follows the counting convention where each
/// rectangle has (w-1)^4 corner tuples and flips are divided out per pair.
/// Not integral for small w (w = 2 gives 1/16).
double feature_space_cardinality(int window);

struct TreeNode {
  RelationalFeature feature;
  std::int32_t child_false = -1;
  std::int32_t child_true = -1;
  std::vector<std::uint32_t> counts;  // leaf only

  bool is_leaf() const { return child_false < 0; }
  bool operator==(const TreeNode&) const = default;
};

/// Flat binary tree; node 0 is the root.
struct DecisionTree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf(const Patch& p) const;
  /// Laplace-smoothed leaf distribution (count + 1) / (total + K).
  Eigen::VectorXd posterior(const Patch& p) const;
  /// Argmax of the leaf distribution; ties resolve to the lower class index.
  int vote(const Patch& p) const;
  int depth() const;
  bool operator==(const DecisionTree&) const = default;
};

struct ForestConfig {
  int n_trees = 30;
  int max_depth = 12;
  int n_features_per_node = 64;
  int window = 65;
  std::uint64_t rng_seed = 1;
  /// Background samples drawn per tree as a multiple of the positive count.
  double background_subsample_ratio = 2.0;
  int min_samples_split = 2;

  bool operator==(const ForestConfig&) const = default;
};

void validate(const ForestConfig& cfg);

struct LabeledPatch {
  Patch patch;
  int label = 0;  // 0 = background, 1 = nucleus
};

using TrainingSet = std::vector<LabeledPatch>;

/// Background label; all other labels are bootstrapped as positives.
inline constexpr int kBackground = 0;
inline constexpr int kNucleus = 1;

struct DetectionForest {
  std::vector<std::shared_ptr<const DecisionTree>> trees;
  std::vector<double> weights;
  int window = 65;
  int n_classes = 2;
  ForestConfig config;
  /// Per tree, per training sample: 1 if the sample was in the tree's training
  /// draw. Only populated by train_forest; not serialized.
  std::vector<std::vector<std::uint8_t>> in_bag;

  std::size_t size() const { return trees.size(); }
};

/// Structural and weight equality; ignores in-bag bookkeeping.
bool same_model(const DetectionForest& a, const DetectionForest& b);

int num_classes(const TrainingSet& data);

/// Trains on every sample of `data` (no bootstrap).
DecisionTree train_tree(const TrainingSet& data, const ForestConfig& cfg, Rng& rng);

/// Trains on the multiset `indices` of `data` (repeats allowed).
DecisionTree train_tree(const TrainingSet& data, const std::vector<std::uint32_t>& indices,
                        int n_classes, const ForestConfig& cfg, Rng& rng);

/// Per-tree draw: bootstrap of positives plus a uniform background subsample
/// without replacement. Tree t uses Rng(derive_seed(cfg.rng_seed, t)); trees
/// are trained concurrently and the result equals sequential training.
DetectionForest train_forest(const TrainingSet& data, const ForestConfig& cfg);

/// The training draw train_forest uses for tree index `t`.
std::vector<std::uint32_t> tree_sample(const TrainingSet& data, const ForestConfig& cfg, Rng& rng);

/// Weighted mean of per-tree leaf distributions, normalized to sum 1.
/// Throws std::invalid_argument on window mismatch.
Eigen::VectorXd predict(const DetectionForest& forest, const Patch& p);

/// Weighted vote margin for `label`: (W_agree - W_disagree) / W_total.
double vote_margin(const DetectionForest& forest, const Patch& p, int label);

/// Out-of-bag misclassification rate using weighted hard votes of the trees
/// that did not see each sample (ties broken by the averaged distribution).
/// Throws std::invalid_argument if no sample is out of bag for any tree.
double oob_error(const DetectionForest& forest, const TrainingSet& data);

struct GridResult {
  ForestConfig best;
  std::vector<double> oob_errors;  // per grid entry
};

/// Minimizes OOB error; ties prefer fewer trees, then smaller depth, then
/// fewer features per node, then grid order.
GridResult grid_search_oob(const TrainingSet& data, const std::vector<ForestConfig>& grid);

std::string forest_to_json(const DetectionForest& forest);
DetectionForest forest_from_json(const std::string& text);
void save_forest(const std::string& path, const DetectionForest& forest);
DetectionForest load_forest(const std::string& path);

}  // namespace tmapath
