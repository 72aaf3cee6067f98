#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pivodl/data.hpp"

namespace pivodl {

enum class LossKind { kLogistic, kSquaredError };

LossKind parse_loss(const std::string& name);
std::string to_string(LossKind loss);

struct GradHess {
  double g = 0.0;
  double h = 0.0;
  std::int64_t sample_id = -1;
};

double sigmoid(double x);

// Maps a raw score to the prediction space: sigmoid for logistic loss,
// identity for squared error.
double activation(LossKind loss, double raw);

// Throws std::domain_error when a logistic label is not in {0, 1}.
GradHess compute_grad_hess(LossKind loss, double label, double prev_raw_prediction,
                           std::int64_t sample_id = -1);

struct NodeStats {
  double G = 0.0;
  double H = 0.0;
  std::int64_t count = 0;

  NodeStats operator-(const NodeStats& o) const { return {G - o.G, H - o.H, count - o.count}; }
  NodeStats operator+(const NodeStats& o) const { return {G + o.G, H + o.H, count + o.count}; }
};

// Cut values for one feature. A sample with value x belongs to bucket
// #{t : t <= x}; the candidate split at index k sends x < thresholds[k] left.
struct BucketThresholds {
  int feature_id = 0;
  std::vector<double> thresholds;

  int bucket_of(double x) const;
};

// Empirical quantiles at k / bucket_count (linear interpolation between
// order statistics), deduplicated; cuts at or below the minimum are dropped
// because they cannot send any sample left.
BucketThresholds build_buckets(std::span<const double> feature_values, int bucket_count, int feature_id = 0);

// Half the similarity gain of splitting `parent` into `left` and the
// complement, minus gamma.
double split_gain(const NodeStats& left, const NodeStats& parent, double lambda, double gamma);

double leaf_weight(const NodeStats& stats, double lambda);

struct BoostingConfig {
  LossKind loss = LossKind::kLogistic;
  int trees = 5;
  int max_depth = 3;
  double learning_rate = 0.3;
  double lambda = 1.0;
  double gamma = 0.0;
  int buckets = 32;
  int min_node_samples = 10;  // nodes with fewer samples become leaves
  double base_prediction = 0.0;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Privacy-labelled tree. Internal nodes carry only (source client, record id);
// leaves point into one split client's received lookup table.

enum class Branch : std::uint8_t { kLeft = 0, kRight = 1, kRoot = 2 };

struct RecordRef {
  int source_client = -1;
  int record_id = -1;

  auto operator<=>(const RecordRef&) const = default;
};

struct LeafRef {
  int holder_client = -1;
  int tree = -1;
  int node = -1;
  RecordRef parent;  // {-1, -1} for a root leaf
  Branch branch = Branch::kRoot;

  auto operator<=>(const LeafRef&) const = default;
};

enum class NodeKind : std::uint8_t { kInternal, kLeaf };

struct TreeNode {
  NodeKind kind = NodeKind::kLeaf;
  RecordRef owner;  // internal only
  LeafRef leaf;     // leaf only
  int left = -1;
  int right = -1;
  int depth = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct Ensemble {
  std::vector<Tree> trees;
  double learning_rate = 0.3;
  double base_prediction = 0.0;
  LossKind loss = LossKind::kLogistic;
};

using RouteFn = std::function<Branch(const RecordRef&)>;
using LeafValueFn = std::function<double(const LeafRef&)>;

// Walks every tree with `route` deciding each internal node and `leaf_value`
// resolving each reached leaf; returns base + lr * sum of leaf values.
double predict_raw(const Ensemble& ensemble, const RouteFn& route, const LeafValueFn& leaf_value);

// ---------------------------------------------------------------------------
// Centralized reference trainer.

struct ReferenceNode {
  bool leaf = true;
  int feature = -1;
  int threshold_index = -1;
  double threshold = 0.0;
  double weight = 0.0;
  NodeStats stats;
  int left = -1;
  int right = -1;
  int depth = 0;
};

struct ReferenceTree {
  std::vector<ReferenceNode> nodes;
};

struct ReferenceEnsemble {
  std::vector<ReferenceTree> trees;
  std::vector<BucketThresholds> buckets;  // [feature]
  double learning_rate = 0.3;
  double base_prediction = 0.0;
  LossKind loss = LossKind::kLogistic;
};

struct CentralizedOptions {
  // Candidate evaluation order for tie-breaking; empty means ascending
  // feature id. Ties between equal gains go to the earliest candidate.
  std::vector<int> feature_order;
  bool parallel = true;
  // When positive, gradients are rounded to a 2^-bits grid and summed as
  // exact integers, as the federated protocol does. Mathematically tied
  // candidates then stay tied instead of being split by rounding order.
  int fixed_point_bits = 0;
};

// Single-machine XGBoost over `rows` of `data` using the same bucket
// thresholds, gain and stopping rules as the federated protocol.
ReferenceEnsemble centralized_train(const Dataset& data, std::span<const int> rows, const BoostingConfig& config,
                                    const CentralizedOptions& options = {});

// Raw score for a full feature vector. Throws std::out_of_range if the
// sample lacks a feature used by the ensemble.
double predict_raw(const ReferenceEnsemble& ensemble, std::span<const double> sample);

std::vector<double> feature_row(const Dataset& data, int row);

}  // namespace pivodl
