#include "pivodl/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pivodl/kernels.hpp"

namespace pivodl {

LossKind parse_loss(const std::string& name) {
  if (name == "logistic" || name == "logistic-binary" || name == "binary") return LossKind::kLogistic;
  if (name == "squared" || name == "squared-error" || name == "regression") return LossKind::kSquaredError;
  throw std::invalid_argument("unknown loss '" + name + "' (expected logistic or squared)");
}

std::string to_string(LossKind loss) {
  return loss == LossKind::kLogistic ? "logistic" : "squared";
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double activation(LossKind loss, double raw) { return loss == LossKind::kLogistic ? sigmoid(raw) : raw; }

GradHess compute_grad_hess(LossKind loss, double label, double prev_raw_prediction, std::int64_t sample_id) {
  if (loss == LossKind::kLogistic) {
    if (label != 0.0 && label != 1.0) throw std::domain_error("logistic loss requires labels in {0, 1}");
    const double p = sigmoid(prev_raw_prediction);
    return {p - label, p * (1.0 - p), sample_id};
  }
  return {prev_raw_prediction - label, 1.0, sample_id};
}

int BucketThresholds::bucket_of(double x) const {
  return static_cast<int>(std::upper_bound(thresholds.begin(), thresholds.end(), x) - thresholds.begin());
}

BucketThresholds build_buckets(std::span<const double> feature_values, int bucket_count, int feature_id) {
  if (bucket_count < 2) throw std::invalid_argument("bucket_count must be at least 2");
  if (feature_values.empty()) throw std::invalid_argument("cannot bucket an empty feature");
  std::vector<double> sorted(feature_values.begin(), feature_values.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const auto last = static_cast<double>(sorted.size() - 1);

  BucketThresholds out;
  out.feature_id = feature_id;
  for (int k = 1; k < bucket_count; ++k) {
    const double pos = last * static_cast<double>(k) / static_cast<double>(bucket_count);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(i);
    double q = sorted[i];
    if (frac > 0.0 && i + 1 < sorted.size()) q = sorted[i] + frac * (sorted[i + 1] - sorted[i]);
    if (q <= lo) continue;
    if (!out.thresholds.empty() && q <= out.thresholds.back()) continue;
    out.thresholds.push_back(q);
  }
  return out;
}

double split_gain(const NodeStats& left, const NodeStats& parent, double lambda, double gamma) {
  const double gr = parent.G - left.G;
  const double hr = parent.H - left.H;
  return 0.5 * (left.G * left.G / (left.H + lambda) + gr * gr / (hr + lambda) -
                parent.G * parent.G / (parent.H + lambda)) -
         gamma;
}

double leaf_weight(const NodeStats& stats, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  return -stats.G / (stats.H + lambda);
}

void BoostingConfig::validate() const {
  if (trees < 0) throw std::invalid_argument("trees must be non-negative");
  if (max_depth < 0) throw std::invalid_argument("max_depth must be non-negative");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (gamma < 0.0) throw std::invalid_argument("gamma must be non-negative");
  if (buckets < 2) throw std::invalid_argument("buckets must be at least 2");
  if (min_node_samples < 0) throw std::invalid_argument("min_node_samples must be non-negative");
}

double predict_raw(const Ensemble& ensemble, const RouteFn& route, const LeafValueFn& leaf_value) {
  double raw = ensemble.base_prediction;
  for (const Tree& tree : ensemble.trees) {
    if (tree.nodes.empty()) continue;
    int at = 0;
    while (tree.nodes[static_cast<std::size_t>(at)].kind == NodeKind::kInternal) {
      const TreeNode& n = tree.nodes[static_cast<std::size_t>(at)];
      at = route(n.owner) == Branch::kLeft ? n.left : n.right;
      if (at < 0) throw std::logic_error("internal node without child");
    }
    raw += ensemble.learning_rate * leaf_value(tree.nodes[static_cast<std::size_t>(at)].leaf);
  }
  return raw;
}

// ---------------------------------------------------------------------------

namespace {

struct PendingNode {
  int index;
  std::vector<int> rows;  // positions into the training row list, ascending
};

NodeStats canonical_stats(std::span<const int> rows, std::span<const GradHess> gh) {
  NodeStats s;
  for (int r : rows) {
    s.G += gh[static_cast<std::size_t>(r)].g;
    s.H += gh[static_cast<std::size_t>(r)].h;
  }
  s.count = static_cast<std::int64_t>(rows.size());
  return s;
}

NodeStats fixed_stats(std::span<const int> rows, std::span<const std::int64_t> qg, std::span<const std::int64_t> qh,
                      int bits) {
  __int128 G = 0, H = 0;
  for (int r : rows) {
    G += qg[static_cast<std::size_t>(r)];
    H += qh[static_cast<std::size_t>(r)];
  }
  return {std::ldexp(static_cast<double>(G), -bits), std::ldexp(static_cast<double>(H), -bits),
          static_cast<std::int64_t>(rows.size())};
}

std::int64_t round_to_grid(double x, int bits) { return static_cast<std::int64_t>(std::nearbyint(std::ldexp(x, bits))); }

}  // namespace

ReferenceEnsemble centralized_train(const Dataset& data, std::span<const int> rows, const BoostingConfig& config,
                                    const CentralizedOptions& options) {
  config.validate();
  if (rows.empty()) throw std::invalid_argument("centralized_train: empty dataset");

  ReferenceEnsemble model;
  model.learning_rate = config.learning_rate;
  model.base_prediction = config.base_prediction;
  model.loss = config.loss;

  const std::size_t n_features = data.features();
  for (std::size_t f = 0; f < n_features; ++f) {
    std::vector<double> values;
    values.reserve(rows.size());
    for (int r : rows) values.push_back(data.columns[f][static_cast<std::size_t>(r)]);
    model.buckets.push_back(build_buckets(values, config.buckets, static_cast<int>(f)));
  }

  std::vector<int> order = options.feature_order;
  if (order.empty()) {
    order.resize(n_features);
    std::iota(order.begin(), order.end(), 0);
  }
  if (order.size() != n_features) throw std::invalid_argument("feature_order must list every feature once");

  const std::size_t n = rows.size();
  std::vector<double> raw(n, config.base_prediction);
  std::vector<GradHess> gh(n);
  const int bits = options.fixed_point_bits;
  if (bits < 0 || bits > 52) throw std::invalid_argument("fixed_point_bits must lie in [0, 52]");
  std::vector<std::int64_t> qg(bits > 0 ? n : 0), qh(bits > 0 ? n : 0);

  for (int t = 0; t < config.trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      gh[i] = compute_grad_hess(config.loss, data.labels[static_cast<std::size_t>(rows[i])], raw[i], rows[i]);
      if (bits > 0) {
        qg[i] = round_to_grid(gh[i].g, bits);
        qh[i] = round_to_grid(gh[i].h, bits);
      }
    }

    ReferenceTree tree;
    tree.nodes.push_back({});
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);

    // Depth-first, left child before right.
    std::vector<PendingNode> stack;
    stack.push_back({0, std::move(all)});
    std::vector<std::pair<int, std::vector<int>>> leaves;
    // Child stats come from the parent's left sums (and their complement),
    // matching how a split client derives them.
    std::vector<std::optional<NodeStats>> known_stats(1);

    while (!stack.empty()) {
      PendingNode node = std::move(stack.back());
      stack.pop_back();
      auto& rn = tree.nodes[static_cast<std::size_t>(node.index)];
      if (known_stats[static_cast<std::size_t>(node.index)]) {
        rn.stats = *known_stats[static_cast<std::size_t>(node.index)];
      } else {
        rn.stats = bits > 0 ? fixed_stats(node.rows, qg, qh, bits) : canonical_stats(node.rows, gh);
      }
      rn.stats.count = static_cast<std::int64_t>(node.rows.size());

      bool make_leaf = rn.depth >= config.max_depth ||
                       static_cast<std::int64_t>(node.rows.size()) < config.min_node_samples;
      int best_feature = -1;
      int best_k = -1;
      double best_gain = 0.0;
      NodeStats best_left;
      if (!make_leaf) {
        std::vector<int> node_data_rows(node.rows.size());
        for (std::size_t i = 0; i < node.rows.size(); ++i) node_data_rows[i] = rows[static_cast<std::size_t>(node.rows[i])];
        std::vector<kernels::FeatureBuckets> fb;
        fb.reserve(n_features);
        for (int f : order) {
          fb.push_back(kernels::bucketize(data.columns[static_cast<std::size_t>(f)], node_data_rows,
                                          model.buckets[static_cast<std::size_t>(f)]));
        }
        std::vector<kernels::DoubleSums> sums;
        if (bits > 0) {
          std::vector<std::int64_t> g(node.rows.size()), h(node.rows.size());
          for (std::size_t i = 0; i < node.rows.size(); ++i) {
            g[i] = qg[static_cast<std::size_t>(node.rows[i])];
            h[i] = qh[static_cast<std::size_t>(node.rows[i])];
          }
          const auto fixed = options.parallel ? kernels::omp::left_sums_fixed(fb, g, h)
                                              : kernels::ref::left_sums_fixed(fb, g, h);
          for (const auto& f : fixed) {
            kernels::DoubleSums d;
            for (std::size_t k = 0; k < f.G.size(); ++k) {
              d.G.push_back(std::ldexp(static_cast<double>(f.G[k]), -bits));
              d.H.push_back(std::ldexp(static_cast<double>(f.H[k]), -bits));
            }
            d.count = f.count;
            sums.push_back(std::move(d));
          }
        } else {
          std::vector<double> g(node.rows.size()), h(node.rows.size());
          for (std::size_t i = 0; i < node.rows.size(); ++i) {
            g[i] = gh[static_cast<std::size_t>(node.rows[i])].g;
            h[i] = gh[static_cast<std::size_t>(node.rows[i])].h;
          }
          sums = options.parallel ? kernels::omp::left_sums(fb, g, h) : kernels::ref::left_sums(fb, g, h);
        }
        for (std::size_t oi = 0; oi < order.size(); ++oi) {
          const auto& s = sums[oi];
          for (std::size_t k = 0; k < s.G.size(); ++k) {
            const NodeStats left{s.G[k], s.H[k], s.count[k]};
            const double gain = split_gain(left, rn.stats, config.lambda, config.gamma);
            if (gain > best_gain) {
              best_gain = gain;
              best_feature = order[oi];
              best_k = static_cast<int>(k);
              best_left = left;
            }
          }
        }
        if (best_feature < 0) make_leaf = true;
      }

      if (make_leaf) {
        rn.leaf = true;
        rn.weight = leaf_weight(rn.stats, config.lambda);
        leaves.emplace_back(node.index, std::move(node.rows));
        continue;
      }

      rn.leaf = false;
      rn.feature = best_feature;
      rn.threshold_index = best_k;
      rn.threshold = model.buckets[static_cast<std::size_t>(best_feature)].thresholds[static_cast<std::size_t>(best_k)];
      const double cut = rn.threshold;
      const int depth = rn.depth;
      const NodeStats parent_stats = rn.stats;

      std::vector<int> left_rows, right_rows;
      for (int i : node.rows) {
        const double x = data.columns[static_cast<std::size_t>(best_feature)][static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];
        (x < cut ? left_rows : right_rows).push_back(i);
      }
      const int li = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      tree.nodes.back().depth = depth + 1;
      const int ri = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      tree.nodes.back().depth = depth + 1;
      tree.nodes[static_cast<std::size_t>(node.index)].left = li;
      tree.nodes[static_cast<std::size_t>(node.index)].right = ri;
      known_stats.resize(tree.nodes.size());
      known_stats[static_cast<std::size_t>(li)] = NodeStats{best_left.G, best_left.H, 0};
      known_stats[static_cast<std::size_t>(ri)] = NodeStats{parent_stats.G - best_left.G, parent_stats.H - best_left.H, 0};
      stack.push_back({ri, std::move(right_rows)});
      stack.push_back({li, std::move(left_rows)});
    }

    for (const auto& [index, leaf_rows] : leaves) {
      const double w = tree.nodes[static_cast<std::size_t>(index)].weight;
      for (int i : leaf_rows) raw[static_cast<std::size_t>(i)] += config.learning_rate * w;
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

double predict_raw(const ReferenceEnsemble& ensemble, std::span<const double> sample) {
  double raw = ensemble.base_prediction;
  for (const auto& tree : ensemble.trees) {
    int at = 0;
    while (!tree.nodes[static_cast<std::size_t>(at)].leaf) {
      const auto& n = tree.nodes[static_cast<std::size_t>(at)];
      if (static_cast<std::size_t>(n.feature) >= sample.size()) {
        throw std::out_of_range("sample is missing feature " + std::to_string(n.feature));
      }
      at = sample[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
    }
    raw += ensemble.learning_rate * tree.nodes[static_cast<std::size_t>(at)].weight;
  }
  return raw;
}

std::vector<double> feature_row(const Dataset& data, int row) {
  std::vector<double> out(data.features());
  for (std::size_t f = 0; f < data.features(); ++f) out[f] = data.columns[f][static_cast<std::size_t>(row)];
  return out;
}

}  // namespace pivodl
