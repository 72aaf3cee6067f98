#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pivodl/experiment.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunConfig {
  std::string dataset = "synthetic:binary:2000:8";
  std::string label_column;
  std::vector<std::string> drop;
  std::string loss = "logistic";
  int clients = 4;
  int depth = 3;
  int trees = 5;
  double lr = 0.3;
  double lambda = 1.0;
  double gamma = 0.0;
  int buckets = 32;
  int key_bits = 512;
  double epsilon = 8.0;
  double delta = 1e-5;
  double clip = 2.0;
  int sample_threshold = 10;
  int seeds = 5;
  std::uint64_t seed = 1;
  double train_fraction = 0.8;
  std::string label_dist = "uniform";
  bool no_encryption = false;
  bool no_dp = false;
  std::string sweep;
  std::vector<double> sweep_values;
};

void add_common(CLI::App* app, RunConfig& c) {
  app->add_option("--dataset", c.dataset, "CSV path or synthetic:<binary|regression>:ROWS:FEATURES[:NOISE]");
  app->add_option("--label-column", c.label_column, "CSV label column (default: last)");
  app->add_option("--drop", c.drop, "CSV columns to ignore");
  app->add_option("--loss", c.loss, "logistic or squared");
  app->add_option("--clients", c.clients, "number of clients")->check(CLI::PositiveNumber);
  app->add_option("--depth", c.depth, "maximum tree depth")->check(CLI::NonNegativeNumber);
  app->add_option("--trees", c.trees, "number of trees")->check(CLI::NonNegativeNumber);
  app->add_option("--lr", c.lr, "learning rate");
  app->add_option("--lambda", c.lambda, "L2 regularization");
  app->add_option("--gamma", c.gamma, "minimum split gain");
  app->add_option("--buckets", c.buckets, "buckets per feature");
  app->add_option("--key-bits", c.key_bits, "Paillier modulus size");
  app->add_option("--epsilon", c.epsilon, "DP epsilon");
  app->add_option("--delta", c.delta, "DP delta");
  app->add_option("--clip", c.clip, "leaf clipping bound C");
  app->add_option("--sample-threshold", c.sample_threshold, "instance threshold T and minimum node size")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--seeds", c.seeds, "independent repetitions")->check(CLI::PositiveNumber);
  app->add_option("--seed", c.seed, "base seed");
  app->add_option("--train-fraction", c.train_fraction, "share of rows used for training");
  app->add_option("--label-dist", c.label_dist, "uniform or blocks")->check(CLI::IsMember({"uniform", "blocks"}));
  app->add_flag("--no-encryption", c.no_encryption, "send partial sums in plaintext");
  app->add_flag("--no-dp", c.no_dp, "disable the leaf perturbation");
}

pivodl::RunPoint make_point(const RunConfig& c) {
  pivodl::RunPoint p;
  auto& b = p.protocol.boosting;
  b.loss = pivodl::parse_loss(c.loss);
  b.max_depth = c.depth;
  b.trees = c.trees;
  b.learning_rate = c.lr;
  b.lambda = c.lambda;
  b.gamma = c.gamma;
  b.buckets = c.buckets;
  b.min_node_samples = c.sample_threshold;
  p.protocol.instance_threshold = c.sample_threshold;
  p.protocol.key_bits = c.key_bits;
  p.protocol.encryption = !c.no_encryption;
  p.protocol.dp.enabled = !c.no_dp;
  p.protocol.dp.epsilon = c.epsilon;
  p.protocol.dp.delta = c.delta;
  p.protocol.dp.clip = c.clip;
  p.protocol.dp.steps = std::max(1, c.trees);
  p.clients = c.clients;
  p.train_fraction = c.train_fraction;
  p.labels = c.label_dist == "blocks" ? pivodl::LabelDistribution::kContiguousBlocks
                                      : pivodl::LabelDistribution::kUniformRandom;
  p.protocol.validate();
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) throw std::invalid_argument("train-fraction must lie in (0, 1)");
  return p;
}

fs::path out_dir() {
  const char* env = std::getenv("PIVODL_OUT_DIR");
  fs::path dir = env != nullptr && *env != '\0' ? fs::path(env) : fs::path("pivodl_out");
  fs::create_directories(dir);
  return dir;
}

json net_json(const pivodl::simnet::NetMetrics& m) {
  json kinds = json::object();
  for (const auto& [k, v] : m.bytes_per_kind) kinds[pivodl::protocol::kind_name(k)] = v;
  return {{"total_bytes", m.total_bytes}, {"messages", m.message_count}, {"bytes_by_kind", kinds}};
}

json point_json(const RunConfig& c) {
  return {{"clients", c.clients},   {"depth", c.depth},         {"trees", c.trees},
          {"buckets", c.buckets},   {"key_bits", c.key_bits},   {"encryption", !c.no_encryption},
          {"dp", !c.no_dp},         {"epsilon", c.epsilon},     {"sample_threshold", c.sample_threshold}};
}

struct Stat {
  double mean = 0.0, min = 0.0, max = 0.0;
};

Stat stat_of(const std::vector<double>& v) {
  Stat s;
  if (v.empty()) return s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  return s;
}

json stat_json(const Stat& s) { return {{"mean", s.mean}, {"min", s.min}, {"max", s.max}}; }

void apply_axis(RunConfig& c, const std::string& axis, double v) {
  if (axis == "clients") c.clients = static_cast<int>(v);
  else if (axis == "depth") c.depth = static_cast<int>(v);
  else if (axis == "trees") c.trees = static_cast<int>(v);
  else if (axis == "epsilon") c.epsilon = v;
  else throw CLI::ValidationError("--sweep", "unknown axis '" + axis + "' (clients, depth, trees, epsilon)");
}

std::vector<double> default_values(const std::string& axis) {
  if (axis == "clients") return {2, 4, 6, 8, 10};
  if (axis == "depth" || axis == "trees") return {2, 3, 4, 5, 6};
  if (axis == "epsilon") return {2, 4, 6, 8, 10};
  throw CLI::ValidationError("--sweep", "unknown axis '" + axis + "' (clients, depth, trees, epsilon)");
}

// Runs every sweep point (or the single configured point) over all seeds.
int cmd_train(const RunConfig& base, const std::string& file, bool plaintext_twin) {
  std::vector<double> values{0.0};
  if (!base.sweep.empty()) values = base.sweep_values.empty() ? default_values(base.sweep) : base.sweep_values;
  for (double v : values) {
    RunConfig c = base;
    if (!base.sweep.empty()) apply_axis(c, base.sweep, v);
    (void)make_point(c);
  }
  const pivodl::CsvSchema schema{base.label_column, base.drop};
  const pivodl::Dataset data = pivodl::load_dataset(base.dataset, schema, base.seed);

  const fs::path dir = out_dir();
  std::ofstream out(dir / file);
  std::printf("%-10s %-8s %-6s %-10s %-10s %-12s %-10s\n", "axis", "value", "enc", "train", "test", "bytes", "seconds");
  for (double v : values) {
    for (const bool encrypted : plaintext_twin ? std::vector<bool>{true, false} : std::vector<bool>{!base.no_encryption}) {
      RunConfig c = base;
      if (!base.sweep.empty()) apply_axis(c, base.sweep, v);
      c.no_encryption = !encrypted;
      pivodl::RunPoint point = make_point(c);
      if (point.protocol.weakened) throw std::logic_error("weakened protocol variant reached a train/bench path");
      std::vector<double> train_m, test_m, bytes, secs;
      for (int s = 0; s < c.seeds; ++s) {
        point.seed = c.seed + static_cast<std::uint64_t>(s);
        const auto r = pivodl::run_point(data, point);
        if (s == 0) std::ofstream(dir / ("partition_seed" + std::to_string(point.seed) + ".json")) << r.manifest << '\n';
        json rec = {{"record", "run"},
                    {"command", plaintext_twin ? "bench" : "train"},
                    {"seed", point.seed},
                    {"config", point_json(c)},
                    {"metric", r.metric},
                    {"train_metric", r.train_metric},
                    {"test_metric", r.test_metric},
                    {"setup_seconds", r.setup_seconds},
                    {"train_seconds", r.train_seconds},
                    {"network", net_json(r.train_net)},
                    {"bytes_by_stage", r.bytes_by_phase},
                    {"prediction_bytes", r.prediction_bytes}};
        if (!base.sweep.empty()) rec["sweep"] = {{"axis", base.sweep}, {"value", v}};
        out << rec.dump() << '\n';
        train_m.push_back(r.train_metric);
        test_m.push_back(r.test_metric);
        bytes.push_back(static_cast<double>(r.train_net.total_bytes));
        secs.push_back(r.train_seconds);
      }
      json sum = {{"record", "summary"},
                  {"config", point_json(c)},
                  {"train_metric", stat_json(stat_of(train_m))},
                  {"test_metric", stat_json(stat_of(test_m))},
                  {"total_bytes", stat_json(stat_of(bytes))},
                  {"train_seconds", stat_json(stat_of(secs))}};
      if (!base.sweep.empty()) sum["sweep"] = {{"axis", base.sweep}, {"value", v}};
      out << sum.dump() << '\n';
      std::printf("%-10s %-8g %-6s %-10.4f %-10.4f %-12.0f %-10.2f\n", base.sweep.empty() ? "-" : base.sweep.c_str(), v,
                  encrypted ? "yes" : "no", stat_of(train_m).mean, stat_of(test_m).mean, stat_of(bytes).mean,
                  stat_of(secs).mean);
    }
  }
  std::printf("metrics written to %s\n", (dir / file).string().c_str());
  return 0;
}

int cmd_attack(const RunConfig& base, std::vector<double> epsilons, bool shuffled_control, bool weakened) {
  const pivodl::CsvSchema schema{base.label_column, base.drop};
  pivodl::Dataset data = pivodl::load_dataset(base.dataset, schema, base.seed);
  if (pivodl::parse_loss(base.loss) != pivodl::LossKind::kLogistic || !pivodl::is_binary(data)) {
    throw std::invalid_argument("attack needs a binary classification dataset with logistic loss");
  }
  if (shuffled_control) data = pivodl::shuffle_labels(data, base.seed);
  if (epsilons.empty()) epsilons = {2, 4, 6, 8, 10};

  const fs::path dir = out_dir();
  std::ofstream out(dir / "attack_report.ndjson");
  struct Column {
    std::string name;
    bool dp;
    double eps;
  };
  std::vector<Column> cols{{"no-dp", false, 0.0}};
  for (double e : epsilons) cols.push_back({"eps=" + std::to_string(static_cast<int>(e)), true, e});

  std::printf("%-10s %-14s %-14s %-10s\n", "column", "client-mean", "per-sample", "evidenced");
  for (const auto& col : cols) {
    RunConfig c = base;
    c.no_dp = !col.dp;
    if (col.dp) c.epsilon = col.eps;
    pivodl::RunPoint point = make_point(c);
    point.attack = true;
    point.protocol.weakened = weakened;
    std::vector<double> mean_acc, pooled_acc;
    int evidenced = 0;
    for (int s = 0; s < c.seeds; ++s) {
      point.seed = c.seed + static_cast<std::uint64_t>(s);
      const auto r = pivodl::run_point(data, point);
      const auto& a = *r.attack;
      for (const auto& rep : a.reports) {
        out << json{{"record", "attack"},       {"column", col.name},          {"seed", point.seed},
                    {"attacker", rep.attacker}, {"evidenced", rep.evidenced}, {"guess_accuracy", rep.guess_accuracy},
                    {"shuffled_labels", shuffled_control}, {"weakened", weakened}}
                   .dump()
            << '\n';
      }
      mean_acc.push_back(a.mean_client_accuracy);
      pooled_acc.push_back(a.pooled_accuracy);
      evidenced += a.evidenced;
    }
    out << json{{"record", "summary"},
                {"column", col.name},
                {"client_mean_accuracy", stat_json(stat_of(mean_acc))},
                {"per_sample_accuracy", stat_json(stat_of(pooled_acc))},
                {"evidenced", evidenced}}
               .dump()
        << '\n';
    std::printf("%-10s %-14.4f %-14.4f %-10d\n", col.name.c_str(), stat_of(mean_acc).mean, stat_of(pooled_acc).mean,
                evidenced);
  }
  std::printf("report written to %s\n", (dir / "attack_report.ndjson").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vertical federated XGBoost with distributed labels"};
  app.require_subcommand(1);

  RunConfig train_cfg, attack_cfg, bench_cfg;
  auto* train = app.add_subcommand("train", "train and evaluate, optionally over a sweep");
  add_common(train, train_cfg);
  train->add_option("--sweep", train_cfg.sweep, "clients, depth, trees or epsilon");
  train->add_option("--sweep-values", train_cfg.sweep_values, "override the sweep grid");

  auto* attack = app.add_subcommand("attack", "label-guess attack per client, without DP and across epsilons");
  add_common(attack, attack_cfg);
  std::vector<double> epsilons;
  bool shuffled = false, weakened = false;
  attack->add_option("--epsilons", epsilons, "DP columns (default 2 4 6 8 10)");
  attack->add_flag("--shuffled-labels", shuffled, "random-label control");
  attack->add_flag("--unsafe-weakened", weakened, "run the weakened protocol variant (attack demos only)");

  auto* bench = app.add_subcommand("bench", "communication and time cost curves, encrypted and plaintext");
  add_common(bench, bench_cfg);
  bench->add_option("--sweep", bench_cfg.sweep, "clients, depth or trees")
      ->required()
      ->check(CLI::IsMember({"clients", "depth", "trees"}));
  bench->add_option("--sweep-values", bench_cfg.sweep_values, "override the sweep grid");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(train_cfg, "train_metrics.ndjson", false);
    if (*attack) return cmd_attack(attack_cfg, epsilons, shuffled, weakened);
    if (*bench) return cmd_train(bench_cfg, "bench_costs.ndjson", true);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
