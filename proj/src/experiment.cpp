#include "pivodl/experiment.hpp"

#include <cmath>
#include <sstream>

namespace pivodl {

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

}  // namespace

Dataset load_dataset(const std::string& spec, const CsvSchema& schema, std::uint64_t seed) {
  if (spec.rfind("synthetic:", 0) != 0) return load_csv(spec, schema);
  const auto parts = split_on(spec, ':');
  if (parts.size() < 4 || parts.size() > 5) {
    throw DataError("synthetic dataset spec must be synthetic:<binary|regression>:ROWS:FEATURES[:NOISE]");
  }
  std::size_t rows = 0, features = 0;
  double noise = -1.0;
  try {
    rows = std::stoul(parts[2]);
    features = std::stoul(parts[3]);
    if (parts.size() == 5) noise = std::stod(parts[4]);
  } catch (const std::exception&) {
    throw DataError("bad number in dataset spec '" + spec + "'");
  }
  if (rows < 2 || features < 1) throw DataError("synthetic dataset needs at least 2 rows and 1 feature");
  if (parts[1] == "binary") return make_synthetic_binary(rows, features, seed, noise < 0 ? 0.05 : noise);
  if (parts[1] == "regression") return make_synthetic_regression(rows, features, seed, noise < 0 ? 0.1 : noise);
  throw DataError("unknown synthetic task '" + parts[1] + "'");
}

bool is_binary(const Dataset& data) {
  for (double y : data.labels) {
    if (y != 0.0 && y != 1.0) return false;
  }
  return true;
}

std::string stage_of(simnet::KindTag kind) {
  using protocol::MessageKind;
  const auto k = protocol::kind_from_tag(kind);
  if (!k) return "unknown";
  switch (*k) {
    case MessageKind::kKeyAnnounce:
    case MessageKind::kLabelIdAnnounce:
      return "setup";
    case MessageKind::kEncNodeStat:
    case MessageKind::kNodeStatPlain:
      return "root_aggregate";
    case MessageKind::kSplitProposal:
    case MessageKind::kPartialSumReply:
    case MessageKind::kEncCandidateSums:
    case MessageKind::kLocalBestGain:
    case MessageKind::kGlobalWinner:
      return "secure_split";
    case MessageKind::kRecordCommit:
    case MessageKind::kBranchContinue:
      return "node_construction";
    case MessageKind::kLeafRelease:
      return "leaf_release";
    case MessageKind::kPredictRoute:
    case MessageKind::kMaskedShare:
      return "prediction";
  }
  return "unknown";
}

RunResult run_point(const Dataset& data, const RunPoint& point) {
  const auto split = train_test_split(data.rows(), point.train_fraction, derive_seed(point.seed, {tag(Stream::kShuffle)}));
  const auto part = partition_vertical(data, split, point.clients, point.labels, derive_seed(point.seed, {tag(Stream::kPartition)}));
  protocol::ProtocolConfig cfg = point.protocol;
  cfg.seed = point.seed;
  if (point.attack) cfg.record_views = true;

  protocol::Federation fed(data, part, cfg);
  fed.setup_exchange();
  fed.train();

  RunResult r;
  r.manifest = partition_manifest_json(part, point.seed);
  r.setup_seconds = fed.timings().setup_seconds;
  r.train_seconds = fed.timings().train_seconds;
  r.train_net = fed.network().snapshot_metrics();
  for (const auto& [kind, bytes] : r.train_net.bytes_per_kind) r.bytes_by_phase[stage_of(kind)] += bytes;

  const bool logistic = cfg.boosting.loss == LossKind::kLogistic;
  r.metric = logistic ? "accuracy" : "rmse";
  const auto score = [&](const std::vector<int>& rows) {
    if (rows.empty()) return 0.0;
    const auto raw = fed.predict_raw(rows);
    double acc = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double y = data.labels[static_cast<std::size_t>(rows[i])];
      if (logistic) {
        acc += ((sigmoid(raw[i]) >= 0.5 ? 1.0 : 0.0) == y) ? 1.0 : 0.0;
      } else {
        acc += (raw[i] - y) * (raw[i] - y);
      }
    }
    acc /= static_cast<double>(rows.size());
    return logistic ? acc : std::sqrt(acc);
  };
  r.train_metric = score(split.train);
  r.test_metric = score(split.test);
  r.prediction_bytes = fed.prediction_network().snapshot_metrics().total_bytes;

  if (point.attack) {
    if (!logistic || !is_binary(data)) throw std::invalid_argument("label-guess attack needs a binary task");
    std::vector<attacks::AttackReport> reports;
    for (int c = 0; c < fed.size(); ++c) {
      reports.push_back(attacks::label_guess_attack(attacks::make_view(fed.client(c)), data.labels));
    }
    r.attack = attacks::summarize(std::move(reports));
  }
  return r;
}

}  // namespace pivodl
