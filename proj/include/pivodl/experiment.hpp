#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "pivodl/attacks.hpp"
#include "pivodl/data.hpp"
#include "pivodl/protocol.hpp"
#include "pivodl/simnet.hpp"

namespace pivodl {

// "synthetic:binary:ROWS:FEATURES[:NOISE]", "synthetic:regression:ROWS:FEATURES[:NOISE]"
// or a CSV path.
Dataset load_dataset(const std::string& spec, const CsvSchema& schema, std::uint64_t seed);

bool is_binary(const Dataset& data);

struct RunPoint {
  protocol::ProtocolConfig protocol;
  int clients = 4;
  double train_fraction = 0.8;
  LabelDistribution labels = LabelDistribution::kUniformRandom;
  std::uint64_t seed = 1;
  bool attack = false;
};

struct RunResult {
  std::string metric;  // "accuracy" or "rmse"
  double train_metric = 0.0;
  double test_metric = 0.0;
  double setup_seconds = 0.0;
  double train_seconds = 0.0;
  simnet::NetMetrics train_net;
  std::uint64_t prediction_bytes = 0;
  std::map<std::string, std::uint64_t> bytes_by_phase;
  std::optional<attacks::AttackSummary> attack;
  std::string manifest;  // partition manifest JSON
};

// Training stage a message kind belongs to, for byte breakdowns.
std::string stage_of(simnet::KindTag kind);

// Split, partition, train, evaluate and optionally attack, all derived from
// point.seed.
RunResult run_point(const Dataset& data, const RunPoint& point);

}  // namespace pivodl
