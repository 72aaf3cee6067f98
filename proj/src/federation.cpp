#include <chrono>

#include "pivodl/protocol.hpp"

namespace pivodl::protocol {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Federation::Federation(const Dataset& data, const VerticalPartition& partition, const ProtocolConfig& config)
    : cfg_(config), net_(partition.n_clients), predict_net_(partition.n_clients) {
  cfg_.dp.steps = std::max(1, cfg_.boosting.trees);
  cfg_.validate();
  if (partition.n_clients < 1) throw ConfigError("federation needs at least one client");
  try {
    partition.validate(data.features());
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  net_.set_capture(cfg_.record_views);
  auto parts = make_client_data(data, partition);
  for (auto& cd : parts) {
    clients_.push_back(std::make_unique<Client>(std::move(cd), partition.train_ids, partition.n_clients, cfg_));
    clients_.back()->attach(&net_);
  }
}

void Federation::round(Phase phase, simnet::Network& net) {
  std::vector<std::vector<simnet::Envelope>> boxes;
  boxes.reserve(clients_.size());
  for (auto& c : clients_) boxes.push_back(c->collect());
  for (std::size_t i = 0; i < clients_.size(); ++i) clients_[i]->step(phase, boxes[i]);
  net.next_round();
}

void Federation::setup_exchange() {
  const auto t0 = std::chrono::steady_clock::now();
  for (auto& c : clients_) c->announce();
  round(Phase::kIdle, net_);
  setup_done_ = true;
  timings_.setup_seconds = seconds_since(t0);
}

bool Federation::train_tree() {
  if (!setup_done_) throw ProtocolError("setup_exchange must run before training");
  if (trees_built_ >= cfg_.boosting.trees) return false;
  for (Phase p : {Phase::kTreeStart, Phase::kRootFold, Phase::kRootReveal, Phase::kRootAbsorb}) round(p, net_);
  while (clients_.front()->has_open_node()) {
    for (Phase p : {Phase::kPropose, Phase::kReply, Phase::kFold, Phase::kEvaluate, Phase::kResolve, Phase::kCommit,
                    Phase::kAnnotate, Phase::kAbsorb}) {
      round(p, net_);
    }
    for (const auto& c : clients_) {
      if (c->has_open_node() != clients_.front()->has_open_node()) throw ProtocolError("clients disagree on open nodes");
    }
  }
  const auto pending = [&] {
    if (!net_.idle()) return true;
    for (const auto& c : clients_) {
      if (c->self_pending()) return true;
    }
    return false;
  };
  while (pending()) round(Phase::kIdle, net_);
  ++trees_built_;
  return true;
}

void Federation::train() {
  const auto t0 = std::chrono::steady_clock::now();
  if (!setup_done_) setup_exchange();
  while (train_tree()) {
  }
  timings_.train_seconds = seconds_since(t0);
}

std::vector<double> Federation::predict_raw(std::span<const int> rows, bool masked) {
  for (auto& c : clients_) c->attach(&predict_net_);
  const int first = next_query_;
  next_query_ += static_cast<int>(rows.size());
  const auto pending = [&] {
    if (!predict_net_.idle()) return true;
    for (const auto& c : clients_) {
      if (c->self_pending()) return true;
    }
    return false;
  };
  std::map<int, double> results;
  try {
    clients_.front()->request_predictions(rows, first);
    while (pending()) round(Phase::kPredict, predict_net_);
    for (auto& c : clients_) c->send_shares(first, static_cast<int>(rows.size()), 0, masked);
    round(Phase::kShare, predict_net_);
    results = clients_.front()->take_prediction_results();
  } catch (...) {
    for (auto& c : clients_) c->attach(&net_);
    throw;
  }
  for (auto& c : clients_) c->attach(&net_);
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out.push_back(results.at(first + static_cast<int>(i)));
  return out;
}

double Federation::predict_direct(int row) const {
  return pivodl::predict_raw(
      ensemble(), [&](const RecordRef& r) { return client(r.source_client).route(r.record_id, row); },
      [&](const LeafRef& l) { return client(l.holder_client).held_leaf(l); });
}

}  // namespace pivodl::protocol
