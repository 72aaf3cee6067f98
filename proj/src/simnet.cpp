#include "pivodl/simnet.hpp"

#include <stdexcept>

#include <json.hpp>

namespace pivodl::simnet {

Network::Network(int n_parties) : n_(n_parties) {
  if (n_parties < 1) throw std::invalid_argument("network needs at least one party");
  inbox_.resize(static_cast<std::size_t>(n_parties));
  delivered_.resize(static_cast<std::size_t>(n_parties));
  metrics_.bytes_matrix.assign(static_cast<std::size_t>(n_parties),
                               std::vector<std::uint64_t>(static_cast<std::size_t>(n_parties), 0));
}

void Network::check_party(int id) const {
  if (id < 0 || id >= n_) throw std::out_of_range("unknown party " + std::to_string(id));
}

void Network::send(int sender, int receiver, KindTag kind, Bytes payload) {
  check_party(sender);
  check_party(receiver);
  if (sender == receiver) throw std::invalid_argument("party cannot send to itself");
  Envelope env{next_seq_++, round_, sender, receiver, kind, std::move(payload)};
  const std::size_t bytes = env.payload.size();
  transcript_.push_back({env.seq, env.round, sender, receiver, kind, bytes});
  metrics_.total_bytes += bytes;
  metrics_.message_count += 1;
  metrics_.bytes_per_kind[kind] += bytes;
  metrics_.messages_per_kind[kind] += 1;
  metrics_.bytes_matrix[static_cast<std::size_t>(sender)][static_cast<std::size_t>(receiver)] += bytes;
  if (capture_) captured_.push_back(env);
  inbox_[static_cast<std::size_t>(receiver)].push_back(std::move(env));
}

void Network::broadcast(int sender, KindTag kind, const Bytes& payload) {
  check_party(sender);
  for (int r = 0; r < n_; ++r) {
    if (r != sender) send(sender, r, kind, payload);
  }
}

bool Network::has_pending(int receiver) const {
  check_party(receiver);
  return !inbox_[static_cast<std::size_t>(receiver)].empty();
}

std::size_t Network::pending(int receiver) const {
  check_party(receiver);
  return inbox_[static_cast<std::size_t>(receiver)].size();
}

bool Network::idle() const {
  for (const auto& q : inbox_) {
    if (!q.empty()) return false;
  }
  return true;
}

std::optional<Envelope> Network::receive(int receiver) {
  check_party(receiver);
  auto& q = inbox_[static_cast<std::size_t>(receiver)];
  if (q.empty()) return std::nullopt;
  Envelope env = std::move(q.front());
  q.pop_front();
  delivered_[static_cast<std::size_t>(receiver)].push_back(env.seq);
  return env;
}

std::vector<Envelope> Network::drain(int receiver) {
  std::vector<Envelope> out;
  while (auto env = receive(receiver)) out.push_back(std::move(*env));
  return out;
}

void Network::run(const std::function<void(const Envelope&)>& handler) {
  while (true) {
    int pick = -1;
    std::uint64_t best = 0;
    for (int r = 0; r < n_; ++r) {
      const auto& q = inbox_[static_cast<std::size_t>(r)];
      if (!q.empty() && (pick < 0 || q.front().seq < best)) {
        pick = r;
        best = q.front().seq;
      }
    }
    if (pick < 0) return;
    auto env = receive(pick);
    handler(*env);
  }
}

const std::vector<std::uint64_t>& Network::delivered(int receiver) const {
  check_party(receiver);
  return delivered_[static_cast<std::size_t>(receiver)];
}

void Network::export_transcript(std::ostream& out, const KindNamer& namer) const {
  for (const auto& r : transcript_) {
    nlohmann::json j;
    j["seq"] = r.seq;
    j["round"] = r.round;
    j["sender"] = r.sender;
    j["receiver"] = r.receiver;
    j["kind"] = namer ? namer(r.kind) : std::to_string(r.kind);
    j["bytes"] = r.bytes;
    out << j.dump() << '\n';
  }
}

}  // namespace pivodl::simnet
