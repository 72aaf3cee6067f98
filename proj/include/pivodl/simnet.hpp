#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pivodl/bytes.hpp"

namespace pivodl::simnet {

using KindTag = std::uint16_t;

struct Envelope {
  std::uint64_t seq = 0;
  int round = 0;
  int sender = -1;
  int receiver = -1;
  KindTag kind = 0;
  Bytes payload;
};

struct TranscriptRecord {
  std::uint64_t seq = 0;
  int round = 0;
  int sender = -1;
  int receiver = -1;
  KindTag kind = 0;
  std::size_t bytes = 0;
};

using Transcript = std::vector<TranscriptRecord>;

struct NetMetrics {
  std::uint64_t total_bytes = 0;
  std::uint64_t message_count = 0;
  std::map<KindTag, std::uint64_t> bytes_per_kind;
  std::map<KindTag, std::uint64_t> messages_per_kind;
  std::vector<std::vector<std::uint64_t>> bytes_matrix;  // [sender][receiver]
};

using KindNamer = std::function<std::string(KindTag)>;

// In-process, ordered, lossless message bus. Each receiver has a FIFO inbox;
// sequence numbers give a single global delivery order.
class Network {
 public:
  explicit Network(int n_parties);

  int parties() const { return n_; }

  // Throws std::out_of_range for an unknown party and std::invalid_argument
  // for a self-addressed message.
  void send(int sender, int receiver, KindTag kind, Bytes payload);

  // One envelope per peer; bytes are metered once per recipient.
  void broadcast(int sender, KindTag kind, const Bytes& payload);

  void next_round() { ++round_; }
  int round() const { return round_; }

  bool has_pending(int receiver) const;
  bool idle() const;
  std::size_t pending(int receiver) const;

  // Removes and returns the oldest envelope addressed to `receiver`.
  std::optional<Envelope> receive(int receiver);
  std::vector<Envelope> drain(int receiver);

  // Delivers every pending envelope in global send order, including ones
  // sent by the handler, until no envelope is pending.
  void run(const std::function<void(const Envelope&)>& handler);

  const Transcript& transcript() const { return transcript_; }

  // When enabled, a copy of every sent envelope (payload included) is kept
  // for audits and byte-level determinism checks.
  void set_capture(bool on) { capture_ = on; }
  const std::vector<Envelope>& captured() const { return captured_; }
  const std::vector<std::uint64_t>& delivered(int receiver) const;
  NetMetrics snapshot_metrics() const { return metrics_; }

  // Newline-delimited JSON records: round, sender, receiver, kind, bytes.
  void export_transcript(std::ostream& out, const KindNamer& namer = {}) const;

 private:
  void check_party(int id) const;

  int n_;
  int round_ = 0;
  std::uint64_t next_seq_ = 0;
  std::vector<std::deque<Envelope>> inbox_;
  std::vector<std::vector<std::uint64_t>> delivered_;
  Transcript transcript_;
  bool capture_ = false;
  std::vector<Envelope> captured_;
  NetMetrics metrics_;
};

}  // namespace pivodl::simnet
