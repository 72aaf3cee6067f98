#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pivodl/data.hpp"
#include "pivodl/dp.hpp"
#include "pivodl/gbdt.hpp"
#include "pivodl/messages.hpp"
#include "pivodl/paillier.hpp"
#include "pivodl/simnet.hpp"

namespace pivodl::protocol {

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ProtocolConfig {
  BoostingConfig boosting;     // boosting.min_node_samples is T_sample
  int instance_threshold = 10;  // T
  int key_bits = 512;
  bool encryption = true;
  dp::DpParams dp;
  // Attack-demo variant: every source is its own split client and partial
  // sums travel in plaintext.
  bool weakened = false;
  bool mask_predictions = true;
  bool parallel = true;
  bool record_views = false;
  int scale_bits = 40;
  std::uint64_t seed = 1;

  void validate() const;
};

// Public per-tree randomness shared by all parties.
struct RootRoles {
  int aggregator = 0;
  int encryptor = 0;
};
RootRoles root_roles(std::uint64_t seed, int tree, int n_clients);
int assign_split_client(std::uint64_t seed, int tree, int node, int source, int n_clients);

struct RecordEntry {
  int record_id = 0;
  int feature = -1;
  int threshold_index = -1;
  double threshold = 0.0;
};

struct ViewEntry {
  bool outgoing = false;
  simnet::Envelope env;
};

// Replicated public knowledge about one tree node.
struct NodeMeta {
  int depth = 0;
  RecordRef parent;
  Branch branch = Branch::kRoot;
  int parent_split_client = -1;
  std::optional<std::vector<int>> ids;
  std::optional<NodeStats> stats;
  std::vector<int> own;  // positions into the client's labeled IDs
};

enum class Phase {
  kTreeStart,
  kRootFold,
  kRootReveal,
  kRootAbsorb,
  kPropose,
  kReply,
  kFold,
  kEvaluate,
  kResolve,
  kCommit,
  kAnnotate,
  kAbsorb,
  kPredict,
  kShare,
  kIdle,
};

class Client {
 public:
  Client(ClientData data, std::vector<int> train_ids, int n_clients, const ProtocolConfig& config);

  int id() const { return data_.client_id; }
  int n_clients() const { return m_; }

  void attach(simnet::Network* net) { net_ = net; }

  // Setup: key generation and announcements, then absorption.
  void announce();

  // Pulls this round's envelopes: self-addressed ones first, then the
  // network inbox.
  std::vector<simnet::Envelope> collect();

  // Handles the round's envelopes, then performs the phase's own actions.
  void step(Phase phase, const std::vector<simnet::Envelope>& inbox);

  bool has_open_node() const { return !stack_.empty(); }
  bool self_pending() const { return !self_inbox_.empty(); }
  int current_tree() const { return tree_; }

  // Prediction requests (this client acting as the requester).
  void request_predictions(std::span<const int> rows, int first_query);
  // Every client sends its (optionally masked) sum of held leaf values for
  // each query to the requester.
  void send_shares(int first_query, int count, int requester, bool masked);
  std::map<int, double> take_prediction_results();

  const ClientData& data() const { return data_; }
  const std::vector<int>& train_ids() const { return train_ids_; }
  const std::vector<std::vector<int>>& labeled_id_sets() const { return label_sets_; }
  const std::vector<paillier::PublicKey>& public_keys() const { return pks_; }
  const std::vector<RecordEntry>& lookup_table() const { return lookup_; }
  const std::map<LeafRef, double>& received_table() const { return received_; }
  const Ensemble& ensemble() const { return ensemble_; }
  const std::vector<std::vector<NodeMeta>>& node_meta() const { return meta_; }
  const std::vector<double>& raw_predictions() const { return raw_; }
  // Quantized gradients of the owned labeled samples, per tree (evaluation only).
  const std::vector<std::vector<std::int64_t>>& gradient_history() const { return grad_history_; }
  const std::vector<ViewEntry>& view() const { return view_; }

  // Branch decision for a record this client owns; throws ProtocolError if
  // the record is not in its lookup table.
  Branch route(int record_id, int row) const;
  // Leaf value from the received lookup table; throws ProtocolError if absent.
  double held_leaf(const LeafRef& ref) const;

 private:
  struct Candidate {
    int feature_local = 0;
    int k = 0;
  };
  struct NodeWork {
    int node = -1;
    int split_client = -1;
    std::vector<Candidate> candidates;                  // index R-1
    std::vector<SealedSum> own_G, own_H;                // index R-1
    std::map<int, PartialSumReplyMsg> replies;          // by replier
    std::map<int, SplitProposalMsg> proposals;          // by source
    std::map<int, std::map<int, NodeStats>> decrypted;  // source -> R -> left stats
    std::map<int, LocalBestGainMsg> my_bests;           // source -> best, as split client
    std::map<int, int> best_record;                     // source -> R_best, as split client
    std::map<int, LocalBestGainMsg> gains;              // by source
    std::map<int, int> gain_sender;                     // source -> split client
    int winner_source = -1;
    int winner_split = -1;
    std::optional<RecordCommitMsg> commit;
    int commit_source = -1;
    int left_child = -1, right_child = -1;
    std::vector<int> left_ids, right_ids;  // source only
  };

  void post(int receiver, MessageKind kind, Bytes payload);
  void broadcast_all(MessageKind kind, const Bytes& payload);

  void handle(Phase phase, const simnet::Envelope& env);
  void act(Phase phase);

  const paillier::PublicKey* key_of(int client) const;
  std::vector<SealedSum> seal(std::span<const __int128> values, int key_owner, std::uint64_t stream,
                              bool encrypt) const;
  __int128 open(const SealedSum& s) const;
  SealedSum fold(const SealedSum& a, const SealedSum& b, int key_owner) const;

  void begin_tree();
  void start_node();
  void propose();
  void reply_to(const SplitProposalMsg& p, int source);
  void fold_candidates();
  void evaluate(const EncCandidateSumsMsg& m, int source);
  void resolve();
  void commit(const GlobalWinnerMsg& m);
  void annotate(const RecordCommitMsg& m, int source);
  void release_branches();
  void release_leaf(int node, const NodeStats& stats, int parent_source, RecordRef parent, Branch branch);
  void apply_leaf(int node, double value);
  void make_leaf(int node, int holder, RecordRef parent, Branch branch);
  void absorb_continue(const BranchContinueMsg& m);
  void finish_node();

  void route_query(const PredictRouteMsg& q);

  ClientData data_;
  std::vector<int> train_ids_;
  int m_;
  ProtocolConfig cfg_;
  simnet::Network* net_ = nullptr;
  std::vector<simnet::Envelope> self_inbox_;
  std::uint64_t self_seq_ = 0;

  std::optional<paillier::KeyPair> keys_;
  std::vector<paillier::PublicKey> pks_;
  std::vector<std::vector<int>> label_sets_;
  std::vector<int> position_;  // row -> index into labeled IDs, or -1
  std::vector<BucketThresholds> cuts_;  // per local feature

  std::vector<double> raw_;
  std::vector<double> g_, h_;
  std::vector<std::int64_t> qg_, qh_;
  std::vector<std::vector<std::int64_t>> grad_history_;

  std::vector<RecordEntry> lookup_;
  std::map<LeafRef, double> received_;
  Ensemble ensemble_;
  std::vector<std::vector<NodeMeta>> meta_;
  int tree_ = -1;

  // Root aggregation.
  std::vector<SealedSum> root_G_, root_H_;

  std::vector<int> stack_;
  NodeWork work_;

  // Prediction.
  std::map<int, std::uint64_t> contributions_;          // query -> fixed-point sum of held leaf values
  std::map<int, std::map<int, std::uint64_t>> shares_;  // query -> sender -> share
  std::vector<int> queries_;
  std::map<int, int> local_feature_;  // global feature -> local index

  std::vector<ViewEntry> view_;
};

struct TrainTimings {
  double setup_seconds = 0.0;
  double train_seconds = 0.0;
};

class Federation {
 public:
  Federation(const Dataset& data, const VerticalPartition& partition, const ProtocolConfig& config);

  int size() const { return static_cast<int>(clients_.size()); }
  Client& client(int i) { return *clients_.at(static_cast<std::size_t>(i)); }
  const Client& client(int i) const { return *clients_.at(static_cast<std::size_t>(i)); }
  const ProtocolConfig& config() const { return cfg_; }

  void setup_exchange();
  void train();
  // One tree; returns false when the configured number of trees is built.
  bool train_tree();

  // Raw scores for dataset rows through the routing + aggregation protocol,
  // with client 0 as the requester. Uses the prediction network.
  std::vector<double> predict_raw(std::span<const int> rows, bool masked);
  std::vector<double> predict_raw(std::span<const int> rows) { return predict_raw(rows, cfg_.mask_predictions); }
  // Same result computed by walking the clients' private tables directly.
  double predict_direct(int row) const;

  const Ensemble& ensemble() const { return clients_.front()->ensemble(); }
  simnet::Network& network() { return net_; }
  simnet::Network& prediction_network() { return predict_net_; }
  const TrainTimings& timings() const { return timings_; }

 private:
  void round(Phase phase, simnet::Network& net);

  ProtocolConfig cfg_;
  simnet::Network net_;
  simnet::Network predict_net_;
  std::vector<std::unique_ptr<Client>> clients_;
  bool setup_done_ = false;
  int trees_built_ = 0;
  int next_query_ = 0;
  TrainTimings timings_;
};

}  // namespace pivodl::protocol
