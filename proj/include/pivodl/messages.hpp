#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pivodl/bytes.hpp"
#include "pivodl/gbdt.hpp"
#include "pivodl/paillier.hpp"
#include "pivodl/simnet.hpp"

namespace pivodl::protocol {

// Wire tags are part of the transcript format; never renumber.
enum class MessageKind : simnet::KindTag {
  kKeyAnnounce = 1,
  kLabelIdAnnounce = 2,
  kEncNodeStat = 3,
  kNodeStatPlain = 4,
  kSplitProposal = 5,
  kPartialSumReply = 6,
  kEncCandidateSums = 7,
  kLocalBestGain = 8,
  kGlobalWinner = 9,
  kRecordCommit = 10,
  kBranchContinue = 11,
  kLeafRelease = 12,
  kPredictRoute = 13,
  kMaskedShare = 14,
};

inline simnet::KindTag tag_of(MessageKind k) { return static_cast<simnet::KindTag>(k); }
std::string kind_name(simnet::KindTag tag);
std::optional<MessageKind> kind_from_tag(simnet::KindTag tag);

// A fixed-point sum that is either a Paillier ciphertext or, when encryption
// is switched off, the plain integer.
struct SealedSum {
  bool encrypted = false;
  paillier::Ciphertext cipher;
  __int128 plain = 0;
};

struct KeyAnnounceMsg {
  paillier::PublicKey pk;
};

struct LabelIdAnnounceMsg {
  std::vector<int> ids;
};

struct EncNodeStatMsg {
  int tree = 0;
  int node = 0;
  SealedSum G, H;
};

struct NodeStatPlainMsg {
  int tree = 0;
  int node = 0;
  double G = 0.0, H = 0.0;
};

struct ProposalEntry {
  int record_number = 0;
  std::vector<int> ids;  // left-branch IDs intersected with the recipient's labeled IDs
};

struct SplitProposalMsg {
  int tree = 0;
  int node = 0;
  int split_client = -1;
  std::vector<ProposalEntry> entries;
};

struct ReplyEntry {
  int record_number = 0;
  bool accepted = false;
  SealedSum G, H;
};

struct PartialSumReplyMsg {
  int tree = 0;
  int node = 0;
  std::vector<ReplyEntry> entries;
};

struct CandidateEntry {
  int record_number = 0;
  SealedSum G, H;
};

struct EncCandidateSumsMsg {
  int tree = 0;
  int node = 0;
  int source = -1;
  std::vector<CandidateEntry> entries;
};

struct LocalBestGainMsg {
  int tree = 0;
  int node = 0;
  bool valid = false;
  double gain = 0.0;
  int source = -1;
};

struct GlobalWinnerMsg {
  int tree = 0;
  int node = 0;
  int record_number = 0;
};

struct RecordCommitMsg {
  int tree = 0;
  int node = 0;
  int record_id = 0;
  int record_number = 0;
  bool left_leaf = false;
  bool right_leaf = false;
};

// Sent once by the source (IDs) and once by the split client (G, H) for
// each child that keeps splitting.
struct BranchContinueMsg {
  int tree = 0;
  int node = 0;  // child node index
  Branch branch = Branch::kLeft;
  std::optional<std::vector<int>> ids;
  std::optional<std::pair<double, double>> stats;
};

struct LeafReleaseMsg {
  int tree = 0;
  int node = 0;  // leaf node index
  int parent_source = -1;
  int parent_record = -1;
  Branch branch = Branch::kRoot;
  double value = 0.0;
  bool perturbed = false;
};

struct PredictRouteMsg {
  int query = 0;
  int tree = 0;
  int node = 0;
  int row = 0;
};

struct MaskedShareMsg {
  int query = 0;
  std::uint64_t share = 0;
};

Bytes encode(const KeyAnnounceMsg& m);
Bytes encode(const LabelIdAnnounceMsg& m);
Bytes encode(const EncNodeStatMsg& m, const paillier::PublicKey* pk);
Bytes encode(const NodeStatPlainMsg& m);
Bytes encode(const SplitProposalMsg& m);
Bytes encode(const PartialSumReplyMsg& m, const paillier::PublicKey* pk);
Bytes encode(const EncCandidateSumsMsg& m, const paillier::PublicKey* pk);
Bytes encode(const LocalBestGainMsg& m);
Bytes encode(const GlobalWinnerMsg& m);
Bytes encode(const RecordCommitMsg& m);
Bytes encode(const BranchContinueMsg& m);
Bytes encode(const LeafReleaseMsg& m);
Bytes encode(const PredictRouteMsg& m);
Bytes encode(const MaskedShareMsg& m);

// `pk` is the key sealed sums are expected under; nullptr when the sender
// used plaintext mode.
KeyAnnounceMsg decode_key_announce(const Bytes& b);
LabelIdAnnounceMsg decode_label_ids(const Bytes& b);
EncNodeStatMsg decode_enc_node_stat(const Bytes& b, const paillier::PublicKey* pk);
NodeStatPlainMsg decode_node_stat_plain(const Bytes& b);
SplitProposalMsg decode_split_proposal(const Bytes& b);
PartialSumReplyMsg decode_partial_sum_reply(const Bytes& b, const paillier::PublicKey* pk);
EncCandidateSumsMsg decode_enc_candidate_sums(const Bytes& b, const paillier::PublicKey* pk);
LocalBestGainMsg decode_local_best_gain(const Bytes& b);
GlobalWinnerMsg decode_global_winner(const Bytes& b);
RecordCommitMsg decode_record_commit(const Bytes& b);
BranchContinueMsg decode_branch_continue(const Bytes& b);
LeafReleaseMsg decode_leaf_release(const Bytes& b);
PredictRouteMsg decode_predict_route(const Bytes& b);
MaskedShareMsg decode_masked_share(const Bytes& b);

// Peeks the (tree, node) header shared by the per-node messages.
std::pair<int, int> peek_tree_node(const Bytes& b);

}  // namespace pivodl::protocol
