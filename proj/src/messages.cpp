#include "pivodl/messages.hpp"

namespace pivodl::protocol {

std::optional<MessageKind> kind_from_tag(simnet::KindTag tag) {
  if (tag >= 1 && tag <= 14) return static_cast<MessageKind>(tag);
  return std::nullopt;
}

std::string kind_name(simnet::KindTag tag) {
  const auto kind = kind_from_tag(tag);
  if (!kind) return "Unknown(" + std::to_string(tag) + ")";
  switch (*kind) {
    case MessageKind::kKeyAnnounce: return "KeyAnnounce";
    case MessageKind::kLabelIdAnnounce: return "LabelIdAnnounce";
    case MessageKind::kEncNodeStat: return "EncNodeStat";
    case MessageKind::kNodeStatPlain: return "NodeStatPlain";
    case MessageKind::kSplitProposal: return "SplitProposal";
    case MessageKind::kPartialSumReply: return "PartialSumReply";
    case MessageKind::kEncCandidateSums: return "EncCandidateSums";
    case MessageKind::kLocalBestGain: return "LocalBestGain";
    case MessageKind::kGlobalWinner: return "GlobalWinner";
    case MessageKind::kRecordCommit: return "RecordCommit";
    case MessageKind::kBranchContinue: return "BranchContinue";
    case MessageKind::kLeafRelease: return "LeafRelease";
    case MessageKind::kPredictRoute: return "PredictRoute";
    case MessageKind::kMaskedShare: return "MaskedShare";
  }
  return "Unknown";
}

namespace {

void write_sum(ByteWriter& w, const SealedSum& s, const paillier::PublicKey* pk) {
  w.u8(s.encrypted ? 1 : 0);
  if (s.encrypted) {
    if (pk == nullptr) throw std::invalid_argument("encrypted sum needs its public key to serialize");
    paillier::write_ciphertext(w, s.cipher, *pk);
  } else {
    w.i128(s.plain);
  }
}

SealedSum read_sum(ByteReader& r, const paillier::PublicKey* pk) {
  SealedSum s;
  s.encrypted = r.u8() != 0;
  if (s.encrypted) {
    if (pk != nullptr) {
      s.cipher = paillier::read_ciphertext(r, *pk);
    } else {
      s.cipher = {paillier::from_bytes_be(r.blob()), 0};
    }
  } else {
    s.plain = r.i128();
  }
  return s;
}

void header(ByteWriter& w, int tree, int node) {
  w.u32(static_cast<std::uint32_t>(tree));
  w.u32(static_cast<std::uint32_t>(node));
}

}  // namespace

std::pair<int, int> peek_tree_node(const Bytes& b) {
  ByteReader r(b);
  const int tree = static_cast<int>(r.u32());
  const int node = static_cast<int>(r.u32());
  return {tree, node};
}

Bytes encode(const KeyAnnounceMsg& m) {
  ByteWriter w;
  paillier::write_public_key(w, m.pk);
  return w.take();
}

KeyAnnounceMsg decode_key_announce(const Bytes& b) {
  ByteReader r(b);
  KeyAnnounceMsg m{paillier::read_public_key(r)};
  r.expect_done();
  return m;
}

Bytes encode(const LabelIdAnnounceMsg& m) {
  ByteWriter w;
  w.ids(m.ids);
  return w.take();
}

LabelIdAnnounceMsg decode_label_ids(const Bytes& b) {
  ByteReader r(b);
  LabelIdAnnounceMsg m{r.ids()};
  r.expect_done();
  return m;
}

Bytes encode(const EncNodeStatMsg& m, const paillier::PublicKey* pk) {
  ByteWriter w;
  header(w, m.tree, m.node);
  write_sum(w, m.G, pk);
  write_sum(w, m.H, pk);
  return w.take();
}

EncNodeStatMsg decode_enc_node_stat(const Bytes& b, const paillier::PublicKey* pk) {
  ByteReader r(b);
  EncNodeStatMsg m;
  m.tree = static_cast<int>(r.u32());
  m.node = static_cast<int>(r.u32());
  m.G = read_sum(r, pk);
  m.H = read_sum(r, pk);
  r.expect_done();
  return m;
}

Bytes encode(const NodeStatPlainMsg& m) {
  ByteWriter w;
  header(w, m.tree, m.node);
  w.f64(m.G);
  w.f64(m.H);
  return w.take();
}

NodeStatPlainMsg decode_node_stat_plain(const Bytes& b) {
  ByteReader r(b);
  NodeStatPlainMsg m;
  m.tree = static_cast<int>(r.u32());
  m.node = static_cast<int>(r.u32());
  m.G = r.f64();
  m.H = r.f64();
  r.expect_done();
  return m;
}

Bytes encode(const SplitProposalMsg& m) {
  ByteWriter w;
  header(w, m.tree, m.node);
  w.i32(m.split_client);
  w.u32(static_cast<std::uint32_t>(m.entries.size()));
  for (const auto& e : m.entries) {
    w.u32(static_cast<std::uint32_t>(e.record_number));
    w.ids(e.ids);
  }
  return w.take();
}

SplitProposalMsg decode_split_proposal(const Bytes& b) {
  ByteReader r(b);
  SplitProposalMsg m;
  m.tree = static_cast<int>(r.u32());
  m.node = static_cast<int>(r.u32());
  m.split_client = r.i32();
  const std::uint32_t n = r.u32();
  m.entries.resize(n);
  for (auto& e : m.entries) {
    e.record_number = static_cast<int>(r.u32());
    e.ids = r.ids();
  }
  r.expect_done();
  return m;
}

Bytes encode(const PartialSumReplyMsg& m, const paillier::PublicKey* pk) {
  ByteWriter w;
  header(w, m.tree, m.node);
  w.u32(static_cast<std::uint32_t>(m.entries.size()));
  for (const auto& e : m.entries) {
    w.u32(static_cast<std::uint32_t>(e.record_number));
    w.u8(e.accepted ? 1 : 0);
    if (e.accepted) {
      write_sum(w, e.G, pk);
      write_sum(w, e.H, pk);
    }
  }
  return w.take();
}

PartialSumReplyMsg decode_partial_sum_reply(const Bytes& b, const paillier::PublicKey* pk) {
  ByteReader r(b);
  PartialSumReplyMsg m;
  m.tree = static_cast<int>(r.u32());
  m.node = static_cast<int>(r.u32());
  const std::uint32_t n = r.u32();
  m.entries.resize(n);
  for (auto& e : m.entries) {
    e.record_number = static_cast<int>(r.u32());
    e.accepted = r.u8() != 0;
    if (e.accepted) {
      e.G = read_sum(r, pk);
      e.H = read_sum(r, pk);
    }
  }
  r.expect_done();
  return m;
}

Bytes encode(const EncCandidateSumsMsg& m, const paillier::PublicKey* pk) {
  ByteWriter w;
  header(w, m.tree, m.node);
  w.i32(m.source);
  w.u32(static_cast<std::uint32_t>(m.entries.size()));
  for (const auto& e : m.entries) {
    w.u32(static_cast<std::uint32_t>(e.record_number));
    write_sum(w, e.G, pk);
    write_sum(w, e.H, pk);
  }
  return w.take();
}

EncCandidateSumsMsg decode_enc_candidate_sums(const Bytes& b, const paillier::PublicKey* pk) {
  ByteReader r(b);
  EncCandidateSumsMsg m;
  m.tree = static_cast<int>(r.u32());
  m.node = static_cast<int>(r.u32());
  m.source = r.i32();
  const std::uint32_t n = r.u32();
  m.entries.resize(n);
  for (auto& e : m.entries) {
    e.record_number = static_cast<int>(r.u32());
    e.G = read_sum(r, pk);
    e.H = read_sum(r, pk);
  }
  r.expect_done();
  return m;
}

Bytes encode(const LocalBestGainMsg& m) {
  ByteWriter w;
  header(w, m.tree, m.node);
  w.u8(m.valid ? 1 : 0);
  w.f64(m.gain);
  w.i32(m.source);
  return w.take();
}

LocalBestGainMsg decode_local_best_gain(const Bytes& b) {
  ByteReader r(b);
  LocalBestGainMsg m;
  m.tree = static_cast<int>(r.u32());
  m.node = static_cast<int>(r.u32());
  m.valid = r.u8() != 0;
  m.gain = r.f64();
  m.source = r.i32();
  r.expect_done();
  return m;
}

Bytes encode(const GlobalWinnerMsg& m) {
  ByteWriter w;
  header(w, m.tree, m.node);
  w.u32(static_cast<std::uint32_t>(m.record_number));
  return w.take();
}

GlobalWinnerMsg decode_global_winner(const Bytes& b) {
  ByteReader r(b);
  GlobalWinnerMsg m;
  m.tree = static_cast<int>(r.u32());
  m.node = static_cast<int>(r.u32());
  m.record_number = static_cast<int>(r.u32());
  r.expect_done();
  return m;
}

Bytes encode(const RecordCommitMsg& m) {
  ByteWriter w;
  header(w, m.tree, m.node);
  w.u32(static_cast<std::uint32_t>(m.record_id));
  w.u32(static_cast<std::uint32_t>(m.record_number));
  w.u8(static_cast<std::uint8_t>((m.left_leaf ? 1 : 0) | (m.right_leaf ? 2 : 0)));
  return w.take();
}

RecordCommitMsg decode_record_commit(const Bytes& b) {
  ByteReader r(b);
  RecordCommitMsg m;
  m.tree = static_cast<int>(r.u32());
  m.node = static_cast<int>(r.u32());
  m.record_id = static_cast<int>(r.u32());
  m.record_number = static_cast<int>(r.u32());
  const std::uint8_t flags = r.u8();
  m.left_leaf = (flags & 1) != 0;
  m.right_leaf = (flags & 2) != 0;
  r.expect_done();
  return m;
}

Bytes encode(const BranchContinueMsg& m) {
  ByteWriter w;
  header(w, m.tree, m.node);
  w.u8(static_cast<std::uint8_t>(m.branch));
  w.u8(static_cast<std::uint8_t>((m.ids ? 1 : 0) | (m.stats ? 2 : 0)));
  if (m.ids) w.ids(*m.ids);
  if (m.stats) {
    w.f64(m.stats->first);
    w.f64(m.stats->second);
  }
  return w.take();
}

BranchContinueMsg decode_branch_continue(const Bytes& b) {
  ByteReader r(b);
  BranchContinueMsg m;
  m.tree = static_cast<int>(r.u32());
  m.node = static_cast<int>(r.u32());
  m.branch = static_cast<Branch>(r.u8());
  const std::uint8_t flags = r.u8();
  if (flags & 1) m.ids = r.ids();
  if (flags & 2) {
    const double g = r.f64();
    const double h = r.f64();
    m.stats = std::make_pair(g, h);
  }
  r.expect_done();
  return m;
}

Bytes encode(const LeafReleaseMsg& m) {
  ByteWriter w;
  header(w, m.tree, m.node);
  w.i32(m.parent_source);
  w.i32(m.parent_record);
  w.u8(static_cast<std::uint8_t>(m.branch));
  w.f64(m.value);
  w.u8(m.perturbed ? 1 : 0);
  return w.take();
}

LeafReleaseMsg decode_leaf_release(const Bytes& b) {
  ByteReader r(b);
  LeafReleaseMsg m;
  m.tree = static_cast<int>(r.u32());
  m.node = static_cast<int>(r.u32());
  m.parent_source = r.i32();
  m.parent_record = r.i32();
  m.branch = static_cast<Branch>(r.u8());
  m.value = r.f64();
  m.perturbed = r.u8() != 0;
  r.expect_done();
  return m;
}

Bytes encode(const PredictRouteMsg& m) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(m.query));
  w.u32(static_cast<std::uint32_t>(m.tree));
  w.u32(static_cast<std::uint32_t>(m.node));
  w.u32(static_cast<std::uint32_t>(m.row));
  return w.take();
}

PredictRouteMsg decode_predict_route(const Bytes& b) {
  ByteReader r(b);
  PredictRouteMsg m;
  m.query = static_cast<int>(r.u32());
  m.tree = static_cast<int>(r.u32());
  m.node = static_cast<int>(r.u32());
  m.row = static_cast<int>(r.u32());
  r.expect_done();
  return m;
}

Bytes encode(const MaskedShareMsg& m) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(m.query));
  w.u64(m.share);
  return w.take();
}

MaskedShareMsg decode_masked_share(const Bytes& b) {
  ByteReader r(b);
  MaskedShareMsg m;
  m.query = static_cast<int>(r.u32());
  m.share = r.u64();
  r.expect_done();
  return m;
}

}  // namespace pivodl::protocol
