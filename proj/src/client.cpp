#include <algorithm>
#include <array>
#include <limits>
#include <numeric>

#include "pivodl/kernels.hpp"
#include "pivodl/protocol.hpp"

namespace pivodl::protocol {

void ProtocolConfig::validate() const {
  boosting.validate();
  if (instance_threshold < 0) throw ConfigError("instance_threshold must be non-negative");
  if (encryption && (key_bits < 256 || key_bits % 2 != 0)) throw ConfigError("key_bits must be an even number >= 256");
  if (scale_bits < 8 || scale_bits > 52) throw ConfigError("scale_bits must lie in [8, 52]");
  if (dp.enabled) dp.validate();
}

RootRoles root_roles(std::uint64_t seed, int tree, int n_clients) {
  if (n_clients == 1) return {0, 0};
  Rng rng = make_rng(seed, {tag(Stream::kRoot), static_cast<std::uint64_t>(tree)});
  std::uniform_int_distribution<int> pick(0, n_clients - 1);
  RootRoles r;
  r.aggregator = pick(rng);
  std::uniform_int_distribution<int> other(0, n_clients - 2);
  const int e = other(rng);
  r.encryptor = e >= r.aggregator ? e + 1 : e;
  if (r.aggregator == r.encryptor) throw ProtocolError("aggregation and encryption client must differ");
  return r;
}

int assign_split_client(std::uint64_t seed, int tree, int node, int source, int n_clients) {
  if (n_clients == 1) return source;
  Rng rng = make_rng(seed, {tag(Stream::kSplitClient), static_cast<std::uint64_t>(tree),
                            static_cast<std::uint64_t>(node), static_cast<std::uint64_t>(source)});
  std::uniform_int_distribution<int> other(0, n_clients - 2);
  const int c = other(rng);
  return c >= source ? c + 1 : c;
}

namespace {

std::int64_t to_fixed64(double x, int scale_bits) {
  const __int128 v = paillier::FixedPointCodec::quantize(x, scale_bits);
  if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min()) {
    throw paillier::CodecOverflow("gradient too large for 64-bit fixed point");
  }
  return static_cast<std::int64_t>(v);
}

}  // namespace

Client::Client(ClientData data, std::vector<int> train_ids, int n_clients, const ProtocolConfig& config)
    : data_(std::move(data)), train_ids_(std::move(train_ids)), m_(n_clients), cfg_(config) {
  std::sort(train_ids_.begin(), train_ids_.end());
  std::size_t rows = 0;
  if (!data_.columns.empty()) rows = data_.columns.front().size();
  for (int id : train_ids_) rows = std::max(rows, static_cast<std::size_t>(id) + 1);
  position_.assign(rows, -1);
  for (std::size_t i = 0; i < data_.labeled_ids.size(); ++i) {
    position_.at(static_cast<std::size_t>(data_.labeled_ids[i])) = static_cast<int>(i);
  }
  pks_.resize(static_cast<std::size_t>(m_));
  label_sets_.resize(static_cast<std::size_t>(m_));
  label_sets_[static_cast<std::size_t>(id())] = data_.labeled_ids;
  for (std::size_t f = 0; f < data_.feature_ids.size(); ++f) {
    local_feature_[data_.feature_ids[f]] = static_cast<int>(f);
    std::vector<double> values;
    values.reserve(train_ids_.size());
    for (int r : train_ids_) values.push_back(data_.columns[f][static_cast<std::size_t>(r)]);
    cuts_.push_back(build_buckets(values, cfg_.boosting.buckets, data_.feature_ids[f]));
  }
  raw_.assign(data_.labeled_ids.size(), cfg_.boosting.base_prediction);
  ensemble_.learning_rate = cfg_.boosting.learning_rate;
  ensemble_.base_prediction = cfg_.boosting.base_prediction;
  ensemble_.loss = cfg_.boosting.loss;
}

// ---------------------------------------------------------------------------
// Messaging

void Client::post(int receiver, MessageKind kind, Bytes payload) {
  if (receiver == id()) {
    self_inbox_.push_back({self_seq_++, net_ ? net_->round() : 0, id(), id(), tag_of(kind), std::move(payload)});
    return;
  }
  if (cfg_.record_views) view_.push_back({true, {0, net_->round(), id(), receiver, tag_of(kind), payload}});
  net_->send(id(), receiver, tag_of(kind), std::move(payload));
}

void Client::broadcast_all(MessageKind kind, const Bytes& payload) {
  for (int c = 0; c < m_; ++c) {
    if (c != id()) post(c, kind, payload);
  }
  post(id(), kind, payload);
}

std::vector<simnet::Envelope> Client::collect() {
  std::vector<simnet::Envelope> out = std::move(self_inbox_);
  self_inbox_.clear();
  if (net_ != nullptr) {
    auto more = net_->drain(id());
    for (auto& e : more) out.push_back(std::move(e));
  }
  if (cfg_.record_views) {
    for (const auto& e : out) view_.push_back({false, e});
  }
  return out;
}

void Client::announce() {
  if (cfg_.encryption) {
    keys_ = paillier::keygen(cfg_.key_bits, derive_seed(cfg_.seed, {tag(Stream::kKey), static_cast<std::uint64_t>(id())}));
    pks_[static_cast<std::size_t>(id())] = keys_->pk;
    const Bytes kb = encode(KeyAnnounceMsg{keys_->pk});
    for (int c = 0; c < m_; ++c) {
      if (c != id()) post(c, MessageKind::kKeyAnnounce, kb);
    }
  }
  const Bytes lb = encode(LabelIdAnnounceMsg{data_.labeled_ids});
  for (int c = 0; c < m_; ++c) {
    if (c != id()) post(c, MessageKind::kLabelIdAnnounce, lb);
  }
}

// ---------------------------------------------------------------------------
// Sealed sums

const paillier::PublicKey* Client::key_of(int client) const {
  if (!cfg_.encryption) return nullptr;
  const auto& pk = pks_.at(static_cast<std::size_t>(client));
  if (pk.bits == 0) throw ProtocolError("no public key known for client " + std::to_string(client));
  return &pk;
}

std::vector<SealedSum> Client::seal(std::span<const __int128> values, int key_owner, std::uint64_t stream,
                                    bool encrypt) const {
  std::vector<SealedSum> out(values.size());
  if (!encrypt || !cfg_.encryption) {
    for (std::size_t i = 0; i < values.size(); ++i) out[i].plain = values[i];
    return out;
  }
  const paillier::PublicKey* pk = key_of(key_owner);
  const paillier::FixedPointCodec codec(pk->n, cfg_.scale_bits);
  std::vector<paillier::BigInt> plain;
  plain.reserve(values.size());
  for (__int128 v : values) plain.push_back(codec.encode_fixed(v));
  auto ct = cfg_.parallel ? kernels::omp::encrypt_batch(*pk, plain, stream)
                          : kernels::ref::encrypt_batch(*pk, plain, stream);
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i].encrypted = true;
    out[i].cipher = std::move(ct[i]);
  }
  return out;
}

__int128 Client::open(const SealedSum& s) const {
  if (!s.encrypted) return s.plain;
  if (!keys_) throw ProtocolError("client holds no secret key");
  const paillier::FixedPointCodec codec(keys_->pk.n, cfg_.scale_bits);
  return codec.decode_fixed(paillier::decrypt(keys_->sk, s.cipher));
}

SealedSum Client::fold(const SealedSum& a, const SealedSum& b, int key_owner) const {
  if (a.encrypted != b.encrypted) throw ProtocolError("cannot fold an encrypted and a plaintext sum");
  SealedSum out;
  if (!a.encrypted) {
    out.plain = a.plain + b.plain;
    return out;
  }
  out.encrypted = true;
  out.cipher = paillier::add(*key_of(key_owner), a.cipher, b.cipher);
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch

void Client::step(Phase phase, const std::vector<simnet::Envelope>& inbox) {
  for (const auto& env : inbox) handle(phase, env);
  act(phase);
}

void Client::handle(Phase phase, const simnet::Envelope& env) {
  const auto kind = kind_from_tag(env.kind);
  if (!kind) throw ProtocolError("unknown message tag " + std::to_string(env.kind));
  switch (*kind) {
    case MessageKind::kKeyAnnounce:
      pks_.at(static_cast<std::size_t>(env.sender)) = decode_key_announce(env.payload).pk;
      break;
    case MessageKind::kLabelIdAnnounce: {
      auto ids = decode_label_ids(env.payload).ids;
      for (int i : ids) {
        if (i >= 0 && static_cast<std::size_t>(i) < position_.size() && position_[static_cast<std::size_t>(i)] >= 0) {
          throw ConfigError("sample " + std::to_string(i) + " is labeled by more than one client");
        }
      }
      label_sets_.at(static_cast<std::size_t>(env.sender)) = std::move(ids);
      break;
    }
    case MessageKind::kEncNodeStat: {
      const RootRoles roles = root_roles(cfg_.seed, tree_, m_);
      auto msg = decode_enc_node_stat(env.payload, key_of(roles.encryptor));
      if (phase == Phase::kRootFold) {
        if (id() != roles.aggregator) throw ProtocolError("node statistic sent to a non-aggregator");
      } else if (phase == Phase::kRootReveal) {
        if (id() != roles.encryptor) throw ProtocolError("folded statistic sent to a non-encryptor");
        root_G_.clear();
        root_H_.clear();
      } else {
        throw ProtocolError("unexpected EncNodeStat");
      }
      root_G_.push_back(std::move(msg.G));
      root_H_.push_back(std::move(msg.H));
      break;
    }
    case MessageKind::kNodeStatPlain: {
      const auto msg = decode_node_stat_plain(env.payload);
      auto& meta = meta_.at(static_cast<std::size_t>(msg.tree)).at(static_cast<std::size_t>(msg.node));
      meta.stats = NodeStats{msg.G, msg.H, static_cast<std::int64_t>(train_ids_.size())};
      break;
    }
    case MessageKind::kSplitProposal: {
      auto msg = decode_split_proposal(env.payload);
      reply_to(msg, env.sender);
      work_.proposals[env.sender] = std::move(msg);
      break;
    }
    case MessageKind::kPartialSumReply:
      work_.replies[env.sender] = decode_partial_sum_reply(env.payload, key_of(work_.split_client));
      break;
    case MessageKind::kEncCandidateSums: {
      const auto msg = decode_enc_candidate_sums(env.payload, cfg_.encryption ? &pks_[static_cast<std::size_t>(id())] : nullptr);
      evaluate(msg, env.sender);
      break;
    }
    case MessageKind::kLocalBestGain: {
      const auto msg = decode_local_best_gain(env.payload);
      work_.gains[msg.source] = msg;
      work_.gain_sender[msg.source] = env.sender;
      break;
    }
    case MessageKind::kGlobalWinner:
      commit(decode_global_winner(env.payload));
      break;
    case MessageKind::kRecordCommit:
      annotate(decode_record_commit(env.payload), env.sender);
      break;
    case MessageKind::kBranchContinue:
      absorb_continue(decode_branch_continue(env.payload));
      break;
    case MessageKind::kLeafRelease: {
      const auto msg = decode_leaf_release(env.payload);
      if (msg.tree != tree_) throw ProtocolError("leaf release for a finished tree");
      apply_leaf(msg.node, msg.value);
      break;
    }
    case MessageKind::kPredictRoute:
      route_query(decode_predict_route(env.payload));
      break;
    case MessageKind::kMaskedShare: {
      const auto msg = decode_masked_share(env.payload);
      shares_[msg.query][env.sender] = msg.share;
      break;
    }
  }
}

void Client::act(Phase phase) {
  switch (phase) {
    case Phase::kTreeStart:
      begin_tree();
      break;
    case Phase::kRootFold: {
      const RootRoles roles = root_roles(cfg_.seed, tree_, m_);
      if (id() != roles.aggregator) break;
      if (static_cast<int>(root_G_.size()) != m_) throw ProtocolError("aggregator is missing node statistics");
      SealedSum G = root_G_[0], H = root_H_[0];
      for (std::size_t i = 1; i < root_G_.size(); ++i) {
        G = fold(G, root_G_[i], roles.encryptor);
        H = fold(H, root_H_[i], roles.encryptor);
      }
      root_G_.clear();
      root_H_.clear();
      post(roles.encryptor, MessageKind::kEncNodeStat,
           encode(EncNodeStatMsg{tree_, 0, std::move(G), std::move(H)}, key_of(roles.encryptor)));
      break;
    }
    case Phase::kRootReveal: {
      const RootRoles roles = root_roles(cfg_.seed, tree_, m_);
      if (id() != roles.encryptor) break;
      if (root_G_.size() != 1) throw ProtocolError("encryptor did not receive the folded statistic");
      const double G = paillier::FixedPointCodec::dequantize(open(root_G_[0]), cfg_.scale_bits);
      const double H = paillier::FixedPointCodec::dequantize(open(root_H_[0]), cfg_.scale_bits);
      root_G_.clear();
      root_H_.clear();
      broadcast_all(MessageKind::kNodeStatPlain, encode(NodeStatPlainMsg{tree_, 0, G, H}));
      break;
    }
    case Phase::kRootAbsorb: {
      auto& root = meta_.back().front();
      if (!root.stats) throw ProtocolError("root statistics never arrived");
      const bool leaf = cfg_.boosting.max_depth == 0 ||
                        static_cast<int>(train_ids_.size()) < cfg_.boosting.min_node_samples;
      if (leaf) {
        const int holder = root_roles(cfg_.seed, tree_, m_).encryptor;
        make_leaf(0, holder, {}, Branch::kRoot);
        if (id() == holder) release_leaf(0, *root.stats, -1, {}, Branch::kRoot);
      } else {
        stack_.push_back(0);
      }
      break;
    }
    case Phase::kPropose:
      start_node();
      propose();
      break;
    case Phase::kFold:
      fold_candidates();
      break;
    case Phase::kEvaluate:
      for (const auto& [source, best] : work_.my_bests) {
        broadcast_all(MessageKind::kLocalBestGain, encode(best));
      }
      break;
    case Phase::kResolve:
      resolve();
      break;
    case Phase::kAnnotate:
      release_branches();
      break;
    case Phase::kAbsorb:
      finish_node();
      break;
    case Phase::kReply:
    case Phase::kCommit:
    case Phase::kPredict:
    case Phase::kShare:
    case Phase::kIdle:
      break;
  }
}

// ---------------------------------------------------------------------------
// Tree and node flow

void Client::begin_tree() {
  ++tree_;
  const std::size_t n = data_.labeled_ids.size();
  g_.resize(n);
  h_.resize(n);
  qg_.resize(n);
  qh_.resize(n);
  __int128 G = 0, H = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const GradHess gh = compute_grad_hess(cfg_.boosting.loss, data_.labels[i], raw_[i], data_.labeled_ids[i]);
    g_[i] = gh.g;
    h_[i] = gh.h;
    qg_[i] = to_fixed64(gh.g, cfg_.scale_bits);
    qh_[i] = to_fixed64(gh.h, cfg_.scale_bits);
    G += qg_[i];
    H += qh_[i];
  }
  grad_history_.push_back(qg_);

  ensemble_.trees.push_back(Tree{{TreeNode{}}});
  NodeMeta root;
  root.ids = train_ids_;
  root.own.resize(n);
  std::iota(root.own.begin(), root.own.end(), 0);
  meta_.push_back({std::move(root)});
  stack_.clear();

  const RootRoles roles = root_roles(cfg_.seed, tree_, m_);
  const std::array<__int128, 2> local{G, H};
  const std::uint64_t stream = derive_seed(cfg_.seed, {tag(Stream::kEncrypt), static_cast<std::uint64_t>(id()),
                                                       static_cast<std::uint64_t>(tree_), 0xA66ull});
  auto sealed = seal(local, roles.encryptor, stream, true);
  post(roles.aggregator, MessageKind::kEncNodeStat,
       encode(EncNodeStatMsg{tree_, 0, std::move(sealed[0]), std::move(sealed[1])}, key_of(roles.encryptor)));
}

void Client::start_node() {
  if (stack_.empty()) throw ProtocolError("no open node");
  work_ = NodeWork{};
  work_.node = stack_.back();
  stack_.pop_back();
}

void Client::propose() {
  const int node = work_.node;
  const NodeMeta& meta = meta_.at(static_cast<std::size_t>(tree_)).at(static_cast<std::size_t>(node));
  if (!meta.ids || !meta.stats) throw ProtocolError("node context incomplete");
  const std::vector<int>& ids = *meta.ids;

  work_.split_client = cfg_.weakened ? id() : assign_split_client(cfg_.seed, tree_, node, id(), m_);
  const bool sealed_sums = !cfg_.weakened;

  std::vector<int> own_rows;
  std::vector<std::int64_t> g, h;
  own_rows.reserve(meta.own.size());
  for (int p : meta.own) {
    own_rows.push_back(data_.labeled_ids[static_cast<std::size_t>(p)]);
    g.push_back(qg_[static_cast<std::size_t>(p)]);
    h.push_back(qh_[static_cast<std::size_t>(p)]);
  }

  std::vector<kernels::FeatureBuckets> fb;
  std::vector<int> active;
  for (std::size_t f = 0; f < cuts_.size(); ++f) {
    if (cuts_[f].thresholds.empty()) continue;
    active.push_back(static_cast<int>(f));
    fb.push_back(kernels::bucketize(data_.columns[f], own_rows, cuts_[f]));
  }
  const auto sums = cfg_.parallel ? kernels::omp::left_sums_fixed(fb, g, h) : kernels::ref::left_sums_fixed(fb, g, h);

  std::vector<__int128> values;
  for (std::size_t a = 0; a < active.size(); ++a) {
    const auto& s = sums[a];
    for (std::size_t k = 0; k < s.G.size(); ++k) {
      work_.candidates.push_back({active[a], static_cast<int>(k)});
      values.push_back(s.G[k]);
      values.push_back(s.H[k]);
    }
  }
  const std::uint64_t stream = derive_seed(cfg_.seed, {tag(Stream::kEncrypt), static_cast<std::uint64_t>(id()),
                                                       static_cast<std::uint64_t>(tree_),
                                                       static_cast<std::uint64_t>(node), 0ull});
  auto sealed = seal(values, work_.split_client, stream, sealed_sums);
  for (std::size_t i = 0; i < work_.candidates.size(); ++i) {
    work_.own_G.push_back(std::move(sealed[2 * i]));
    work_.own_H.push_back(std::move(sealed[2 * i + 1]));
  }

  for (int c = 0; c < m_; ++c) {
    if (c == id()) continue;
    const auto& labels = label_sets_[static_cast<std::size_t>(c)];
    std::vector<int> mine;
    std::set_intersection(ids.begin(), ids.end(), labels.begin(), labels.end(), std::back_inserter(mine));
    SplitProposalMsg msg{tree_, node, work_.split_client, {}};
    int R = 0;
    for (int f : active) {
      const auto fbc = kernels::bucketize(data_.columns[static_cast<std::size_t>(f)], mine, cuts_[static_cast<std::size_t>(f)]);
      for (int k = 0; k < fbc.n_thresholds; ++k) {
        ProposalEntry e{++R, {}};
        for (std::size_t i = 0; i < mine.size(); ++i) {
          if (fbc.bucket[i] <= k) e.ids.push_back(mine[i]);
        }
        msg.entries.push_back(std::move(e));
      }
    }
    post(c, MessageKind::kSplitProposal, encode(msg));
  }
}

void Client::reply_to(const SplitProposalMsg& p, int source) {
  if (p.tree != tree_) throw ProtocolError("proposal for a different tree");
  const bool sealed_sums = !cfg_.weakened;
  if (sealed_sums && cfg_.encryption) (void)key_of(p.split_client);
  PartialSumReplyMsg reply{p.tree, p.node, {}};
  std::vector<__int128> values;
  for (const auto& e : p.entries) {
    ReplyEntry r;
    r.record_number = e.record_number;
    r.accepted = static_cast<int>(e.ids.size()) >= cfg_.instance_threshold;
    if (r.accepted) {
      __int128 G = 0, H = 0;
      for (int i : e.ids) {
        const int pos = (i >= 0 && static_cast<std::size_t>(i) < position_.size()) ? position_[static_cast<std::size_t>(i)] : -1;
        if (pos < 0) throw ProtocolError("proposal names a sample this client does not label");
        G += qg_[static_cast<std::size_t>(pos)];
        H += qh_[static_cast<std::size_t>(pos)];
      }
      values.push_back(G);
      values.push_back(H);
    }
    reply.entries.push_back(std::move(r));
  }
  const std::uint64_t stream = derive_seed(cfg_.seed, {tag(Stream::kEncrypt), static_cast<std::uint64_t>(id()),
                                                       static_cast<std::uint64_t>(tree_), static_cast<std::uint64_t>(p.node),
                                                       static_cast<std::uint64_t>(source) + 1});
  auto sealed = seal(values, p.split_client, stream, sealed_sums);
  std::size_t v = 0;
  for (auto& r : reply.entries) {
    if (!r.accepted) continue;
    r.G = std::move(sealed[v++]);
    r.H = std::move(sealed[v++]);
  }
  const paillier::PublicKey* pk = (sealed_sums && cfg_.encryption) ? key_of(p.split_client) : nullptr;
  post(source, MessageKind::kPartialSumReply, encode(reply, pk));
}

void Client::fold_candidates() {
  EncCandidateSumsMsg out{tree_, work_.node, id(), {}};
  for (std::size_t i = 0; i < work_.candidates.size(); ++i) {
    const int R = static_cast<int>(i) + 1;
    bool complete = true;
    SealedSum G = work_.own_G[i], H = work_.own_H[i];
    for (int c = 0; c < m_ && complete; ++c) {
      if (c == id()) continue;
      const auto it = work_.replies.find(c);
      if (it == work_.replies.end() || i >= it->second.entries.size()) {
        complete = false;
        break;
      }
      const ReplyEntry& e = it->second.entries[i];
      if (e.record_number != R) throw ProtocolError("reply entries out of order");
      if (!e.accepted) {
        complete = false;
        break;
      }
      G = fold(G, e.G, work_.split_client);
      H = fold(H, e.H, work_.split_client);
    }
    if (complete) out.entries.push_back({R, std::move(G), std::move(H)});
  }
  const paillier::PublicKey* pk = (!cfg_.weakened && cfg_.encryption) ? key_of(work_.split_client) : nullptr;
  post(work_.split_client, MessageKind::kEncCandidateSums, encode(out, pk));
}

void Client::evaluate(const EncCandidateSumsMsg& m, int source) {
  if (m.source != source) throw ProtocolError("candidate sums relayed by a non-source");
  const NodeMeta& meta = meta_.at(static_cast<std::size_t>(tree_)).at(static_cast<std::size_t>(m.node));
  const NodeStats parent = *meta.stats;

  std::vector<__int128> plain(2 * m.entries.size());
  std::vector<paillier::Ciphertext> cts;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const SealedSum* parts[2] = {&m.entries[i].G, &m.entries[i].H};
    for (int j = 0; j < 2; ++j) {
      if (parts[j]->encrypted) {
        cts.push_back(parts[j]->cipher);
        slots.push_back(2 * i + static_cast<std::size_t>(j));
      } else {
        plain[2 * i + static_cast<std::size_t>(j)] = parts[j]->plain;
      }
    }
  }
  if (!cts.empty()) {
    if (!keys_) throw ProtocolError("client holds no secret key");
    for (const auto& c : cts) {
      if (c.key_id != keys_->pk.key_id) throw paillier::KeyMismatch("candidate sums not under this client's key");
    }
    const auto dec = cfg_.parallel ? kernels::omp::decrypt_batch(keys_->sk, cts) : kernels::ref::decrypt_batch(keys_->sk, cts);
    const paillier::FixedPointCodec codec(keys_->pk.n, cfg_.scale_bits);
    for (std::size_t i = 0; i < slots.size(); ++i) plain[slots[i]] = codec.decode_fixed(dec[i]);
  }

  LocalBestGainMsg best{m.tree, m.node, false, 0.0, source};
  int best_R = -1;
  auto& table = work_.decrypted[source];
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const NodeStats left{paillier::FixedPointCodec::dequantize(plain[2 * i], cfg_.scale_bits),
                         paillier::FixedPointCodec::dequantize(plain[2 * i + 1], cfg_.scale_bits), 0};
    table[m.entries[i].record_number] = left;
    const double gain = split_gain(left, parent, cfg_.boosting.lambda, cfg_.boosting.gamma);
    if (gain > best.gain) {
      best.gain = gain;
      best.valid = true;
      best_R = m.entries[i].record_number;
    }
  }
  work_.my_bests[source] = best;
  work_.best_record[source] = best_R;
}

void Client::resolve() {
  if (static_cast<int>(work_.gains.size()) != m_) throw ProtocolError("missing local best gains");
  int winner = -1;
  double best = 0.0;
  for (const auto& [source, g] : work_.gains) {
    if (g.valid && g.gain > best) {
      best = g.gain;
      winner = source;
    }
  }
  const int node = work_.node;
  if (winner < 0) {
    const NodeMeta& meta = meta_[static_cast<std::size_t>(tree_)][static_cast<std::size_t>(node)];
    const int holder = node == 0 ? root_roles(cfg_.seed, tree_, m_).encryptor : meta.parent_split_client;
    make_leaf(node, holder, meta.parent, meta.branch);
    if (id() == holder) release_leaf(node, *meta.stats, meta.parent.source_client, meta.parent, meta.branch);
    return;
  }
  work_.winner_source = winner;
  work_.winner_split = work_.gain_sender.at(winner);
  if (id() == work_.winner_split) {
    post(winner, MessageKind::kGlobalWinner, encode(GlobalWinnerMsg{tree_, node, work_.best_record.at(winner)}));
  }
}

void Client::commit(const GlobalWinnerMsg& m) {
  if (work_.winner_source != id() || m.node != work_.node) throw ProtocolError("unexpected global winner");
  if (m.record_number < 1 || m.record_number > static_cast<int>(work_.candidates.size())) {
    throw ProtocolError("unknown record number " + std::to_string(m.record_number));
  }
  const Candidate& c = work_.candidates[static_cast<std::size_t>(m.record_number - 1)];
  const auto& cuts = cuts_[static_cast<std::size_t>(c.feature_local)];
  const RecordEntry entry{static_cast<int>(lookup_.size()), data_.feature_ids[static_cast<std::size_t>(c.feature_local)],
                          c.k, cuts.thresholds[static_cast<std::size_t>(c.k)]};
  lookup_.push_back(entry);

  const NodeMeta& meta = meta_[static_cast<std::size_t>(tree_)][static_cast<std::size_t>(m.node)];
  const auto& column = data_.columns[static_cast<std::size_t>(c.feature_local)];
  work_.left_ids.clear();
  work_.right_ids.clear();
  for (int i : *meta.ids) {
    (column[static_cast<std::size_t>(i)] < entry.threshold ? work_.left_ids : work_.right_ids).push_back(i);
  }
  const int child_depth = meta.depth + 1;
  const auto is_leaf = [&](std::size_t count) {
    return child_depth >= cfg_.boosting.max_depth || static_cast<int>(count) < cfg_.boosting.min_node_samples;
  };
  broadcast_all(MessageKind::kRecordCommit,
                encode(RecordCommitMsg{tree_, m.node, entry.record_id, m.record_number, is_leaf(work_.left_ids.size()),
                                       is_leaf(work_.right_ids.size())}));
}

void Client::annotate(const RecordCommitMsg& m, int source) {
  if (m.node != work_.node || source != work_.winner_source) throw ProtocolError("commit from an unexpected source");
  auto& tree = ensemble_.trees[static_cast<std::size_t>(tree_)];
  auto& metas = meta_[static_cast<std::size_t>(tree_)];
  const int li = static_cast<int>(tree.nodes.size());
  const int ri = li + 1;
  {
    TreeNode& n = tree.nodes[static_cast<std::size_t>(m.node)];
    n.kind = NodeKind::kInternal;
    n.owner = {source, m.record_id};
    n.left = li;
    n.right = ri;
  }
  const int depth = metas[static_cast<std::size_t>(m.node)].depth + 1;
  for (int i = 0; i < 2; ++i) {
    TreeNode child;
    child.depth = depth;
    tree.nodes.push_back(child);
    NodeMeta cm;
    cm.depth = depth;
    cm.parent = {source, m.record_id};
    cm.branch = i == 0 ? Branch::kLeft : Branch::kRight;
    cm.parent_split_client = work_.winner_split;
    metas.push_back(std::move(cm));
  }

  // Own labeled membership of both children.
  const NodeMeta& pm = metas[static_cast<std::size_t>(m.node)];
  std::vector<int> left_rows;
  if (source == id()) {
    left_rows = work_.left_ids;
  } else {
    const auto it = work_.proposals.find(source);
    if (it == work_.proposals.end()) throw ProtocolError("commit without a matching proposal");
    const auto& entries = it->second.entries;
    if (m.record_number < 1 || m.record_number > static_cast<int>(entries.size())) {
      throw ProtocolError("commit names an unknown record number");
    }
    left_rows = entries[static_cast<std::size_t>(m.record_number - 1)].ids;
  }
  std::vector<char> is_left(data_.labeled_ids.size(), 0);
  for (int r : left_rows) {
    const int pos = position_[static_cast<std::size_t>(r)];
    if (pos >= 0) is_left[static_cast<std::size_t>(pos)] = 1;
  }
  std::vector<int> own_left, own_right;
  for (int p : pm.own) (is_left[static_cast<std::size_t>(p)] ? own_left : own_right).push_back(p);
  metas[static_cast<std::size_t>(li)].own = std::move(own_left);
  metas[static_cast<std::size_t>(ri)].own = std::move(own_right);

  if (m.left_leaf) make_leaf(li, work_.winner_split, {source, m.record_id}, Branch::kLeft);
  if (m.right_leaf) make_leaf(ri, work_.winner_split, {source, m.record_id}, Branch::kRight);
  work_.commit = m;
  work_.commit_source = source;
  work_.left_child = li;
  work_.right_child = ri;
}

void Client::release_branches() {
  if (!work_.commit) return;
  const RecordCommitMsg& m = *work_.commit;
  const int source = work_.commit_source;
  const bool am_source = id() == source;
  const bool am_split = id() == work_.winner_split;
  if (!am_source && !am_split) return;

  const NodeMeta& pm = meta_[static_cast<std::size_t>(tree_)][static_cast<std::size_t>(m.node)];
  NodeStats left, right;
  if (am_split) {
    left = work_.decrypted.at(source).at(m.record_number);
    right = NodeStats{pm.stats->G - left.G, pm.stats->H - left.H, 0};
  }
  const RecordRef parent{source, m.record_id};
  const struct {
    int child;
    bool leaf;
    Branch branch;
    const std::vector<int>* ids;
    const NodeStats* stats;
  } sides[2] = {{work_.left_child, m.left_leaf, Branch::kLeft, &work_.left_ids, &left},
                {work_.right_child, m.right_leaf, Branch::kRight, &work_.right_ids, &right}};
  for (const auto& s : sides) {
    if (s.leaf) {
      if (am_split) release_leaf(s.child, *s.stats, source, parent, s.branch);
      continue;
    }
    if (am_source) {
      BranchContinueMsg msg{tree_, s.child, s.branch, *s.ids, std::nullopt};
      broadcast_all(MessageKind::kBranchContinue, encode(msg));
    }
    if (am_split) {
      BranchContinueMsg msg{tree_, s.child, s.branch, std::nullopt, std::make_pair(s.stats->G, s.stats->H)};
      broadcast_all(MessageKind::kBranchContinue, encode(msg));
    }
  }
}

void Client::release_leaf(int node, const NodeStats& stats, int parent_source, RecordRef parent, Branch branch) {
  const double w = leaf_weight(stats, cfg_.boosting.lambda);
  received_[LeafRef{id(), tree_, node, parent, branch}] = w;
  Rng rng = make_rng(cfg_.seed, {tag(Stream::kDpNoise), static_cast<std::uint64_t>(id()),
                                 static_cast<std::uint64_t>(tree_), static_cast<std::uint64_t>(node)});
  for (int c = 0; c < m_; ++c) {
    if (c == id()) continue;
    LeafReleaseMsg msg{tree_, node, parent.source_client, parent.record_id, branch, w, false};
    if (c == parent_source && cfg_.dp.enabled) {
      const dp::NoisyLeaf noisy = dp::perturb_leaf(w, cfg_.dp, rng);
      msg.value = noisy.value;
      msg.perturbed = noisy.was_perturbed;
    }
    post(c, MessageKind::kLeafRelease, encode(msg));
  }
  apply_leaf(node, w);
}

void Client::apply_leaf(int node, double value) {
  const NodeMeta& meta = meta_.at(static_cast<std::size_t>(tree_)).at(static_cast<std::size_t>(node));
  for (int p : meta.own) raw_[static_cast<std::size_t>(p)] += cfg_.boosting.learning_rate * value;
}

void Client::make_leaf(int node, int holder, RecordRef parent, Branch branch) {
  TreeNode& n = ensemble_.trees[static_cast<std::size_t>(tree_)].nodes[static_cast<std::size_t>(node)];
  n.kind = NodeKind::kLeaf;
  n.leaf = LeafRef{holder, tree_, node, parent, branch};
}

void Client::absorb_continue(const BranchContinueMsg& m) {
  NodeMeta& meta = meta_.at(static_cast<std::size_t>(m.tree)).at(static_cast<std::size_t>(m.node));
  if (m.ids) meta.ids = *m.ids;
  if (m.stats) meta.stats = NodeStats{m.stats->first, m.stats->second, 0};
}

void Client::finish_node() {
  if (!work_.commit) return;
  const RecordCommitMsg& m = *work_.commit;
  const auto push = [&](int child, bool leaf) {
    if (leaf) return;
    NodeMeta& meta = meta_[static_cast<std::size_t>(tree_)][static_cast<std::size_t>(child)];
    if (!meta.ids || !meta.stats) throw ProtocolError("continuing branch lacks IDs or statistics");
    meta.stats->count = static_cast<std::int64_t>(meta.ids->size());
    stack_.push_back(child);
  };
  push(work_.right_child, m.right_leaf);
  push(work_.left_child, m.left_leaf);
}

// ---------------------------------------------------------------------------
// Prediction

Branch Client::route(int record_id, int row) const {
  if (record_id < 0 || record_id >= static_cast<int>(lookup_.size())) {
    throw ProtocolError("record " + std::to_string(record_id) + " is not in client " + std::to_string(id()) +
                        "'s lookup table");
  }
  const RecordEntry& e = lookup_[static_cast<std::size_t>(record_id)];
  const int local = local_feature_.at(e.feature);
  const double x = data_.columns[static_cast<std::size_t>(local)].at(static_cast<std::size_t>(row));
  return x < e.threshold ? Branch::kLeft : Branch::kRight;
}

double Client::held_leaf(const LeafRef& ref) const {
  const auto it = received_.find(ref);
  if (it == received_.end()) throw ProtocolError("leaf not in client " + std::to_string(id()) + "'s received table");
  return it->second;
}

namespace {

int next_hop(const TreeNode& n) { return n.kind == NodeKind::kInternal ? n.owner.source_client : n.leaf.holder_client; }

}  // namespace

void Client::request_predictions(std::span<const int> rows, int first_query) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int q = first_query + static_cast<int>(i);
    queries_.push_back(q);
    for (std::size_t t = 0; t < ensemble_.trees.size(); ++t) {
      const TreeNode& root = ensemble_.trees[t].nodes.front();
      post(next_hop(root), MessageKind::kPredictRoute, encode(PredictRouteMsg{q, static_cast<int>(t), 0, rows[i]}));
    }
  }
}

void Client::route_query(const PredictRouteMsg& q) {
  const Tree& tree = ensemble_.trees.at(static_cast<std::size_t>(q.tree));
  const TreeNode& n = tree.nodes.at(static_cast<std::size_t>(q.node));
  if (n.kind == NodeKind::kLeaf) {
    if (n.leaf.holder_client != id()) throw ProtocolError("prediction reached a leaf held elsewhere");
    contributions_[q.query] += static_cast<std::uint64_t>(to_fixed64(held_leaf(n.leaf), cfg_.scale_bits));
    return;
  }
  if (n.owner.source_client != id()) throw ProtocolError("prediction routed to a client that lacks the record");
  const int child = route(n.owner.record_id, q.row) == Branch::kLeft ? n.left : n.right;
  const TreeNode& next = tree.nodes.at(static_cast<std::size_t>(child));
  post(next_hop(next), MessageKind::kPredictRoute, encode(PredictRouteMsg{q.query, q.tree, child, q.row}));
}

void Client::send_shares(int first_query, int count, int requester, bool masked) {
  for (int q = first_query; q < first_query + count; ++q) {
    std::uint64_t share = 0;
    if (const auto it = contributions_.find(q); it != contributions_.end()) share = it->second;
    if (masked) {
      for (int d = 0; d < m_; ++d) {
        if (d == id()) continue;
        // Stands in for a seed agreed pairwise between id() and d.
        Rng rng = make_rng(cfg_.seed, {tag(Stream::kMask), static_cast<std::uint64_t>(std::min(id(), d)),
                                       static_cast<std::uint64_t>(std::max(id(), d)), static_cast<std::uint64_t>(q)});
        const std::uint64_t r = rng();
        share = id() < d ? share + r : share - r;
      }
    }
    contributions_.erase(q);
    post(requester, MessageKind::kMaskedShare, encode(MaskedShareMsg{q, share}));
  }
}

std::map<int, double> Client::take_prediction_results() {
  std::map<int, double> out;
  for (int q : queries_) {
    const auto it = shares_.find(q);
    if (it == shares_.end() || static_cast<int>(it->second.size()) != m_) {
      throw ProtocolError("missing prediction shares for query " + std::to_string(q));
    }
    std::uint64_t total = 0;
    for (const auto& [sender, s] : it->second) total += s;
    const double sum = paillier::FixedPointCodec::dequantize(static_cast<std::int64_t>(total), cfg_.scale_bits);
    out[q] = cfg_.boosting.base_prediction + cfg_.boosting.learning_rate * sum;
    shares_.erase(it);
  }
  queries_.clear();
  return out;
}

}  // namespace pivodl::protocol
