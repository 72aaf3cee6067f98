#include <gtest/gtest.h>

#include <set>

#include "federation_support.hpp"
#include "pivodl/protocol.hpp"

using namespace pivodl;
using namespace pivodl::protocol;
using pivodl::testing::make_setup;
using pivodl::testing::exact_config;

namespace {

std::size_t count_kind(const simnet::Network& net, MessageKind k) {
  std::size_t n = 0;
  for (const auto& r : net.transcript()) n += r.kind == tag_of(k);
  return n;
}

}  // namespace

TEST(Roles, RootRolesDiffer) {
  for (int m = 2; m <= 6; ++m) {
    for (int t = 0; t < 50; ++t) {
      const auto r = root_roles(7, t, m);
      EXPECT_NE(r.aggregator, r.encryptor);
      EXPECT_GE(r.aggregator, 0);
      EXPECT_LT(r.encryptor, m);
    }
  }
  const auto single = root_roles(7, 0, 1);
  EXPECT_EQ(single.aggregator, 0);
  EXPECT_EQ(single.encryptor, 0);
}

TEST(Roles, SplitClientIsAnotherClientUniformly) {
  std::vector<int> hits(4, 0);
  for (int node = 0; node < 4000; ++node) {
    const int s = assign_split_client(3, 0, node, 1, 4);
    ASSERT_NE(s, 1);
    ++hits[static_cast<std::size_t>(s)];
  }
  EXPECT_EQ(hits[1], 0);
  for (int c : {0, 2, 3}) EXPECT_NEAR(hits[static_cast<std::size_t>(c)], 4000.0 / 3, 120);
  EXPECT_EQ(assign_split_client(3, 0, 0, 0, 1), 0);
}

TEST(Config, Validation) {
  ProtocolConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.instance_threshold = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.key_bits = 100;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Setup, FourClientsAnnounceKeysAndLabels) {
  const auto s = make_setup(60, 6, 4, 1);
  Federation fed(s.data, s.partition, exact_config(1, 1, 4, 256));
  fed.setup_exchange();
  EXPECT_EQ(count_kind(fed.network(), MessageKind::kKeyAnnounce), 12u);
  EXPECT_EQ(count_kind(fed.network(), MessageKind::kLabelIdAnnounce), 12u);
  for (int c = 0; c < 4; ++c) {
    EXPECT_EQ(fed.client(c).public_keys().size(), 4u);
    EXPECT_EQ(fed.client(c).labeled_id_sets(), s.partition.labeled_ids);
  }
}

TEST(Setup, OverlappingLabelsAreRejected) {
  const auto s = make_setup(40, 4, 2, 2);
  VerticalPartition p = s.partition;
  p.labeled_ids[1].push_back(p.labeled_ids[0].front());
  std::sort(p.labeled_ids[1].begin(), p.labeled_ids[1].end());
  EXPECT_THROW(Federation(s.data, p, exact_config(1, 1, 4, 256)), ConfigError);
}

TEST(Setup, SingleClientTrainsCentrally) {
  const auto s = make_setup(80, 4, 1, 3);
  const auto cfg = exact_config(2, 2, 8, 256);
  Federation fed(s.data, s.partition, cfg);
  fed.train();
  EXPECT_EQ(fed.network().snapshot_metrics().total_bytes, 0u);
  const auto d = pivodl::testing::compare_with_oracle(fed, s, cfg.boosting);
  EXPECT_EQ(d.structural_mismatches + d.split_mismatches, 0);
  EXPECT_LT(d.max_leaf_diff, std::ldexp(1.0, -30));
}

TEST(Training, MatchesOracleAcrossSeeds) {
  for (std::uint64_t seed = 10; seed < 16; ++seed) {
    const int clients = 2 + static_cast<int>(seed % 4);
    const auto s = make_setup(120, 6, clients, seed);
    auto cfg = exact_config(3, 3, 8, 256);
    cfg.seed = seed;
    Federation fed(s.data, s.partition, cfg);
    fed.train();
    const auto d = pivodl::testing::compare_with_oracle(fed, s, cfg.boosting);
    EXPECT_EQ(d.structural_mismatches, 0) << seed;
    EXPECT_EQ(d.split_mismatches, 0) << seed;
    EXPECT_LT(d.max_leaf_diff, std::ldexp(1.0, -30)) << seed;
    EXPECT_LT(d.max_prediction_diff, 1e-8) << seed;
  }
}

TEST(Training, ZeroTreesPredictsBase) {
  const auto s = make_setup(40, 4, 2, 4);
  auto cfg = exact_config(0, 1, 4, 256);
  cfg.boosting.base_prediction = 0.25;
  Federation fed(s.data, s.partition, cfg);
  fed.train();
  EXPECT_TRUE(fed.ensemble().trees.empty());
  for (double v : fed.predict_raw(s.split.test)) EXPECT_EQ(v, 0.25);
}

TEST(Training, RootAggregateMatchesPlaintextSum) {
  const auto s = make_setup(100, 4, 3, 5);
  auto cfg = exact_config(1, 1, 4, 256);
  Federation fed(s.data, s.partition, cfg);
  fed.setup_exchange();
  fed.train_tree();
  double G = 0.0, H = 0.0;
  for (int id : s.split.train) {
    const auto gh = compute_grad_hess(LossKind::kLogistic, s.data.labels[static_cast<std::size_t>(id)], 0.0);
    G += gh.g;
    H += gh.h;
  }
  for (int c = 0; c < 3; ++c) {
    const auto& root = fed.client(c).node_meta().at(0).at(0);
    ASSERT_TRUE(root.stats.has_value());
    EXPECT_NEAR(root.stats->G, G, 1e-9);
    EXPECT_NEAR(root.stats->H, H, 1e-9);
  }
}

TEST(Training, InstanceThresholdRejectsSmallIntersections) {
  const auto s = make_setup(60, 4, 3, 6);
  auto cfg = exact_config(1, 2, 4, 256);
  cfg.instance_threshold = 1000;
  Federation fed(s.data, s.partition, cfg);
  fed.network().set_capture(true);
  fed.train();
  int replies = 0;
  for (const auto& env : fed.network().captured()) {
    if (env.kind != tag_of(MessageKind::kPartialSumReply)) continue;
    for (const auto& e : decode_partial_sum_reply(env.payload, &fed.client(0).public_keys()[0]).entries) {
      EXPECT_FALSE(e.accepted);
      ++replies;
    }
  }
  EXPECT_GT(replies, 0);
  EXPECT_EQ(fed.ensemble().trees[0].nodes.size(), 1u);
  EXPECT_EQ(fed.ensemble().trees[0].nodes[0].kind, NodeKind::kLeaf);
}

TEST(Training, EmptyIntersectionsAreAcceptedWithZeroThreshold) {
  // Client 2 holds no labels, so every intersection sent to it is empty.
  const auto s = make_setup(60, 6, 3, 7);
  VerticalPartition p = s.partition;
  p.labeled_ids[0].insert(p.labeled_ids[0].end(), p.labeled_ids[2].begin(), p.labeled_ids[2].end());
  std::sort(p.labeled_ids[0].begin(), p.labeled_ids[0].end());
  p.labeled_ids[2].clear();
  auto cfg = exact_config(1, 2, 4, 256);
  Federation fed(s.data, p, cfg);
  fed.network().set_capture(true);
  fed.train();
  int from_unlabeled = 0;
  for (const auto& env : fed.network().captured()) {
    if (env.kind == tag_of(MessageKind::kSplitProposal) && env.receiver == 2) {
      for (const auto& e : decode_split_proposal(env.payload).entries) EXPECT_TRUE(e.ids.empty());
    }
    if (env.kind != tag_of(MessageKind::kPartialSumReply) || env.sender != 2) continue;
    for (const auto& e : decode_partial_sum_reply(env.payload, &fed.client(0).public_keys()[0]).entries) {
      EXPECT_TRUE(e.accepted);
      ++from_unlabeled;
    }
  }
  EXPECT_GT(from_unlabeled, 0);
  const pivodl::testing::Setup s2{s.data, s.split, p};
  const auto d = pivodl::testing::compare_with_oracle(fed, s2, cfg.boosting);
  EXPECT_EQ(d.structural_mismatches + d.split_mismatches, 0);
}

TEST(Privacy, RoleSeparationAndNoSplitDetailsOnTheWire) {
  const auto s = make_setup(150, 6, 4, 8);
  auto cfg = exact_config(2, 3, 8, 256);
  cfg.instance_threshold = 2;
  Federation fed(s.data, s.partition, cfg);
  fed.network().set_capture(true);
  fed.train();

  std::map<std::pair<int, int>, std::map<int, int>> split_of;  // (tree,node) -> source -> split client
  for (const auto& env : fed.network().captured()) {
    if (env.kind != tag_of(MessageKind::kSplitProposal)) continue;
    const auto m = decode_split_proposal(env.payload);
    EXPECT_NE(m.split_client, env.sender);
    split_of[{m.tree, m.node}][env.sender] = m.split_client;
    const auto& labeled = s.partition.labeled_ids[static_cast<std::size_t>(env.receiver)];
    for (const auto& e : m.entries) {
      for (int id : e.ids) EXPECT_TRUE(std::binary_search(labeled.begin(), labeled.end(), id));
    }
  }
  ASSERT_FALSE(split_of.empty());

  for (const auto& env : fed.network().captured()) {
    const auto kind = kind_from_tag(env.kind);
    ASSERT_TRUE(kind.has_value());
    if (*kind == MessageKind::kPartialSumReply) {
      // Replies reach the source sealed under its split client's key.
      const auto [tree, node] = peek_tree_node(env.payload);
      const int split = split_of.at({tree, node}).at(env.receiver);
      const auto& pk = fed.client(0).public_keys()[static_cast<std::size_t>(split)];
      for (const auto& e : decode_partial_sum_reply(env.payload, &pk).entries) {
        if (!e.accepted) continue;
        EXPECT_TRUE(e.G.encrypted && e.H.encrypted);
        EXPECT_EQ(e.G.cipher.key_id, pk.key_id);
        EXPECT_NE(e.G.cipher.key_id, fed.client(0).public_keys()[static_cast<std::size_t>(env.receiver)].key_id);
      }
    }
    if (*kind == MessageKind::kEncCandidateSums) {
      const auto [tree, node] = peek_tree_node(env.payload);
      const auto& pk = fed.client(0).public_keys()[static_cast<std::size_t>(env.receiver)];
      const auto m = decode_enc_candidate_sums(env.payload, &pk);
      EXPECT_EQ(split_of.at({tree, node}).at(env.sender), env.receiver);
      for (const auto& e : m.entries) EXPECT_EQ(e.G.cipher.key_id, pk.key_id);
    }
    // The source alone sends ID sets for its candidates; only its split
    // client may see none of them besides its own intersection.
    if (*kind == MessageKind::kSplitProposal) {
      const auto m = decode_split_proposal(env.payload);
      if (env.receiver == m.split_client) {
        const auto& labeled = s.partition.labeled_ids[static_cast<std::size_t>(env.receiver)];
        for (const auto& e : m.entries) {
          for (int id : e.ids) EXPECT_TRUE(std::binary_search(labeled.begin(), labeled.end(), id));
        }
      }
    }
  }

  // No payload carries a committed threshold value.
  int thresholds = 0;
  for (int c = 0; c < fed.size(); ++c) {
    for (const auto& e : fed.client(c).lookup_table()) {
      ++thresholds;
      for (const auto& env : fed.network().captured()) {
        EXPECT_FALSE(pivodl::testing::contains_bytes(env.payload, &e.threshold, sizeof e.threshold))
            << kind_name(env.kind);
      }
    }
  }
  EXPECT_GT(thresholds, 0);
}

TEST(Privacy, LeafWeightsStayWithHolders) {
  const auto s = make_setup(150, 6, 3, 9);
  Federation fed(s.data, s.partition, exact_config(2, 2, 8, 256));
  fed.train();
  std::set<int> record_owners;
  for (const auto& tree : fed.ensemble().trees) {
    for (const auto& n : tree.nodes) {
      if (n.kind == NodeKind::kInternal) {
        int holders = 0;
        for (int c = 0; c < fed.size(); ++c) {
          const auto& lt = fed.client(c).lookup_table();
          holders += c == n.owner.source_client && n.owner.record_id < static_cast<int>(lt.size());
        }
        EXPECT_EQ(holders, 1);
        EXPECT_THROW(fed.client((n.owner.source_client + 1) % fed.size()).route(n.owner.record_id + 1000, 0),
                     ProtocolError);
      } else {
        int holders = 0;
        for (int c = 0; c < fed.size(); ++c) holders += fed.client(c).received_table().count(n.leaf);
        EXPECT_EQ(holders, 1);
      }
    }
  }
  for (int c = 0; c < fed.size(); ++c) {
    for (std::size_t r = 0; r < fed.client(c).lookup_table().size(); ++r) {
      EXPECT_EQ(fed.client(c).lookup_table()[r].record_id, static_cast<int>(r));
    }
  }
}

TEST(Determinism, IdenticalSeedsGiveIdenticalTranscripts) {
  const auto s = make_setup(100, 5, 3, 11);
  auto cfg = exact_config(2, 2, 8, 256);
  cfg.dp.enabled = true;
  cfg.instance_threshold = 3;
  std::vector<std::vector<simnet::Envelope>> runs;
  for (int i = 0; i < 2; ++i) {
    Federation fed(s.data, s.partition, cfg);
    fed.network().set_capture(true);
    fed.train();
    runs.push_back(fed.network().captured());
  }
  ASSERT_EQ(runs[0].size(), runs[1].size());
  for (std::size_t i = 0; i < runs[0].size(); ++i) {
    EXPECT_EQ(runs[0][i].kind, runs[1][i].kind);
    EXPECT_EQ(runs[0][i].sender, runs[1][i].sender);
    EXPECT_EQ(runs[0][i].receiver, runs[1][i].receiver);
    EXPECT_EQ(runs[0][i].round, runs[1][i].round);
    ASSERT_EQ(runs[0][i].payload, runs[1][i].payload) << i;
  }

  cfg.seed = 2;
  Federation other(s.data, s.partition, cfg);
  other.network().set_capture(true);
  other.train();
  bool differs = other.network().captured().size() != runs[0].size();
  for (std::size_t i = 0; !differs && i < runs[0].size(); ++i) differs = other.network().captured()[i].payload != runs[0][i].payload;
  EXPECT_TRUE(differs);
}

TEST(Prediction, MaskedUnmaskedAndDirectAgree) {
  const auto s = make_setup(150, 6, 4, 12);
  const auto cfg = exact_config(5, 3, 8, 256);
  Federation fed(s.data, s.partition, cfg);
  fed.train();
  const auto masked = fed.predict_raw(s.split.test, true);
  const auto plain = fed.predict_raw(s.split.test, false);
  const auto ref = centralized_train(s.data, s.split.train, cfg.boosting, {pivodl::testing::candidate_order(s.partition), false, 40});
  for (std::size_t i = 0; i < s.split.test.size(); ++i) {
    EXPECT_NEAR(masked[i], plain[i], 1e-9);
    EXPECT_NEAR(plain[i], fed.predict_direct(s.split.test[i]), 1e-9);
    EXPECT_NEAR(plain[i], predict_raw(ref, feature_row(s.data, s.split.test[i])), 1e-8);
  }
  EXPECT_GT(fed.prediction_network().snapshot_metrics().total_bytes, 0u);
}

TEST(Prediction, MaskedSharesHideSingleContributions) {
  const auto s = make_setup(120, 6, 3, 13);
  Federation fed(s.data, s.partition, exact_config(3, 2, 8, 256));
  fed.train();
  fed.prediction_network().set_capture(true);
  const std::vector<int> rows{s.split.test.front()};
  fed.predict_raw(rows, true);
  std::set<std::uint64_t> shares;
  for (const auto& env : fed.prediction_network().captured()) {
    if (env.kind != tag_of(MessageKind::kMaskedShare)) continue;
    const auto m = decode_masked_share(env.payload);
    // A masked share is a uniform-looking 64-bit word, far from any small fixed-point leaf sum.
    const auto v = static_cast<std::int64_t>(m.share);
    EXPECT_GT(std::llabs(v), std::int64_t{1} << 50);
    shares.insert(m.share);
  }
  EXPECT_EQ(shares.size(), 2u);
}

TEST(Prediction, RoutingToAClientWithoutTheRecordFails) {
  const auto s = make_setup(100, 4, 2, 14);
  Federation fed(s.data, s.partition, exact_config(1, 2, 4, 256));
  fed.train();
  const auto& root = fed.ensemble().trees[0].nodes[0];
  ASSERT_EQ(root.kind, NodeKind::kInternal);
  const auto& source = fed.client(root.owner.source_client);
  EXPECT_NO_THROW(source.route(root.owner.record_id, 0));
  EXPECT_THROW(source.route(static_cast<int>(source.lookup_table().size()), 0), ProtocolError);
}

TEST(Additivity, OwnedPredictionsGrowByLeafValues) {
  for (bool dp_on : {false, true}) {
    const auto s = make_setup(150, 6, 3, 15);
    auto cfg = exact_config(3, 3, 8, 256);
    cfg.dp.enabled = dp_on;
    Federation fed(s.data, s.partition, cfg);
    fed.network().set_capture(true);
    fed.setup_exchange();
    std::vector<std::vector<double>> before(3);
    for (int c = 0; c < 3; ++c) before[static_cast<std::size_t>(c)] = fed.client(c).raw_predictions();
    int perturbed_updates = 0;
    for (int t = 0; fed.train_tree(); ++t) {
      for (int c = 0; c < 3; ++c) {
        const auto& now = fed.client(c).raw_predictions();
        const auto& ids = fed.client(c).data().labeled_ids;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const TreeNode& leaf = pivodl::testing::leaf_for(fed, t, ids[k]);
          const double w = fed.client(leaf.leaf.holder_client).held_leaf(leaf.leaf);
          const double step = now[k] - before[static_cast<std::size_t>(c)][k];
          if (dp_on && leaf.leaf.parent.source_client == c && leaf.leaf.holder_client != c) {
            ++perturbed_updates;
          } else {
            EXPECT_NEAR(step, cfg.boosting.learning_rate * w, 1e-12);
          }
        }
        before[static_cast<std::size_t>(c)] = now;
      }
    }
    if (dp_on) {
      EXPECT_GT(perturbed_updates, 0);
      const auto audit = pivodl::testing::audit_leaf_releases(fed, fed.network(), true);
      EXPECT_EQ(audit.violations, 0);
      EXPECT_GT(audit.perturbed_copies, 0);
    } else {
      EXPECT_EQ(pivodl::testing::audit_leaf_releases(fed, fed.network(), false).violations, 0);
    }
  }
}

TEST(Weakened, SourceIsItsOwnSplitClient) {
  const auto s = make_setup(100, 6, 3, 16);
  auto cfg = exact_config(1, 2, 8, 256);
  cfg.weakened = true;
  Federation fed(s.data, s.partition, cfg);
  fed.network().set_capture(true);
  fed.train();
  int plain_replies = 0;
  for (const auto& env : fed.network().captured()) {
    if (env.kind == tag_of(MessageKind::kSplitProposal)) {
      EXPECT_EQ(decode_split_proposal(env.payload).split_client, env.sender);
    }
    if (env.kind == tag_of(MessageKind::kPartialSumReply)) {
      for (const auto& e : decode_partial_sum_reply(env.payload, nullptr).entries) plain_replies += !e.G.encrypted;
    }
  }
  EXPECT_GT(plain_replies, 0);
  const auto d = pivodl::testing::compare_with_oracle(fed, s, cfg.boosting);
  EXPECT_EQ(d.structural_mismatches + d.split_mismatches, 0);
}

TEST(Plaintext, EncryptionOffMatchesOracleWithSmallerMessages) {
  const auto s = make_setup(100, 6, 3, 17);
  auto cfg = exact_config(2, 2, 8, 256);
  Federation enc(s.data, s.partition, cfg);
  enc.train();
  cfg.encryption = false;
  Federation plain(s.data, s.partition, cfg);
  plain.train();
  EXPECT_LT(plain.network().snapshot_metrics().total_bytes, enc.network().snapshot_metrics().total_bytes);
  const auto d = pivodl::testing::compare_with_oracle(plain, s, cfg.boosting);
  EXPECT_EQ(d.structural_mismatches + d.split_mismatches, 0);
}
