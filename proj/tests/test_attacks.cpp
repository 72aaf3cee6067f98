#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <tuple>

#include "federation_support.hpp"
#include "pivodl/attacks.hpp"

using namespace pivodl;
using namespace pivodl::attacks;
using pivodl::testing::make_setup;

namespace {

protocol::ProtocolConfig attack_config(bool weakened, bool encryption) {
  protocol::ProtocolConfig cfg;
  cfg.boosting.trees = 2;
  cfg.boosting.buckets = 16;
  cfg.key_bits = 256;
  cfg.dp.enabled = false;
  cfg.instance_threshold = 0;
  cfg.weakened = weakened;
  cfg.encryption = encryption;
  cfg.record_views = true;
  return cfg;
}

// Exact gradient of `id` in tree `t`, read from its label owner's history.
double true_gradient(const protocol::Federation& fed, int t, int id) {
  for (int c = 0; c < fed.size(); ++c) {
    const auto& ids = fed.client(c).data().labeled_ids;
    const auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it != ids.end() && *it == id) {
      const auto q = fed.client(c).gradient_history().at(static_cast<std::size_t>(t))[static_cast<std::size_t>(it - ids.begin())];
      return paillier::FixedPointCodec::dequantize(q, 40);
    }
  }
  return NAN;
}

using PairKey = std::tuple<int, int, int, int, int>;  // attacker, tree, node, peer, sample

// Independent count of one-sample-apart candidate pairs visible to each
// attacker: all pairs of plaintext-answered proposals to the same peer.
std::set<PairKey> adjacent_pairs(const protocol::Federation& fed) {
  std::set<PairKey> out;
  for (int a = 0; a < fed.size(); ++a) {
    std::map<std::tuple<int, int, int>, std::map<int, std::vector<int>>> sent;
    std::map<std::tuple<int, int, int>, std::set<int>> answered;
    for (const auto& e : fed.client(a).view()) {
      if (e.outgoing && e.env.kind == protocol::tag_of(protocol::MessageKind::kSplitProposal)) {
        const auto m = protocol::decode_split_proposal(e.env.payload);
        for (const auto& p : m.entries) sent[{m.tree, m.node, e.env.receiver}][p.record_number] = p.ids;
      }
      if (!e.outgoing && e.env.kind == protocol::tag_of(protocol::MessageKind::kPartialSumReply)) {
        const auto m = protocol::decode_partial_sum_reply(e.env.payload, nullptr);
        for (const auto& r : m.entries) {
          if (r.accepted && !r.G.encrypted) answered[{m.tree, m.node, e.env.sender}].insert(r.record_number);
        }
      }
    }
    for (const auto& [key, rs] : answered) {
      const auto& ids = sent.at(key);
      for (int r1 : rs) {
        for (int r2 : rs) {
          std::set<int> big(ids.at(r2).begin(), ids.at(r2).end());
          const auto& small = ids.at(r1);
          if (big.size() != small.size() + 1) continue;
          bool subset = true;
          for (int i : small) subset = subset && big.erase(i) == 1;
          if (subset) out.insert({a, std::get<0>(key), std::get<1>(key), std::get<2>(key), *big.begin()});
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST(Invert, Examples) {
  EXPECT_EQ(invert_gradient(-0.5, 0.5), 1);
  EXPECT_EQ(invert_gradient(0.5, 0.5), 0);
  EXPECT_EQ(invert_gradient(-0.3, 0.7), 1);
  EXPECT_EQ(invert_gradient(0.7, 0.7), 0);
}

TEST(Invert, SubtractionRecoversTheMissingGradient) {
  const std::vector<double> g{0.5, -0.5, 0.25};
  const double with = g[0] + g[1] + g[2];
  const double without = g[0] + g[2];
  EXPECT_DOUBLE_EQ(with - without, -0.5);
  EXPECT_EQ(invert_gradient(with - without, 0.5), 1);
}

TEST(Differential, WeakenedRunLeaksEveryAdjacentGradient) {
  const auto s = make_setup(300, 6, 3, 21);
  const auto cfg = attack_config(true, false);
  protocol::Federation fed(s.data, s.partition, cfg);
  fed.train();
  std::set<PairKey> recovered;
  int tree0 = 0, tree0_correct = 0;
  for (int a = 0; a < fed.size(); ++a) {
    const auto view = make_view(fed.client(a));
    for (const auto& r : differential_attack(view, DiffMode::kAdjacentSplits)) {
      EXPECT_EQ(r.g, true_gradient(fed, r.tree, r.sample_id));
      recovered.insert({a, r.tree, r.node, r.peer, r.sample_id});
      if (r.tree == 0) {
        ++tree0;
        tree0_correct += invert_gradient(r.g, 0.5) == static_cast<int>(s.data.labels[static_cast<std::size_t>(r.sample_id)]);
      }
    }
  }
  const auto expected = adjacent_pairs(fed);
  EXPECT_FALSE(expected.empty());
  EXPECT_EQ(recovered, expected);
  EXPECT_GT(tree0, 0);
  EXPECT_EQ(tree0_correct, tree0);
}

TEST(Differential, GenuineRunLeaksNothing) {
  for (std::uint64_t seed : {22u, 23u}) {
    const auto s = make_setup(300, 6, 3, seed);
    auto cfg = attack_config(false, true);
    cfg.seed = seed;
    protocol::Federation fed(s.data, s.partition, cfg);
    fed.train();
    for (int a = 0; a < fed.size(); ++a) {
      const auto view = make_view(fed.client(a));
      EXPECT_TRUE(differential_attack(view, DiffMode::kAdjacentSplits).empty());
      EXPECT_TRUE(differential_attack(view, DiffMode::kParentChild).empty());
    }
  }
}

TEST(Differential, PlaintextSumsWithoutRoleSeparationStillNeedTheSource) {
  // Encryption off but split clients kept: replies go to the source in the
  // clear, so the adjacent-split attack works without the weakened flag.
  const auto s = make_setup(300, 6, 3, 24);
  protocol::Federation fed(s.data, s.partition, attack_config(false, false));
  fed.train();
  std::size_t total = 0;
  for (int a = 0; a < fed.size(); ++a) {
    for (const auto& r : differential_attack(make_view(fed.client(a)), DiffMode::kAdjacentSplits)) {
      EXPECT_EQ(r.g, true_gradient(fed, r.tree, r.sample_id));
      ++total;
    }
  }
  EXPECT_GT(total, 0u);
}

TEST(LabelGuess, EvidenceOnlyCoversForeignSamples) {
  const auto s = make_setup(300, 6, 3, 25);
  auto cfg = attack_config(false, true);
  protocol::Federation fed(s.data, s.partition, cfg);
  fed.train();
  for (int a = 0; a < fed.size(); ++a) {
    const auto rep = label_guess_attack(make_view(fed.client(a)), s.data.labels);
    EXPECT_EQ(rep.attacker, a);
    EXPECT_EQ(rep.evidenced, static_cast<int>(rep.guesses.size()));
    EXPECT_GT(rep.evidenced, 0);
    const auto& own = s.partition.labeled_ids[static_cast<std::size_t>(a)];
    for (const auto& [id, g] : rep.guesses) {
      EXPECT_FALSE(std::binary_search(own.begin(), own.end(), id));
      EXPECT_TRUE(g == 0 || g == 1);
    }
  }
}

TEST(LabelGuess, IndependentLabelsGiveChanceAccuracy) {
  // Guesses scored against a permutation the model never saw.
  const auto base = make_setup(1200, 6, 4, 26);
  pivodl::testing::Setup s = base;
  s.data = shuffle_labels(base.data, 27);
  const Dataset independent = shuffle_labels(base.data, 28);
  auto cfg = attack_config(false, true);
  cfg.boosting.trees = 3;
  protocol::Federation fed(s.data, s.partition, cfg);
  fed.train();
  std::vector<AttackReport> fitted, fresh;
  for (int a = 0; a < fed.size(); ++a) {
    const auto view = make_view(fed.client(a));
    fitted.push_back(label_guess_attack(view, s.data.labels));
    fresh.push_back(label_guess_attack(view, independent.labels));
  }
  std::set<int> samples;
  for (const auto& r : fresh) {
    for (const auto& [id, g] : r.guesses) samples.insert(id);
  }
  ASSERT_GT(samples.size(), 100u);
  const double sigma = std::sqrt(0.25 / static_cast<double>(samples.size()));
  EXPECT_NEAR(summarize(fresh).pooled_accuracy, 0.5, 3.0 * sigma);
  // Leaves fit the training labels they were grown on, shuffled or not.
  EXPECT_GE(summarize(fitted).pooled_accuracy, summarize(fresh).pooled_accuracy);
}

TEST(LabelGuess, SummaryAverages) {
  AttackReport a, b, empty;
  a.evidenced = 10;
  a.correct = 8;
  a.guess_accuracy = 0.8;
  b.evidenced = 30;
  b.correct = 12;
  b.guess_accuracy = 0.4;
  const auto s = summarize({a, b, empty});
  EXPECT_DOUBLE_EQ(s.mean_client_accuracy, 0.6);
  EXPECT_DOUBLE_EQ(s.pooled_accuracy, 0.5);
  EXPECT_EQ(s.evidenced, 40);
}

TEST(View, RequiresRecordedViews) {
  const auto s = make_setup(60, 4, 2, 28);
  auto cfg = attack_config(false, true);
  cfg.record_views = false;
  protocol::Federation fed(s.data, s.partition, cfg);
  fed.train();
  EXPECT_THROW(make_view(fed.client(0)), std::invalid_argument);
}
