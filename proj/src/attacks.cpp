#include "pivodl/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <tuple>

namespace pivodl::attacks {

using protocol::MessageKind;

AttackerView make_view(const protocol::Client& client) {
  AttackerView v;
  v.client_id = client.id();
  v.n_clients = client.n_clients();
  v.train_ids = client.train_ids();
  v.label_sets = client.labeled_id_sets();
  v.data = client.data();
  v.lookup = client.lookup_table();
  v.held = client.received_table();
  v.ensemble = client.ensemble();
  v.log = client.view();
  if (v.log.empty() && v.n_clients > 1) throw std::invalid_argument("client view is empty; enable record_views");
  return v;
}

int invert_gradient(double g, double prev_probability) {
  const double y = std::round(prev_probability - g);
  return y >= 0.5 ? 1 : 0;
}

namespace {

bool is(const protocol::ViewEntry& e, MessageKind k) { return e.env.kind == protocol::tag_of(k); }

struct KnownSum {
  std::vector<int> ids;  // sorted
  double G = 0.0;
};

std::vector<bool> foreign_mask(const AttackerView& v) {
  std::size_t rows = 0;
  for (const auto& s : v.label_sets) {
    for (int i : s) rows = std::max(rows, static_cast<std::size_t>(i) + 1);
  }
  std::vector<bool> foreign(rows, false);
  for (int c = 0; c < v.n_clients; ++c) {
    if (c == v.client_id) continue;
    for (int i : v.label_sets[static_cast<std::size_t>(c)]) foreign[static_cast<std::size_t>(i)] = true;
  }
  return foreign;
}

std::optional<int> single_difference(const std::vector<int>& small, const std::vector<int>& big) {
  if (big.size() != small.size() + 1) return std::nullopt;
  if (!std::includes(big.begin(), big.end(), small.begin(), small.end())) return std::nullopt;
  std::vector<int> diff;
  std::set_difference(big.begin(), big.end(), small.begin(), small.end(), std::back_inserter(diff));
  return diff.front();
}

// Node IDs and plaintext gradient sums the attacker can attribute exactly.
std::map<std::pair<int, int>, KnownSum> known_node_sums(const AttackerView& v) {
  std::map<std::pair<int, int>, std::vector<int>> ids;
  std::map<std::pair<int, int>, double> sums;
  for (const auto& e : v.log) {
    if (e.outgoing) continue;
    if (is(e, MessageKind::kNodeStatPlain)) {
      const auto m = protocol::decode_node_stat_plain(e.env.payload);
      sums[{m.tree, m.node}] = m.G;
      ids[{m.tree, m.node}] = v.train_ids;
    } else if (is(e, MessageKind::kBranchContinue)) {
      const auto m = protocol::decode_branch_continue(e.env.payload);
      if (m.ids) ids[{m.tree, m.node}] = *m.ids;
      if (m.stats) sums[{m.tree, m.node}] = m.stats->first;
    }
  }
  std::map<std::pair<int, int>, KnownSum> known;
  for (auto& [key, s] : ids) {
    const auto it = sums.find(key);
    if (it == sums.end()) continue;
    std::sort(s.begin(), s.end());
    known[key] = {s, it->second};
  }
  return known;
}

}  // namespace

std::vector<Recovery> differential_attack(const AttackerView& v, DiffMode mode) {
  const auto foreign = foreign_mask(v);
  const auto is_foreign = [&](int i) { return i >= 0 && static_cast<std::size_t>(i) < foreign.size() && foreign[static_cast<std::size_t>(i)]; };
  std::vector<Recovery> out;

  if (mode == DiffMode::kAdjacentSplits) {
    // (tree, node, peer) -> R -> ids / plaintext sum
    std::map<std::tuple<int, int, int>, std::map<int, std::vector<int>>> sent;
    std::map<std::tuple<int, int, int>, std::map<int, __int128>> got;
    for (const auto& e : v.log) {
      if (e.outgoing && is(e, MessageKind::kSplitProposal)) {
        const auto m = protocol::decode_split_proposal(e.env.payload);
        auto& slot = sent[{m.tree, m.node, e.env.receiver}];
        for (const auto& p : m.entries) slot[p.record_number] = p.ids;
      } else if (!e.outgoing && is(e, MessageKind::kPartialSumReply)) {
        const auto m = protocol::decode_partial_sum_reply(e.env.payload, nullptr);
        auto& slot = got[{m.tree, m.node, e.env.sender}];
        for (const auto& r : m.entries) {
          if (r.accepted && !r.G.encrypted) slot[r.record_number] = r.G.plain;
        }
      }
    }
    for (const auto& [key, sums] : got) {
      const auto sit = sent.find(key);
      if (sit == sent.end()) continue;
      std::vector<std::pair<std::vector<int>, __int128>> pairs;
      for (const auto& [R, G] : sums) {
        const auto idit = sit->second.find(R);
        if (idit == sit->second.end()) continue;
        auto s = idit->second;
        std::sort(s.begin(), s.end());
        pairs.emplace_back(std::move(s), G);
      }
      std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first.size() < b.first.size(); });
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        for (std::size_t j = i + 1; j < pairs.size(); ++j) {
          if (pairs[j].first.size() > pairs[i].first.size() + 1) break;
          const auto id = single_difference(pairs[i].first, pairs[j].first);
          if (!id || !is_foreign(*id)) continue;
          const double g = paillier::FixedPointCodec::dequantize(pairs[j].second - pairs[i].second, v.scale_bits);
          out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), *id, g});
        }
      }
    }
  } else {
    auto known = known_node_sums(v);
    for (std::size_t t = 0; t < v.ensemble.trees.size(); ++t) {
      const auto& nodes = v.ensemble.trees[t].nodes;
      const int tree = static_cast<int>(t);
      // A known parent and one known child reveal the sibling.
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        const auto& n = nodes[p];
        if (n.kind != NodeKind::kInternal) continue;
        const auto pk = known.find({tree, static_cast<int>(p)});
        if (pk == known.end()) continue;
        for (int pair = 0; pair < 2; ++pair) {
          const int a = pair == 0 ? n.left : n.right;
          const int b = pair == 0 ? n.right : n.left;
          if (known.count({tree, b}) || !known.count({tree, a})) continue;
          const KnownSum& ka = known.at({tree, a});
          KnownSum kb;
          std::set_difference(pk->second.ids.begin(), pk->second.ids.end(), ka.ids.begin(), ka.ids.end(),
                              std::back_inserter(kb.ids));
          kb.G = pk->second.G - ka.G;
          known[{tree, b}] = std::move(kb);
        }
      }
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        const auto& n = nodes[p];
        if (n.kind != NodeKind::kInternal) continue;
        const auto pk = known.find({tree, static_cast<int>(p)});
        if (pk == known.end()) continue;
        for (int child : {n.left, n.right}) {
          const auto ck = known.find({tree, child});
          if (ck == known.end()) continue;
          const auto id = single_difference(ck->second.ids, pk->second.ids);
          if (!id || !is_foreign(*id)) continue;
          out.push_back({tree, child, -1, *id, pk->second.G - ck->second.G});
        }
      }
    }
  }
  return out;
}

AttackReport label_guess_attack(const AttackerView& v, std::span<const double> labels) {
  const auto foreign = foreign_mask(v);
  std::map<std::pair<int, int>, double> released;
  std::map<std::pair<int, int>, std::vector<int>> node_ids;
  for (const auto& e : v.log) {
    if (e.outgoing) continue;
    if (is(e, MessageKind::kLeafRelease)) {
      const auto m = protocol::decode_leaf_release(e.env.payload);
      released[{m.tree, m.node}] = m.value;
    } else if (is(e, MessageKind::kBranchContinue)) {
      const auto m = protocol::decode_branch_continue(e.env.payload);
      if (m.ids) node_ids[{m.tree, m.node}] = *m.ids;
    }
  }
  std::map<int, int> local;
  for (std::size_t f = 0; f < v.data.feature_ids.size(); ++f) local[v.data.feature_ids[f]] = static_cast<int>(f);

  std::map<int, double> evidence;
  for (std::size_t t = 0; t < v.ensemble.trees.size(); ++t) {
    const int tree = static_cast<int>(t);
    const auto& nodes = v.ensemble.trees[t].nodes;
    node_ids[{tree, 0}] = v.train_ids;
    std::vector<int> parent(nodes.size(), -1);
    for (std::size_t p = 0; p < nodes.size(); ++p) {
      if (nodes[p].kind == NodeKind::kInternal) {
        parent[static_cast<std::size_t>(nodes[p].left)] = static_cast<int>(p);
        parent[static_cast<std::size_t>(nodes[p].right)] = static_cast<int>(p);
      }
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const TreeNode& n = nodes[i];
      if (n.kind != NodeKind::kLeaf) continue;
      double value = 0.0;
      if (n.leaf.holder_client == v.client_id) {
        const auto it = v.held.find(n.leaf);
        if (it == v.held.end()) continue;
        value = it->second;
      } else {
        const auto it = released.find({tree, static_cast<int>(i)});
        if (it == released.end()) continue;
        value = it->second;
      }

      std::optional<std::vector<int>> ids;
      if (const auto it = node_ids.find({tree, static_cast<int>(i)}); it != node_ids.end()) {
        ids = it->second;
      } else if (parent[i] >= 0) {
        const int p = parent[i];
        const TreeNode& pn = nodes[static_cast<std::size_t>(p)];
        const auto pit = node_ids.find({tree, p});
        if (pit != node_ids.end() && pn.owner.source_client == v.client_id) {
          const auto& rec = v.lookup.at(static_cast<std::size_t>(pn.owner.record_id));
          const auto& col = v.data.columns[static_cast<std::size_t>(local.at(rec.feature))];
          std::vector<int> mine;
          const bool want_left = pn.left == static_cast<int>(i);
          for (int r : pit->second) {
            if ((col[static_cast<std::size_t>(r)] < rec.threshold) == want_left) mine.push_back(r);
          }
          ids = std::move(mine);
        } else if (pit != node_ids.end()) {
          const int sib = pn.left == static_cast<int>(i) ? pn.right : pn.left;
          const auto sit = node_ids.find({tree, sib});
          if (sit != node_ids.end()) {
            auto a = pit->second, b = sit->second;
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            std::vector<int> rest;
            std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(rest));
            ids = std::move(rest);
          }
        }
      }
      if (!ids) continue;
      for (int r : *ids) {
        if (static_cast<std::size_t>(r) < foreign.size() && foreign[static_cast<std::size_t>(r)]) evidence[r] += value;
      }
    }
  }

  AttackReport rep;
  rep.attacker = v.client_id;
  for (const auto& [r, sum] : evidence) {
    const int guess = sigmoid(v.ensemble.base_prediction + v.ensemble.learning_rate * sum) >= 0.5 ? 1 : 0;
    rep.guesses[r] = guess;
    ++rep.evidenced;
    if (static_cast<double>(guess) == labels[static_cast<std::size_t>(r)]) ++rep.correct;
  }
  rep.guess_accuracy = rep.evidenced > 0 ? static_cast<double>(rep.correct) / rep.evidenced : 0.0;
  return rep;
}

AttackSummary summarize(std::vector<AttackReport> reports) {
  AttackSummary s;
  int with = 0, correct = 0;
  double acc = 0.0;
  for (const auto& r : reports) {
    s.evidenced += r.evidenced;
    correct += r.correct;
    if (r.evidenced > 0) {
      acc += r.guess_accuracy;
      ++with;
    }
  }
  s.mean_client_accuracy = with > 0 ? acc / with : 0.0;
  s.pooled_accuracy = s.evidenced > 0 ? static_cast<double>(correct) / s.evidenced : 0.0;
  s.reports = std::move(reports);
  return s;
}

}  // namespace pivodl::attacks
