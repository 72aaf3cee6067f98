#pragma once

#include <map>
#include <span>
#include <vector>

#include "pivodl/gbdt.hpp"
#include "pivodl/protocol.hpp"

namespace pivodl::attacks {

// Everything one honest-but-curious client legitimately holds after a run:
// its own data and private tables, the public tree structure, and the
// envelopes it sent or received.
struct AttackerView {
  int client_id = 0;
  int n_clients = 0;
  std::vector<int> train_ids;
  std::vector<std::vector<int>> label_sets;
  ClientData data;
  std::vector<protocol::RecordEntry> lookup;
  std::map<LeafRef, double> held;
  Ensemble ensemble;
  std::vector<protocol::ViewEntry> log;
  int scale_bits = 40;
};

// Requires the run to have been configured with record_views.
AttackerView make_view(const protocol::Client& client);

// Label from a logistic gradient and the probability it was taken at:
// round(p - g) clipped to {0, 1}.
int invert_gradient(double g, double prev_probability);

enum class DiffMode { kAdjacentSplits, kParentChild };

struct Recovery {
  int tree = 0;
  int node = 0;
  int peer = -1;  // client whose reply (adjacent mode) produced the pair
  int sample_id = -1;
  double g = 0.0;
};

// Differences of plaintext sums over known ID sets that differ in exactly
// one sample labeled by another client.
std::vector<Recovery> differential_attack(const AttackerView& view, DiffMode mode);

struct AttackReport {
  int attacker = 0;
  std::map<int, int> guesses;  // sample id -> guessed label
  int evidenced = 0;
  int correct = 0;
  double guess_accuracy = 0.0;
};

// Ensembles every leaf value the attacker observed for samples whose leaf
// membership it can determine, then thresholds the sigmoid at 0.5. `labels`
// is indexed by row and used only for scoring.
AttackReport label_guess_attack(const AttackerView& view, std::span<const double> labels);

struct AttackSummary {
  double mean_client_accuracy = 0.0;  // unweighted mean over attackers with evidence
  double pooled_accuracy = 0.0;       // total correct / total evidenced
  int evidenced = 0;
  std::vector<AttackReport> reports;
};

AttackSummary summarize(std::vector<AttackReport> reports);

}  // namespace pivodl::attacks
