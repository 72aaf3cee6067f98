#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pivodl {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense column-major table. Row index doubles as the aligned sample ID.
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<std::vector<double>> columns;  // [feature][row]
  std::vector<double> labels;

  std::size_t rows() const { return labels.size(); }
  std::size_t features() const { return columns.size(); }
  double at(std::size_t row, std::size_t feature) const { return columns[feature][row]; }
};

struct CsvSchema {
  std::string label_column;       // empty selects the last column
  std::vector<std::string> drop;  // columns ignored entirely (e.g. an ID column)
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

enum class LabelDistribution { kUniformRandom, kContiguousBlocks };

// Per-client view of feature ownership and label ownership over the
// training IDs.
struct VerticalPartition {
  int n_clients = 0;
  std::vector<int> train_ids;                  // ascending
  std::vector<int> test_ids;                   // ascending
  std::vector<std::vector<int>> features;      // [client] -> ascending feature ids
  std::vector<std::vector<int>> labeled_ids;   // [client] -> ascending train ids
  std::vector<int> feature_owner;              // [feature] -> client

  // Definition check: features disjoint and covering, labels disjoint and
  // covering the training IDs.
  void validate(std::size_t n_features) const;
};

struct TrainTestSplit {
  std::vector<int> train;
  std::vector<int> test;
};

TrainTestSplit train_test_split(std::size_t n_rows, double train_fraction, std::uint64_t seed);

VerticalPartition partition_vertical(const Dataset& data, const TrainTestSplit& split, int n_clients,
                                     LabelDistribution labels, std::uint64_t seed);

// Partition manifest as a JSON document (sidecar for reproducibility).
std::string partition_manifest_json(const VerticalPartition& p, std::uint64_t seed);

// Everything one client holds locally.
struct ClientData {
  int client_id = 0;
  std::vector<int> feature_ids;              // global ids, ascending
  std::vector<std::vector<double>> columns;  // [local feature][row], all rows
  std::vector<int> labeled_ids;              // ascending train ids
  std::vector<double> labels;                // parallel to labeled_ids
};

std::vector<ClientData> make_client_data(const Dataset& data, const VerticalPartition& p);

// Synthetic tasks for desk-scale runs.
Dataset make_synthetic_binary(std::size_t rows, std::size_t features, std::uint64_t seed,
                              double label_noise = 0.0);
Dataset make_synthetic_regression(std::size_t rows, std::size_t features, std::uint64_t seed,
                                  double noise_std = 0.1);

Dataset shuffle_labels(const Dataset& data, std::uint64_t seed);

}  // namespace pivodl
