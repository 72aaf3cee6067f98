#include "pivodl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pivodl/rng.hpp"

namespace pivodl {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  cells.push_back(cell);
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header row");
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  int label_col = static_cast<int>(header.size()) - 1;
  if (!schema.label_column.empty()) {
    auto it = std::find(header.begin(), header.end(), schema.label_column);
    if (it == header.end()) throw DataError("label column '" + schema.label_column + "' not in header");
    label_col = static_cast<int>(it - header.begin());
  }

  std::vector<int> feature_cols;
  Dataset data;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    if (c == label_col) continue;
    if (std::find(schema.drop.begin(), schema.drop.end(), header[c]) != schema.drop.end()) continue;
    feature_cols.push_back(c);
    data.feature_names.push_back(header[c]);
  }
  data.columns.resize(feature_cols.size());

  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                      " cells, got " + std::to_string(cells.size()));
    }
    auto parse = [&](int col) {
      const std::string cell = trim(cells[col]);
      if (cell.empty()) {
        throw DataError("row " + std::to_string(row) + ", column '" + header[col] + "': missing value");
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw DataError("row " + std::to_string(row) + ", column '" + header[col] +
                        "': not numeric: '" + cell + "'");
      }
      return v;
    };
    for (std::size_t f = 0; f < feature_cols.size(); ++f) data.columns[f].push_back(parse(feature_cols[f]));
    data.labels.push_back(parse(label_col));
  }
  return data;
}

void VerticalPartition::validate(std::size_t n_features) const {
  if (n_clients < 1) throw DataError("partition has no clients");
  if (features.size() != static_cast<std::size_t>(n_clients) ||
      labeled_ids.size() != static_cast<std::size_t>(n_clients)) {
    throw DataError("partition client count mismatch");
  }
  std::vector<int> seen_feature(n_features, 0);
  for (const auto& fs : features) {
    if (fs.empty()) throw DataError("client without features");
    for (int f : fs) {
      if (f < 0 || static_cast<std::size_t>(f) >= n_features) throw DataError("feature id out of range");
      ++seen_feature[f];
    }
  }
  for (int s : seen_feature) {
    if (s != 1) throw DataError("feature not assigned to exactly one client");
  }
  std::vector<int> all;
  for (const auto& ids : labeled_ids) all.insert(all.end(), ids.begin(), ids.end());
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw DataError("overlapping label ownership");
  }
  if (all != train_ids) throw DataError("labeled IDs do not cover the training IDs");
}

TrainTestSplit train_test_split(std::size_t n_rows, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw DataError("train fraction must lie in (0, 1)");
  }
  std::vector<int> order(n_rows);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, {tag(Stream::kShuffle)});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n_rows)));
  TrainTestSplit out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

VerticalPartition partition_vertical(const Dataset& data, const TrainTestSplit& split, int n_clients,
                                     LabelDistribution labels, std::uint64_t seed) {
  if (n_clients < 1) throw DataError("need at least one client");
  if (static_cast<std::size_t>(n_clients) > data.features()) {
    throw DataError("more clients (" + std::to_string(n_clients) + ") than features (" +
                    std::to_string(data.features()) + ")");
  }
  VerticalPartition p;
  p.n_clients = n_clients;
  p.train_ids = split.train;
  p.test_ids = split.test;
  p.features.resize(n_clients);
  p.labeled_ids.resize(n_clients);
  p.feature_owner.assign(data.features(), -1);

  Rng rng = make_rng(seed, {tag(Stream::kPartition)});
  std::vector<int> order(data.features());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(n_clients));
    p.features[c].push_back(order[i]);
    p.feature_owner[order[i]] = c;
  }
  for (auto& fs : p.features) std::sort(fs.begin(), fs.end());

  if (labels == LabelDistribution::kUniformRandom) {
    std::uniform_int_distribution<int> pick(0, n_clients - 1);
    for (int id : p.train_ids) p.labeled_ids[pick(rng)].push_back(id);
  } else {
    const std::size_t n = p.train_ids.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = i * static_cast<std::size_t>(n_clients) / std::max<std::size_t>(n, 1);
      p.labeled_ids[c].push_back(p.train_ids[i]);
    }
  }
  p.validate(data.features());
  return p;
}

std::string partition_manifest_json(const VerticalPartition& p, std::uint64_t seed) {
  nlohmann::json j;
  j["seed"] = seed;
  j["n_clients"] = p.n_clients;
  j["train_ids"] = p.train_ids;
  j["test_ids"] = p.test_ids;
  j["clients"] = nlohmann::json::array();
  for (int c = 0; c < p.n_clients; ++c) {
    j["clients"].push_back({{"client_id", c},
                            {"features", p.features[c]},
                            {"labeled_ids", p.labeled_ids[c]}});
  }
  return j.dump(2);
}

std::vector<ClientData> make_client_data(const Dataset& data, const VerticalPartition& p) {
  p.validate(data.features());
  std::vector<ClientData> out(p.n_clients);
  for (int c = 0; c < p.n_clients; ++c) {
    auto& cd = out[c];
    cd.client_id = c;
    cd.feature_ids = p.features[c];
    for (int f : cd.feature_ids) cd.columns.push_back(data.columns[f]);
    cd.labeled_ids = p.labeled_ids[c];
    for (int id : cd.labeled_ids) cd.labels.push_back(data.labels[id]);
  }
  return out;
}

namespace {

Dataset gaussian_features(std::size_t rows, std::size_t features, Rng& rng) {
  Dataset d;
  std::normal_distribution<double> normal(0.0, 1.0);
  d.columns.assign(features, std::vector<double>(rows));
  for (std::size_t f = 0; f < features; ++f) {
    d.feature_names.push_back("x" + std::to_string(f));
    for (std::size_t r = 0; r < rows; ++r) d.columns[f][r] = normal(rng);
  }
  return d;
}

}  // namespace

Dataset make_synthetic_binary(std::size_t rows, std::size_t features, std::uint64_t seed, double label_noise) {
  Rng rng = make_rng(seed, {tag(Stream::kData), 1});
  Dataset d = gaussian_features(rows, features, rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  d.labels.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double score = 0.0;
    for (std::size_t f = 0; f < features; ++f) score += d.columns[f][r] / static_cast<double>(f + 1);
    double y = score > 0.0 ? 1.0 : 0.0;
    if (unit(rng) < label_noise) y = 1.0 - y;
    d.labels[r] = y;
  }
  return d;
}

Dataset make_synthetic_regression(std::size_t rows, std::size_t features, std::uint64_t seed, double noise_std) {
  Rng rng = make_rng(seed, {tag(Stream::kData), 2});
  Dataset d = gaussian_features(rows, features, rng);
  std::normal_distribution<double> noise(0.0, noise_std);
  d.labels.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double y = 2.0 * std::sin(d.columns[0][r]);
    for (std::size_t f = 0; f < features; ++f) y += d.columns[f][r] / static_cast<double>(f + 1);
    d.labels[r] = y + noise(rng);
  }
  return d;
}

Dataset shuffle_labels(const Dataset& data, std::uint64_t seed) {
  Dataset out = data;
  Rng rng = make_rng(seed, {tag(Stream::kShuffle), 7});
  std::shuffle(out.labels.begin(), out.labels.end(), rng);
  return out;
}

}  // namespace pivodl
