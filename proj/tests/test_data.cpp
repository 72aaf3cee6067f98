#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "pivodl/data.hpp"

using namespace pivodl;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / ("pivodl_" + name);
  std::ofstream(path) << body;
  return path;
}

Dataset blank(std::size_t rows, std::size_t features) {
  Dataset d;
  d.columns.assign(features, std::vector<double>(rows, 0.0));
  d.labels.assign(rows, 0.0);
  for (std::size_t f = 0; f < features; ++f) d.feature_names.push_back("f" + std::to_string(f));
  return d;
}

}  // namespace

TEST(Csv, LoadsValuesAndLabel) {
  const auto path = write_temp("ok.csv", "id,a,b,y\n1,0.5,2,1\n2,-1.25,3,0\n");
  const Dataset d = load_csv(path, {"y", {"id"}});
  ASSERT_EQ(d.rows(), 2u);
  ASSERT_EQ(d.features(), 2u);
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(d.at(1, 0), -1.25);
  EXPECT_EQ(d.at(0, 1), 2.0);
  EXPECT_EQ(d.labels, (std::vector<double>{1.0, 0.0}));

  const Dataset last = load_csv(path);
  EXPECT_EQ(last.features(), 3u);
  EXPECT_EQ(last.labels, d.labels);
}

TEST(Csv, MissingCellNamesRowAndColumn) {
  const auto path = write_temp("missing.csv", "a,b,y\n1,2,0\n3,,1\n");
  try {
    load_csv(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
  }
}

TEST(Csv, NonNumericCellNamesRowAndColumn) {
  const auto path = write_temp("text.csv", "a,b,y\nabc,2,0\n");
  try {
    load_csv(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'a'"), std::string::npos) << msg;
  }
}

TEST(Csv, MissingFileAndBadLabel) {
  EXPECT_THROW(load_csv("/nonexistent/file.csv"), DataError);
  const auto path = write_temp("nolabel.csv", "a,b\n1,2\n");
  EXPECT_THROW(load_csv(path, {"y", {}}), DataError);
}

TEST(Partition, FeatureCountsAreBalanced) {
  const Dataset d = blank(100, 23);
  const auto split = train_test_split(100, 0.8, 1);
  const auto p = partition_vertical(d, split, 4, LabelDistribution::kUniformRandom, 3);
  std::multiset<std::size_t> sizes;
  for (const auto& fs : p.features) sizes.insert(fs.size());
  EXPECT_EQ(sizes, (std::multiset<std::size_t>{5, 6, 6, 6}));
  std::vector<int> all;
  for (const auto& fs : p.features) all.insert(all.end(), fs.begin(), fs.end());
  std::sort(all.begin(), all.end());
  std::vector<int> expect(23);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(all, expect);
}

TEST(Partition, MoreClientsThanFeaturesThrows) {
  const Dataset d = blank(10, 3);
  const auto split = train_test_split(10, 0.8, 1);
  EXPECT_THROW(partition_vertical(d, split, 4, LabelDistribution::kUniformRandom, 1), DataError);
}

TEST(Partition, UniformLabelsAreDisjointAndBalanced) {
  const Dataset d = blank(12500, 8);
  const auto split = train_test_split(12500, 0.8, 5);
  ASSERT_EQ(split.train.size(), 10000u);
  const auto p = partition_vertical(d, split, 4, LabelDistribution::kUniformRandom, 6);
  std::set<int> seen;
  for (const auto& ids : p.labeled_ids) {
    EXPECT_NEAR(static_cast<double>(ids.size()), 2500.0, 150.0);
    for (int id : ids) EXPECT_TRUE(seen.insert(id).second);
  }
  EXPECT_EQ(seen.size(), 10000u);
}

TEST(Partition, ContiguousBlocks) {
  const Dataset d = blank(50, 4);
  const auto split = train_test_split(50, 0.8, 2);
  const auto p = partition_vertical(d, split, 4, LabelDistribution::kContiguousBlocks, 2);
  for (int c = 1; c < 4; ++c) EXPECT_LT(p.labeled_ids[c - 1].back(), p.labeled_ids[c].front());
}

TEST(Partition, ValidateCatchesOverlap) {
  const Dataset d = blank(20, 4);
  const auto split = train_test_split(20, 0.5, 2);
  auto p = partition_vertical(d, split, 2, LabelDistribution::kUniformRandom, 2);
  p.labeled_ids[0].push_back(p.labeled_ids[1].front());
  std::sort(p.labeled_ids[0].begin(), p.labeled_ids[0].end());
  EXPECT_THROW(p.validate(4), DataError);
}

TEST(Split, SizesAndDeterminism) {
  const auto a = train_test_split(30000, 0.8, 9);
  EXPECT_EQ(a.train.size(), 24000u);
  EXPECT_EQ(a.test.size(), 6000u);
  const auto b = train_test_split(30000, 0.8, 9);
  EXPECT_EQ(a.train, b.train);
  const auto c = train_test_split(30000, 0.8, 10);
  EXPECT_NE(a.train, c.train);
  std::vector<int> merged = a.train;
  merged.insert(merged.end(), a.test.begin(), a.test.end());
  std::sort(merged.begin(), merged.end());
  EXPECT_EQ(std::adjacent_find(merged.begin(), merged.end()), merged.end());
  EXPECT_EQ(merged.size(), 30000u);
  EXPECT_THROW(train_test_split(10, 1.0, 1), DataError);
}

TEST(ClientData, SlicesColumnsAndLabels) {
  const Dataset d = make_synthetic_binary(40, 5, 1);
  const auto split = train_test_split(40, 0.75, 1);
  const auto p = partition_vertical(d, split, 2, LabelDistribution::kUniformRandom, 1);
  const auto cds = make_client_data(d, p);
  for (const auto& cd : cds) {
    for (std::size_t j = 0; j < cd.feature_ids.size(); ++j) EXPECT_EQ(cd.columns[j], d.columns[cd.feature_ids[j]]);
    for (std::size_t i = 0; i < cd.labeled_ids.size(); ++i) EXPECT_EQ(cd.labels[i], d.labels[cd.labeled_ids[i]]);
  }
}

TEST(Synthetic, ShuffledLabelsKeepTheMultiset) {
  const Dataset d = make_synthetic_binary(200, 4, 3);
  const Dataset s = shuffle_labels(d, 4);
  auto a = d.labels, b = s.labels;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
  EXPECT_NE(d.labels, s.labels);
  EXPECT_EQ(d.columns, s.columns);
}
