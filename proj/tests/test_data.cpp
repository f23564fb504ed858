#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "support.hpp"
#include "trace/dataset.hpp"
#include "trace/schema.hpp"

using namespace trace;

namespace {

TabularDataset read_text(const std::string& text, const FeatureSchema& schema) {
  std::istringstream in(text);
  return read_csv(in, schema);
}

// n samples with the first `positives` labelled 1.
TabularDataset labelled(Index n, Index positives) {
  auto schema = parse_schema("label: y\nfeatures:\n  - {name: x, kind: continuous}\n");
  auto d = TabularDataset::allocate(schema, n);
  for (Index i = 0; i < n; ++i) {
    d.continuous(i, 0) = static_cast<double>(i);
    d.labels(i) = i < positives ? 1 : 0;
  }
  return d;
}

}  // namespace

TEST_CASE("schema parsing") {
  auto s = parse_schema(R"(
label: melanoma
features:
  - {name: age, kind: continuous}
  - {name: sex, kind: categorical, cardinality: 2}
  - {name: ancestry, kind: checkbox, cardinality: 22}
)");
  CHECK(s.n_continuous() == 1);
  CHECK(s.n_categorical() == 1);
  CHECK(s.n_checkbox() == 1);
  CHECK(s.features()[2].cardinality == 22);
  CHECK(s.features()[2].members.front() == "ancestry.1");
  CHECK(s.csv_columns().size() == 1 + 1 + 22 + 1);

  CHECK_THROWS_AS(parse_schema("label: y\nfeatures: []\n"), SchemaError);
  CHECK_THROWS_AS(parse_schema("label: y\nfeatures:\n  - {name: age, kind: continuous}\n  - {name: age, kind: continuous}\n"),
                  SchemaError);
  CHECK_THROWS_AS(parse_schema("label: y\nfeatures:\n  - {name: a, kind: ordinal}\n"), SchemaError);
  CHECK_THROWS_AS(parse_schema("label: y\nfeatures:\n  - {name: a, kind: categorical, cardinality: 1}\n"), SchemaError);
  CHECK_THROWS_AS(parse_schema("label: y\nfeatures:\n  - {name: y, kind: continuous}\n"), SchemaError);
}

TEST_CASE("schema errors carry line numbers") {
  try {
    parse_schema("label: y\nfeatures:\n  - {name: a, kind: continuous}\n  - {name: b, kind: checkbox, cardinality: 1}\n");
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("schema fingerprint is stable and sensitive") {
  auto a = testing::toy_schema();
  auto b = parse_schema(a.to_json());
  CHECK(a == b);
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint().size() == 64);
  auto c = parse_schema(R"(
label: y
features:
  - {name: age, kind: continuous}
  - {name: ancestry, kind: checkbox, members: [a1, a2, a3]}
  - {name: skin, kind: categorical, categories: [I, II, III, V]}
)");
  CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("csv ingestion and missing cells") {
  const auto schema = testing::toy_schema();
  const auto d = read_text("age,a1,a2,a3,skin,y\n"
                           "41.5,1,0,1,II,1\n"
                           ",,,,,0\n"
                           "3,0,0,0,IV,0\n",
                           schema);
  REQUIRE(d.size() == 3);
  CHECK(d.continuous(0, 0) == 41.5);
  CHECK(d.checkbox[0].row(0) == Eigen::RowVector3d(1, 0, 1));
  CHECK_FALSE(d.checkbox_missing(0, 0));
  CHECK(d.categorical(0, 0) == 2);
  CHECK(d.continuous_missing(1, 0));
  CHECK(d.continuous(1, 0) == 0.0);
  CHECK(d.categorical(1, 0) == 0);
  CHECK(d.checkbox_missing(1, 0));
  CHECK_FALSE(d.checkbox_missing(2, 0));
  CHECK(d.checkbox[0].row(2).sum() == 0.0);
  CHECK(d.complete(0));
  CHECK_FALSE(d.complete(1));
  CHECK(d.missing_cells() == 3);
}

TEST_CASE("csv ingestion errors") {
  const auto schema = testing::toy_schema();
  CHECK_THROWS_AS(read_text("age,a1,a2,a3,skin,y\nabc,1,0,1,II,1\n", schema), IngestionError);
  CHECK_THROWS_AS(read_text("age,a1,a2,a3,skin,y\n1,1,0,1,VII,1\n", schema), IngestionError);
  CHECK_THROWS_AS(read_text("age,a1,a2,a3,skin,y\n1,2,0,1,II,1\n", schema), IngestionError);
  CHECK_THROWS_AS(read_text("age,a1,a2,a3,skin,y\n1,1,0,1,II,3\n", schema), IngestionError);
  CHECK_THROWS_AS(read_text("age,a1,a2,skin,y\n1,1,0,II,1\n", schema), IngestionError);
  CHECK_THROWS_AS(read_text("age,a1,a2,a3,skin,y,extra\n1,1,0,1,II,1,5\n", schema), IngestionError);
  CHECK_THROWS_AS(load_csv("/nonexistent/data.csv", schema), IoError);
  try {
    read_text("age,a1,a2,a3,skin,y\n1,1,0,1,II,1\n1,1,0,1,XX,0\n", schema);
  } catch (const IngestionError& e) {
    const std::string what = e.what();
    CHECK(what.find("row 2") != std::string::npos);
    CHECK(what.find("skin") != std::string::npos);
  }
}

TEST_CASE("csv round trip") {
  std::mt19937_64 rng(11);
  const auto schema = testing::toy_schema();
  const auto d = testing::random_dataset(schema, 200, rng, 0.2);
  std::ostringstream out;
  write_csv(out, d, schema);
  CHECK(read_text(out.str(), schema) == d);
}

TEST_CASE("quoted fields and CRLF") {
  auto schema = parse_schema("label: y\nfeatures:\n  - {name: c, kind: categorical, categories: ['a,b', 'q\"x']}\n");
  auto d = read_text("c,y\r\n\"a,b\",1\r\n\"q\"\"x\",0\r\n", schema);
  CHECK(d.categorical(0, 0) == 1);
  CHECK(d.categorical(1, 0) == 2);
}

TEST_CASE("standardization") {
  auto schema = parse_schema("label: y\nfeatures:\n  - {name: x, kind: continuous}\n  - {name: z, kind: continuous}\n");
  auto d = TabularDataset::allocate(schema, 2);
  d.continuous << 2, 0, 4, 0;
  d.continuous_missing(0, 1) = d.continuous_missing(1, 1) = true;
  auto stats = fit_standardization(d);
  CHECK(stats.mean(0) == 3.0);
  CHECK(stats.stddev(0) == 1.0);
  CHECK(stats.mean(1) == 0.0);
  CHECK(stats.stddev(1) == 1.0);
  auto s = apply_standardization(d, stats);
  CHECK(s.continuous(0, 0) == -1.0);
  CHECK(s.continuous(1, 0) == 1.0);
  CHECK(s.continuous(0, 1) == 0.0);

  auto val = TabularDataset::allocate(schema, 1);
  val.continuous << 5, 1;
  CHECK(apply_standardization(val, stats).continuous(0, 0) == 2.0);

  auto constant = TabularDataset::allocate(schema, 3);
  constant.continuous.col(0).setConstant(7.0);
  CHECK(fit_standardization(constant).stddev(0) == 1.0);
}

TEST_CASE("stratified split") {
  const auto d = labelled(100, 30);
  auto [train, val] = stratified_split(d, 0.2, 5);
  CHECK(val.positives() == 6);
  CHECK(val.negatives() == 14);
  CHECK(train.size() == 80);
  auto [train2, val2] = stratified_split(d, 0.2, 5);
  CHECK(val2.ids == val.ids);
  auto [train3, val3] = stratified_split(d, 0.2, 6);
  CHECK(val3.ids != val.ids);
  std::set<std::int64_t> all(train.ids.begin(), train.ids.end());
  all.insert(val.ids.begin(), val.ids.end());
  CHECK(all.size() == 100);
  CHECK_THROWS_AS(stratified_split(d, 0.0, 1), SplitError);
  CHECK_THROWS_AS(stratified_split(labelled(10, 1), 0.2, 1), SplitError);
}

TEST_CASE("batch ratio arithmetic") {
  CHECK(positives_per_batch(10, 30, 100) == 3);
  CHECK(positives_per_batch(2, 5, 10) == 1);
  CHECK(positives_per_batch(32, 285, 415) == 22);
  CHECK(positives_per_batch(32, 1, 1000) == 1);
  CHECK(positives_per_batch(4, 999, 1000) == 3);
}

TEST_CASE("stratified batches keep the ratio and cover every sample once") {
  Rng rng = make_stream(3, "batches");
  for (auto [n, pos, bs, want] : std::vector<std::array<Index, 4>>{{100, 30, 10, 3}, {10, 5, 2, 1}}) {
    const auto d = labelled(n, pos);
    for (int epoch = 0; epoch < 5; ++epoch) {
      auto batches = stratified_batches(d, bs, rng);
      std::vector<Index> seen;
      for (const auto& b : batches) {
        CHECK(static_cast<Index>(b.size()) == bs);
        Index p = 0;
        for (Index i : b) p += d.labels(i);
        CHECK(p == want);
        seen.insert(seen.end(), b.begin(), b.end());
      }
      std::sort(seen.begin(), seen.end());
      CHECK(seen.size() == static_cast<std::size_t>(n));
      CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
    }
  }
}

TEST_CASE("partial batches and oversized batch size") {
  Rng rng = make_stream(4, "batches");
  const auto d = labelled(23, 7);
  auto batches = stratified_batches(d, 5, rng);
  Index total = 0;
  for (const auto& b : batches) total += static_cast<Index>(b.size());
  CHECK(total == 23);
  auto one = stratified_batches(d, 100, rng);
  CHECK(one.size() == 1);
  CHECK(one.front().size() == 23);
  CHECK_THROWS_AS(stratified_batches(d, 1, rng), ParameterError);
}

TEST_CASE("one-hot design matrix") {
  auto schema = parse_schema(R"(
label: y
features:
  - {name: x, kind: continuous}
  - {name: c, kind: categorical, cardinality: 3}
  - {name: b, kind: checkbox, cardinality: 4}
)");
  CHECK(one_hot_width(schema) == 8);
  auto d = TabularDataset::allocate(schema, 2);
  d.continuous << 0.5, 9.0;
  d.continuous_missing(1, 0) = true;
  d.categorical << 2, 0;
  d.checkbox[0].row(0) << 1, 0, 0, 1;
  d.checkbox_missing(1, 0) = true;
  auto m = one_hot_encode(d, schema);
  RowMatrixd expected(2, 8);
  expected << 0.5, 0, 1, 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0;
  CHECK(m == expected);
}

TEST_CASE("simulate_missing") {
  std::mt19937_64 rng(12);
  const auto schema = testing::toy_schema();
  const auto d = testing::random_dataset(schema, 415, rng);
  CHECK(simulate_missing(d, schema, 0.0, 1) == d);
  auto masked = simulate_missing(d, schema, 0.5, 1);
  CHECK(masked.missing_cells() == 623);  // round(0.5 * 415 * 3)
  CHECK(masked.labels == d.labels);
  CHECK(simulate_missing(d, schema, 0.5, 1) == masked);
  CHECK_FALSE(simulate_missing(d, schema, 0.5, 2) == masked);
  masked.validate(schema);
  CHECK_THROWS_AS(simulate_missing(d, schema, 1.5, 1), ParameterError);
}

TEST_CASE("simulate_missing cell count on 415 x 29") {
  std::string text = "label: y\nfeatures:\n";
  for (int i = 0; i < 29; ++i) text += "  - {name: f" + std::to_string(i) + ", kind: continuous}\n";
  const auto schema = parse_schema(text);
  auto d = TabularDataset::allocate(schema, 415);
  d.labels.head(100).setOnes();
  CHECK(simulate_missing(d, schema, 0.5, 3).missing_cells() == 6018);
}

TEST_CASE("drop_incomplete against a brute-force scan") {
  std::mt19937_64 rng(13);
  const auto schema = synthetic_schema();
  const auto full = generate_synthetic({schema, 1000, 0.1, 3, 0.25}).data;
  CHECK(drop_incomplete(full) == full);
  const auto d = simulate_missing(full, schema, 0.3, 9);
  Index expected = 0;
  for (Index i = 0; i < d.size(); ++i) {
    bool any = false;
    for (Index c = 0; c < d.continuous.cols(); ++c) any = any || d.continuous_missing(i, c);
    for (Index c = 0; c < d.categorical.cols(); ++c) any = any || d.categorical(i, c) == 0;
    for (Index c = 0; c < d.checkbox_missing.cols(); ++c) any = any || d.checkbox_missing(i, c);
    expected += any ? 0 : 1;
  }
  CHECK(drop_incomplete(d).size() == expected);
  auto one = TabularDataset::allocate(schema, 1);
  one.categorical(0, 0) = 0;
  CHECK_THROWS_AS(drop_incomplete(one), DatasetError);
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  auto a = generate_synthetic(spec);
  CHECK(a.data.size() == 2000);
  CHECK(a.data.positives() == 200);
  CHECK(generate_synthetic(spec).data == a.data);
  CHECK((a.truth.continuous_weight.array() >= 0.0).all());
  for (const auto& v : a.truth.category_value) {
    for (Index k = 2; k < v.size(); ++k) CHECK(v(k) >= v(k - 1));
  }
  for (const auto& w : a.truth.member_weight) CHECK((w.array() >= 0.0).all());
  a.data.validate(spec.schema);
  CHECK_THROWS_AS(generate_synthetic({spec.schema, 100, 1.0, 1, 0.1}), ParameterError);
}

TEST_CASE("named streams are independent of each other") {
  Rng a = make_stream(1, "split"), b = make_stream(1, "batches"), c = make_stream(1, "split");
  const auto x = a();
  CHECK(x != b());
  CHECK(x == c());
}
