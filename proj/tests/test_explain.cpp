#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"
#include "trace/explain.hpp"

using namespace trace;

namespace {

TraceModel small_model(const FeatureSchema& schema, int layers = 1) {
  TraceConfig c;
  c.model_size = 8;
  c.heads = 2;
  c.encoder_layers = layers;
  return TraceModel(schema, c, 3);
}

// Loop oracle: per sample forward, then heads, queries, samples in that order.
struct Oracle {
  std::vector<RowMatrixd> maps;  // per sample (N, N)
  RowMatrixd by_sample, by_feature;
};

Oracle loop_oracle(const TraceModel& model, const TabularDataset& data, int layer) {
  Oracle o;
  const Index n = model.token_count();
  for (Index s = 0; s < data.size(); ++s) {
    Tape tape(Tape::Mode::inference);
    AttentionCapture capture;
    ForwardOptions options;
    options.capture = &capture;
    model.forward(tape, data.subset(std::vector<Index>{s}), options);
    const auto& weights = capture.layers.at(static_cast<std::size_t>(layer));
    const auto heads = static_cast<double>(weights.heads.size());
    RowMatrixd avg(n, n);
    for (Index q = 0; q < n; ++q)
      for (Index k = 0; k < n; ++k) {
        double acc = 0.0;
        for (const auto& h : weights.heads) acc += h(q, k);
        avg(q, k) = acc * (1.0 / heads);
      }
    o.maps.push_back(avg);
  }
  const auto count = static_cast<Index>(o.maps.size());
  o.by_sample.resize(count, n);
  for (Index s = 0; s < count; ++s)
    for (Index k = 0; k < n; ++k) {
      double acc = 0.0;
      for (Index q = 0; q < n; ++q) acc += o.maps[s](q, k);
      o.by_sample(s, k) = acc / static_cast<double>(n);
    }
  o.by_feature = RowMatrixd::Zero(n, n);
  for (const auto& m : o.maps) o.by_feature += m;
  o.by_feature /= static_cast<double>(count);
  return o;
}

}  // namespace

TEST_CASE("by-sample example") {
  RowMatrixd a(2, 2);
  a << 0.9, 0.1, 0.5, 0.5;
  auto r = attention_by_sample(std::vector<RowMatrixd>{a});
  CHECK(r.rows() == 1);
  CHECK(r(0, 0) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(r(0, 1) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("by-feature of one and two samples") {
  RowMatrixd a(2, 2), b(2, 2);
  a << 0.9, 0.1, 0.5, 0.5;
  b << 0.1, 0.9, 0.5, 0.5;
  CHECK(attention_by_feature(std::vector<RowMatrixd>{a}) == a);
  RowMatrixd expected(2, 2);
  expected << 0.5, 0.5, 0.5, 0.5;
  CHECK(attention_by_feature(std::vector<RowMatrixd>{a, b}) == expected);
  CHECK_THROWS(attention_by_feature(std::vector<RowMatrixd>{}));
}

TEST_CASE("head averaging") {
  BasicAttentionWeights<double> w;
  w.batch = 2;
  w.tokens = 2;
  RowMatrixd h0(4, 2), h1(4, 2);
  h0 << 1, 0, 0, 1, 0.5, 0.5, 0.2, 0.8;
  h1 << 0, 1, 0, 1, 0.5, 0.5, 0.4, 0.6;
  w.heads = {h0, h1};
  auto maps = head_averaged(w);
  REQUIRE(maps.size() == 2);
  RowMatrixd first(2, 2);
  first << 0.5, 0.5, 0, 1;
  CHECK(maps[0] == first);
  CHECK(maps[1](1, 0) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("model exports match the per-sample loop") {
  std::mt19937_64 rng(1);
  const auto schema = testing::toy_schema();
  auto model = small_model(schema, 2);
  auto data = testing::random_dataset(schema, 9, rng, 0.2);
  for (int layer : {-1, 0}) {
    auto oracle = loop_oracle(model, data, layer < 0 ? 1 : layer);
    auto bs = attention_by_sample(model, data, layer);
    auto bf = attention_by_feature(model, data, layer);
    CHECK(bs.values == oracle.by_sample);
    CHECK(bf.values == oracle.by_feature);
    CHECK((bs.values.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
    CHECK((bf.values.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
    CHECK(bs.values.minCoeff() >= 0.0);
    CHECK(bf.values.maxCoeff() <= 1.0);
  }
  auto bs = attention_by_sample(model, data);
  CHECK(bs.view == AttentionView::by_sample);
  CHECK(bs.row_labels.front() == std::to_string(data.ids.front()));
  CHECK(bs.column_labels == model.token_names());
  auto bf = attention_by_feature(model, data);
  CHECK(bf.row_labels == model.token_names());
  CHECK(bf.values.rows() == model.token_count());

  auto chunked = collect_attention(model, data, -1, 4);
  auto whole = collect_attention(model, data, -1, 128);
  REQUIRE(chunked.size() == whole.size());
  for (std::size_t i = 0; i < whole.size(); ++i) CHECK((chunked[i] - whole[i]).cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(attention_by_sample(model, data, 2), ConfigError);
  CHECK_THROWS_AS(attention_by_sample(model, data, -3), ConfigError);
  CHECK_THROWS_AS(attention_by_sample(model, data.subset(std::vector<Index>{}), -1), EvaluationError);
}

TEST_CASE("csv layout") {
  FeatureAttentionMatrix m;
  m.view = AttentionView::by_feature;
  m.row_labels = {"a", "b"};
  m.column_labels = {"a", "b"};
  m.values.resize(2, 2);
  m.values << 0.25, 0.75, 1.0 / 3.0, 2.0 / 3.0;
  CHECK(matrix_csv(m) == "id,a,b\na,0.250000,0.750000\nb,0.333333,0.666667\n");

  const auto dir = std::filesystem::temp_directory_path() / "explain_csv_test";
  std::filesystem::create_directories(dir);
  export_matrix_csv(m, dir / "m.csv");
  std::ifstream in(dir / "m.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == matrix_csv(m));
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(export_matrix_csv(m, "/nonexistent-dir/x/m.csv"), IoError);
}

TEST_CASE("view names and sampling") {
  CHECK(to_string(AttentionView::by_sample) == "by-sample");
  CHECK(parse_attention_view("by-feature") == AttentionView::by_feature);
  CHECK_THROWS_AS(parse_attention_view("sideways"), ConfigError);

  auto rows = sample_rows(50, 10, 4);
  CHECK(rows.size() == 10);
  CHECK(rows == sample_rows(50, 10, 4));
  CHECK(rows != sample_rows(50, 10, 5));
  std::sort(rows.begin(), rows.end());
  CHECK(std::adjacent_find(rows.begin(), rows.end()) == rows.end());
  CHECK(rows.back() < 50);
  auto all = sample_rows(5, 10, 4);
  CHECK(all == std::vector<Index>{0, 1, 2, 3, 4});
}
