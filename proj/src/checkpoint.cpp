#include "trace/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "trace/nnmlp.hpp"
#include "trace/trace_model.hpp"

namespace trace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'T', 'R', 'A', 'C', 'E', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

struct Array {
  std::string name;
  const double* data;
  Index length;
};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IoError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace

TabularDataset ModelBundle::prepare(const TabularDataset& raw) const {
  return apply_standardization(raw, preprocessing.standardization);
}

std::unique_ptr<RiskModel> make_model(ModelKind kind, const FeatureSchema& schema, const nlohmann::json& config,
                                      const Eigen::VectorXd& column_floor, double base_rate, std::uint64_t seed) {
  if (kind == ModelKind::trace) return std::make_unique<TraceModel>(schema, TraceConfig::from_json(config), seed);
  return std::make_unique<NnMlpModel>(schema, NnMlpConfig::from_json(config), column_floor, base_rate, seed);
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle) {
  if (!bundle.model) throw ContractError("save_checkpoint: bundle has no model");
  const auto& prep = bundle.preprocessing;
  std::vector<Array> arrays;
  for (const auto& e : bundle.model->parameters().entries()) {
    arrays.push_back({e.name, e.tensor.value().data(), e.tensor.size()});
  }
  arrays.push_back({"prep.mean", prep.standardization.mean.data(), prep.standardization.mean.size()});
  arrays.push_back({"prep.stddev", prep.standardization.stddev.data(), prep.standardization.stddev.size()});
  arrays.push_back({"prep.floor", prep.column_floor.data(), prep.column_floor.size()});

  nlohmann::ordered_json header;
  header["kind"] = to_string(bundle.model->kind());
  header["config"] = bundle.model->config_json();
  header["schema"] = bundle.schema.to_json();
  header["schema_fingerprint"] = bundle.schema.fingerprint();
  header["metadata"] = bundle.metadata;
  auto dir = nlohmann::ordered_json::array();
  for (const auto& a : arrays) {
    nlohmann::ordered_json entry{{"name", a.name}, {"length", a.length}};
    for (const auto& e : bundle.model->parameters().entries()) {
      if (e.name == a.name) entry["shape"] = e.tensor.shape();
    }
    dir.push_back(std::move(entry));
  }
  header["arrays"] = std::move(dir);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& a : arrays) {
    out.write(reinterpret_cast<const char*>(a.data), static_cast<std::streamsize>(a.length * sizeof(double)));
  }
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError(path.string() + " is not a checkpoint file");
  if (read_pod<std::uint32_t>(in, path) != kVersion) throw IoError("unsupported checkpoint version in " + path.string());
  const auto header_len = read_pod<std::uint64_t>(in, path);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw IoError("truncated checkpoint " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }

  ModelBundle bundle;
  bundle.schema = parse_schema(header.at("schema").get<std::string>());
  if (bundle.schema.fingerprint() != header.at("schema_fingerprint").get<std::string>())
    throw IoError("checkpoint schema fingerprint mismatch in " + path.string());
  bundle.metadata = header.value("metadata", nlohmann::json::object());
  const auto kind = parse_model_kind(header.at("kind").get<std::string>());
  const auto nn = static_cast<Index>(bundle.schema.n_continuous());
  bundle.model = make_model(kind, bundle.schema, header.at("config"), Eigen::VectorXd::Zero(nn), 0.5, 0);

  std::vector<RowMatrixd> values;
  auto& entries = bundle.model->parameters().entries();
  std::size_t next_param = 0;
  for (const auto& a : header.at("arrays")) {
    const auto name = a.at("name").get<std::string>();
    const auto length = a.at("length").get<Index>();
    Eigen::VectorXd buf(length);
    if (length > 0 && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(length * sizeof(double))))
      throw IoError("truncated checkpoint " + path.string());
    if (name == "prep.mean") {
      bundle.preprocessing.standardization.mean = buf;
    } else if (name == "prep.stddev") {
      bundle.preprocessing.standardization.stddev = buf;
    } else if (name == "prep.floor") {
      bundle.preprocessing.column_floor = buf;
    } else {
      if (next_param >= entries.size() || entries[next_param].name != name)
        throw IoError("checkpoint parameter '" + name + "' does not match the model layout");
      auto& t = entries[next_param++].tensor;
      if (t.size() != length) throw IoError("checkpoint parameter '" + name + "' has the wrong size");
      values.push_back(Eigen::Map<const RowMatrixd>(buf.data(), t.rows(), t.cols()));
    }
  }
  if (next_param != entries.size()) throw IoError("checkpoint " + path.string() + " lacks parameters");
  bundle.model->parameters().restore(values);

  if (bundle.preprocessing.standardization.mean.size() != nn || bundle.preprocessing.standardization.stddev.size() != nn)
    throw IoError("checkpoint standardization does not match the schema");
  if (kind == ModelKind::nnmlp) {
    // Rebuild with the stored floor so design() shifts correctly.
    auto fresh = make_model(kind, bundle.schema, header.at("config"), bundle.preprocessing.column_floor, 0.5, 0);
    fresh->parameters().restore(values);
    bundle.model = std::move(fresh);
    if (!satisfies_constraints(static_cast<const NnMlpModel&>(*bundle.model).layers()))
      throw ContractError("checkpoint " + path.string() + " violates the nnMLP sign constraints");
  }
  return bundle;
}

}  // namespace trace
