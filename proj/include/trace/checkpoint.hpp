#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>

#include "trace/dataset.hpp"
#include "trace/model.hpp"
#include "trace/schema.hpp"

namespace trace {

/// Data-dependent state a model needs to score raw CSV rows.
struct Preprocessing {
  Standardization standardization;
  /// nnMLP only: standardized training minimum per continuous column.
  Eigen::VectorXd column_floor;
};

struct ModelBundle {
  FeatureSchema schema;
  Preprocessing preprocessing;
  std::unique_ptr<RiskModel> model;
  /// Free-form run information (training config, seed, ...).
  nlohmann::json metadata = nlohmann::json::object();

  /// Standardizes raw data with the stored statistics.
  TabularDataset prepare(const TabularDataset& raw) const;
};

/// Builds a freshly initialized model from its serialized configuration.
std::unique_ptr<RiskModel> make_model(ModelKind kind, const FeatureSchema& schema, const nlohmann::json& config,
                                      const Eigen::VectorXd& column_floor, double base_rate, std::uint64_t seed);

/// Binary container: magic "TRACECKP", u32 version, u64 header length,
/// JSON header (kind, config, schema, fingerprint, array directory,
/// metadata), then every array as little-endian float64 in directory order.
/// Values round-trip bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace trace
