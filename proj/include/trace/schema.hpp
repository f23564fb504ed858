#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace trace {

enum class FeatureKind { continuous, categorical, checkbox };

std::string to_string(FeatureKind kind);

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  /// 1 for continuous; number of categories or checkbox members otherwise.
  int cardinality = 1;
  /// Category labels; position k maps to index k+1 (0 is missing).
  std::vector<std::string> categories;
  /// CSV column names of checkbox members.
  std::vector<std::string> members;
  /// Source line in the schema document, 0 when built in code.
  int line = 0;
};

/// Validated, ordered feature declaration plus the label column.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  FeatureSchema(std::string label, std::vector<FeatureSpec> features);

  const std::string& label() const { return label_; }
  const std::vector<FeatureSpec>& features() const { return features_; }
  const FeatureSpec& feature(std::size_t i) const { return features_.at(i); }

  /// Positions (into features()) of each kind, in schema order.
  const std::vector<std::size_t>& continuous() const { return continuous_; }
  const std::vector<std::size_t>& categorical() const { return categorical_; }
  const std::vector<std::size_t>& checkbox() const { return checkbox_; }

  std::size_t n_continuous() const { return continuous_.size(); }
  std::size_t n_categorical() const { return categorical_.size(); }
  std::size_t n_checkbox() const { return checkbox_.size(); }
  std::size_t n_features() const { return features_.size(); }

  /// Index in [1, cardinality] for a categorical cell, or -1 if unknown.
  int category_index(std::size_t feature, std::string_view text) const;
  std::string category_label(std::size_t feature, int index) const;

  /// CSV header the schema expects: features in order (checkbox members
  /// expanded), then the label column.
  std::vector<std::string> csv_columns() const;

  /// Canonical JSON rendering; parse_schema() accepts it back.
  std::string to_json() const;
  /// SHA-256 over to_json().
  std::string fingerprint() const;

  friend bool operator==(const FeatureSchema& a, const FeatureSchema& b) { return a.to_json() == b.to_json(); }

 private:
  std::string label_;
  std::vector<FeatureSpec> features_;
  std::vector<std::size_t> continuous_, categorical_, checkbox_;
  std::vector<std::unordered_map<std::string, int>> lookup_;
};

/// Parses a YAML (or JSON) schema document:
///
///   label: <column>
///   features:
///     - {name: age, kind: continuous}
///     - {name: sex, kind: categorical, categories: [female, male]}
///     - {name: ancestry, kind: checkbox, cardinality: 22}
///
/// Throws SchemaError carrying the offending line.
FeatureSchema parse_schema(std::string_view text);
FeatureSchema load_schema(const std::filesystem::path& path);

}  // namespace trace
