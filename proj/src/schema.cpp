#include "trace/schema.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "trace/errors.hpp"
#include "trace/hashing.hpp"

namespace trace {

std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::continuous:
      return "continuous";
    case FeatureKind::categorical:
      return "categorical";
    case FeatureKind::checkbox:
      return "checkbox";
  }
  return "?";
}

FeatureSchema::FeatureSchema(std::string label, std::vector<FeatureSpec> features)
    : label_(std::move(label)), features_(std::move(features)) {
  if (label_.empty()) throw SchemaError("missing label column", 0);
  if (features_.empty()) throw SchemaError("feature list is empty", 0);

  std::set<std::string> names;
  std::set<std::string> columns{label_};
  for (std::size_t i = 0; i < features_.size(); ++i) {
    auto& f = features_[i];
    if (f.name.empty()) throw SchemaError("feature without a name", f.line);
    if (!names.insert(f.name).second) throw SchemaError("duplicate feature name '" + f.name + "'", f.line);
    if (f.name == label_) throw SchemaError("label column '" + label_ + "' listed as a feature", f.line);

    switch (f.kind) {
      case FeatureKind::continuous:
        if (f.cardinality != 1) throw SchemaError("continuous feature '" + f.name + "' must have cardinality 1", f.line);
        if (!f.categories.empty() || !f.members.empty())
          throw SchemaError("continuous feature '" + f.name + "' cannot list categories or members", f.line);
        continuous_.push_back(i);
        break;
      case FeatureKind::categorical:
        if (!f.categories.empty()) {
          if (f.cardinality == 0) f.cardinality = static_cast<int>(f.categories.size());
          if (static_cast<int>(f.categories.size()) != f.cardinality)
            throw SchemaError("feature '" + f.name + "': cardinality disagrees with category list", f.line);
        }
        if (!f.members.empty()) throw SchemaError("categorical feature '" + f.name + "' cannot list members", f.line);
        if (f.cardinality < 2) throw SchemaError("feature '" + f.name + "' needs cardinality >= 2", f.line);
        categorical_.push_back(i);
        break;
      case FeatureKind::checkbox:
        if (!f.members.empty()) {
          if (f.cardinality == 0) f.cardinality = static_cast<int>(f.members.size());
          if (static_cast<int>(f.members.size()) != f.cardinality)
            throw SchemaError("feature '" + f.name + "': cardinality disagrees with member list", f.line);
        }
        if (!f.categories.empty()) throw SchemaError("checkbox feature '" + f.name + "' cannot list categories", f.line);
        if (f.cardinality < 2) throw SchemaError("feature '" + f.name + "' needs cardinality >= 2", f.line);
        if (f.members.empty()) {
          for (int k = 1; k <= f.cardinality; ++k) f.members.push_back(f.name + "." + std::to_string(k));
        }
        checkbox_.push_back(i);
        break;
    }

    if (f.kind == FeatureKind::checkbox) {
      for (const auto& m : f.members) {
        if (!columns.insert(m).second) throw SchemaError("duplicate CSV column '" + m + "'", f.line);
      }
    } else if (!columns.insert(f.name).second) {
      throw SchemaError("duplicate CSV column '" + f.name + "'", f.line);
    }

    std::unordered_map<std::string, int> lookup;
    for (std::size_t k = 0; k < f.categories.size(); ++k) {
      if (!lookup.emplace(f.categories[k], static_cast<int>(k) + 1).second)
        throw SchemaError("feature '" + f.name + "': duplicate category '" + f.categories[k] + "'", f.line);
    }
    lookup_.push_back(std::move(lookup));
  }
}

int FeatureSchema::category_index(std::size_t feature, std::string_view text) const {
  const auto& f = features_.at(feature);
  if (f.kind != FeatureKind::categorical) return -1;
  if (!f.categories.empty()) {
    auto it = lookup_[feature].find(std::string(text));
    return it == lookup_[feature].end() ? -1 : it->second;
  }
  int value = 0;
  std::istringstream is{std::string(text)};
  if (!(is >> value) || !is.eof() || value < 1 || value > f.cardinality) return -1;
  return value;
}

std::string FeatureSchema::category_label(std::size_t feature, int index) const {
  const auto& f = features_.at(feature);
  if (index <= 0) return {};
  if (!f.categories.empty()) return f.categories.at(static_cast<std::size_t>(index) - 1);
  return std::to_string(index);
}

std::vector<std::string> FeatureSchema::csv_columns() const {
  std::vector<std::string> cols;
  for (const auto& f : features_) {
    if (f.kind == FeatureKind::checkbox) {
      cols.insert(cols.end(), f.members.begin(), f.members.end());
    } else {
      cols.push_back(f.name);
    }
  }
  cols.push_back(label_);
  return cols;
}

std::string FeatureSchema::to_json() const {
  nlohmann::ordered_json doc;
  doc["label"] = label_;
  doc["features"] = nlohmann::ordered_json::array();
  for (const auto& f : features_) {
    nlohmann::ordered_json j;
    j["name"] = f.name;
    j["kind"] = to_string(f.kind);
    j["cardinality"] = f.cardinality;
    if (!f.categories.empty()) j["categories"] = f.categories;
    if (f.kind == FeatureKind::checkbox) j["members"] = f.members;
    doc["features"].push_back(std::move(j));
  }
  return doc.dump();
}

std::string FeatureSchema::fingerprint() const { return sha256_hex(to_json()); }

namespace {

int line_of(const YAML::Node& node) { return node.Mark().line >= 0 ? node.Mark().line + 1 : 0; }

std::vector<std::string> string_list(const YAML::Node& node, const std::string& what) {
  if (!node.IsSequence()) throw SchemaError(what + " must be a list", line_of(node));
  std::vector<std::string> out;
  for (const auto& item : node) {
    if (!item.IsScalar()) throw SchemaError(what + " entries must be scalars", line_of(item));
    out.push_back(item.as<std::string>());
  }
  return out;
}

}  // namespace

FeatureSchema parse_schema(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw SchemaError(e.msg, e.mark.line + 1);
  }
  if (!root.IsMap()) throw SchemaError("schema document must be a mapping", 1);

  const auto label = root["label"];
  if (!label || !label.IsScalar()) throw SchemaError("missing 'label' entry", 1);
  const auto list = root["features"];
  if (!list) throw SchemaError("missing 'features' entry", 1);
  if (!list.IsSequence()) throw SchemaError("'features' must be a list", line_of(list));

  std::vector<FeatureSpec> features;
  for (const auto& node : list) {
    const int line = line_of(node);
    if (!node.IsMap()) throw SchemaError("feature entry must be a mapping", line);
    FeatureSpec f;
    f.line = line;
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (key != "name" && key != "kind" && key != "cardinality" && key != "categories" && key != "members")
        throw SchemaError("unknown key '" + key + "'", line_of(kv.first));
    }
    if (!node["name"]) throw SchemaError("feature without a name", line);
    f.name = node["name"].as<std::string>();
    if (!node["kind"]) throw SchemaError("feature '" + f.name + "' has no kind", line);
    const auto kind = node["kind"].as<std::string>();
    if (kind == "continuous") {
      f.kind = FeatureKind::continuous;
    } else if (kind == "categorical") {
      f.kind = FeatureKind::categorical;
    } else if (kind == "checkbox") {
      f.kind = FeatureKind::checkbox;
    } else {
      throw SchemaError("unknown kind '" + kind + "' for feature '" + f.name + "'", line_of(node["kind"]));
    }
    if (node["categories"]) f.categories = string_list(node["categories"], "categories");
    if (node["members"]) f.members = string_list(node["members"], "members");
    if (node["cardinality"]) {
      try {
        f.cardinality = node["cardinality"].as<int>();
      } catch (const YAML::Exception&) {
        throw SchemaError("cardinality of '" + f.name + "' is not an integer", line_of(node["cardinality"]));
      }
    } else {
      f.cardinality = f.kind == FeatureKind::continuous ? 1 : 0;
    }
    features.push_back(std::move(f));
  }
  if (features.empty()) throw SchemaError("feature list is empty", line_of(list));
  return FeatureSchema(label.as<std::string>(), std::move(features));
}

FeatureSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read schema file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_schema(os.str());
}

}  // namespace trace
