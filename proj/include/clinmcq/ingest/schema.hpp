#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "clinmcq/core/error.hpp"
#include "clinmcq/core/text.hpp"

namespace clinmcq {

using json = nlohmann::json;

enum class FeatureKind { Continuous, Categorical };

inline const char* to_string(FeatureKind k) {
  return k == FeatureKind::Continuous ? "continuous" : "categorical";
}

inline FeatureKind parse_feature_kind(const std::string& s) {
  if (s == "continuous" || s == "Continuous") return FeatureKind::Continuous;
  if (s == "categorical" || s == "Categorical") return FeatureKind::Categorical;
  throw SchemaError("unknown feature kind '" + s + "'");
}

/// Closed interval; either side may be infinite.
struct Bounds {
  double low = -std::numeric_limits<double>::infinity();
  double high = std::numeric_limits<double>::infinity();

  bool contains(double v) const { return v >= low && v <= high; }
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

using FeatureId = std::size_t;

struct FeatureSpec {
  std::string name;
  std::optional<std::string> unit;
  std::vector<std::string> section;
  FeatureKind kind = FeatureKind::Categorical;
  std::optional<Bounds> bounds;
  int precision = 0;
  FeatureId id = 0;
  std::vector<std::string> missing_tokens;

  std::string section_path() const { return join(section, "/"); }

  /// "Name (unit)" or "Name".
  std::string label() const { return unit ? name + " (" + *unit + ")" : name; }

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

inline void validate(const FeatureSpec& f) {
  if (f.name.empty()) throw SchemaError("feature " + std::to_string(f.id) + ": empty name");
  if (f.section.empty()) throw SchemaError("feature '" + f.name + "': empty section path");
  if (f.bounds && !(f.bounds->low <= f.bounds->high)) {
    throw SchemaError("feature '" + f.name + "': bounds low > high");
  }
  if (f.precision < 0 || f.precision > 10) {
    throw SchemaError("feature '" + f.name + "': precision must be in [0, 10]");
  }
}

/// The table's column metadata. `id_column`, when set, names the header column
/// carrying patient ids; it is not a feature.
struct Schema {
  std::optional<std::string> id_column;
  std::vector<std::string> missing_tokens;
  std::vector<FeatureSpec> features;

  std::size_t size() const { return features.size(); }
  const FeatureSpec& operator[](FeatureId id) const { return features.at(id); }

  FeatureId find(const std::string& name) const {
    for (const auto& f : features) {
      if (f.name == name) return f.id;
    }
    throw InvalidArgument("unknown feature '" + name + "'");
  }

  void validate() const {
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < features.size(); ++i) {
      if (features[i].id != i) throw SchemaError("feature ids must follow column order");
      clinmcq::validate(features[i]);
      if (!seen.emplace(features[i].name, i).second) {
        throw SchemaError("duplicate feature '" + features[i].name + "'");
      }
    }
  }
};

struct Missing {
  friend bool operator==(Missing, Missing) { return true; }
};

/// One cell: Number for continuous features, Text for categorical, or Missing.
using Value = std::variant<Missing, double, std::string>;

inline bool is_missing(const Value& v) { return std::holds_alternative<Missing>(v); }

struct PatientRecord {
  std::string patient_id;
  std::vector<Value> values;

  const Value& at(FeatureId id) const { return values.at(id); }
  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

inline void validate(const PatientRecord& r, const Schema& schema) {
  if (r.values.size() != schema.size()) {
    throw DataError("record '" + r.patient_id + "': " + std::to_string(r.values.size()) +
                    " values for " + std::to_string(schema.size()) + " features");
  }
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    const auto& v = r.values[i];
    const auto kind = schema.features[i].kind;
    if (std::holds_alternative<double>(v) && kind != FeatureKind::Continuous) {
      throw DataError("record '" + r.patient_id + "': number in categorical '" +
                      schema.features[i].name + "'");
    }
    if (std::holds_alternative<std::string>(v) && kind != FeatureKind::Categorical) {
      throw DataError("record '" + r.patient_id + "': text in continuous '" +
                      schema.features[i].name + "'");
    }
  }
}

/// Display text of a non-missing value at the feature's precision.
inline std::string render_value(const Value& v, const FeatureSpec& f) {
  if (const auto* d = std::get_if<double>(&v)) return format_fixed(*d, f.precision);
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  return {};
}

struct Table {
  Schema schema;
  std::vector<PatientRecord> records;
};

// JSON sidecar --------------------------------------------------------------

inline json bound_to_json(double v) {
  if (std::isinf(v)) return nullptr;
  return v;
}

inline double bound_from_json(const json& j, double if_null) {
  return j.is_null() ? if_null : j.get<double>();
}

inline json to_json(const FeatureSpec& f) {
  json j;
  j["name"] = f.name;
  j["unit"] = f.unit ? json(*f.unit) : json(nullptr);
  j["section"] = f.section;
  j["kind"] = to_string(f.kind);
  if (f.bounds) {
    j["bounds"] = json::array({bound_to_json(f.bounds->low), bound_to_json(f.bounds->high)});
  } else {
    j["bounds"] = nullptr;
  }
  j["precision"] = f.precision;
  j["missing_tokens"] = f.missing_tokens;
  return j;
}

inline FeatureSpec feature_from_json(const json& j, FeatureId id) {
  FeatureSpec f;
  f.id = id;
  try {
    f.name = j.at("name").get<std::string>();
    if (j.contains("unit") && !j["unit"].is_null()) f.unit = j["unit"].get<std::string>();
    if (j.contains("section")) {
      if (j["section"].is_string()) {
        f.section = split(j["section"].get<std::string>(), '/');
      } else {
        f.section = j["section"].get<std::vector<std::string>>();
      }
    }
    f.kind = parse_feature_kind(j.at("kind").get<std::string>());
    if (j.contains("bounds") && !j["bounds"].is_null()) {
      const auto& b = j["bounds"];
      if (!b.is_array() || b.size() != 2) throw SchemaError("bounds must be [low, high]");
      constexpr double inf = std::numeric_limits<double>::infinity();
      f.bounds = Bounds{bound_from_json(b[0], -inf), bound_from_json(b[1], inf)};
    }
    f.precision = j.value("precision", 0);
    f.missing_tokens = j.value("missing_tokens", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw SchemaError("feature entry " + std::to_string(id) + ": " + e.what());
  }
  validate(f);
  return f;
}

inline json to_json(const Schema& s) {
  json j;
  j["id_column"] = s.id_column ? json(*s.id_column) : json(nullptr);
  j["missing_tokens"] = s.missing_tokens;
  j["features"] = json::array();
  for (const auto& f : s.features) j["features"].push_back(to_json(f));
  return j;
}

inline Schema schema_from_json(const json& j) {
  Schema s;
  if (!j.is_object() || !j.contains("features")) throw SchemaError("schema lacks 'features'");
  if (j.contains("id_column") && !j["id_column"].is_null()) {
    s.id_column = j["id_column"].get<std::string>();
  }
  s.missing_tokens = j.value("missing_tokens", std::vector<std::string>{});
  FeatureId id = 0;
  for (const auto& fj : j["features"]) s.features.push_back(feature_from_json(fj, id++));
  s.validate();
  return s;
}

}  // namespace clinmcq
