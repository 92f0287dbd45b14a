#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "clinmcq/ingest/csv.hpp"
#include "clinmcq/ingest/schema.hpp"

namespace clinmcq {

enum class BadCellPolicy { Reject, CoerceToMissing };

struct LoadOptions {
  char delimiter = ',';
  BadCellPolicy bad_cells = BadCellPolicy::Reject;
};

struct LoadResult {
  Table table;
  std::vector<std::string> warnings;
};

inline Schema load_schema(const std::string& schema_path) {
  json j;
  try {
    j = json::parse(csv::read_file(schema_path));
  } catch (const json::parse_error& e) {
    throw SchemaError(schema_path + ": " + e.what());
  }
  return schema_from_json(j);
}

inline void save_schema(const Schema& schema, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << to_json(schema).dump(2) << '\n';
}

namespace detail {

inline bool is_blank_row(const csv::Row& row) {
  return row.size() == 1 && trim(row[0]).empty();
}

inline bool is_missing_token(std::string_view cell, const Schema& schema, const FeatureSpec& f) {
  const auto t = trim(cell);
  if (t.empty()) return true;
  for (const auto& tok : schema.missing_tokens) {
    if (t == tok) return true;
  }
  for (const auto& tok : f.missing_tokens) {
    if (t == tok) return true;
  }
  return false;
}

inline std::string shortest_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Parses delimited text against an already-loaded schema.
inline LoadResult parse_table(std::string_view text, Schema schema, const LoadOptions& opts = {}) {
  LoadResult result;
  csv::Reader reader(text, opts.delimiter);
  csv::Row row;
  if (!reader.next(row)) throw DataError("data file is empty");

  const std::size_t n_features = schema.size();
  const std::size_t expected_cols = n_features + (schema.id_column ? 1 : 0);
  std::size_t id_col = expected_cols;
  std::vector<std::size_t> col_of_feature;
  {
    std::size_t f = 0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string name(trim(row[c]));
      if (schema.id_column && name == *schema.id_column && id_col == expected_cols) {
        id_col = c;
        continue;
      }
      if (f >= n_features) throw SchemaError("column '" + name + "' is not described by the schema");
      if (name != schema.features[f].name) {
        throw SchemaError("column '" + name + "' does not match schema feature '" +
                          schema.features[f].name + "' at position " + std::to_string(f));
      }
      col_of_feature.push_back(c);
      ++f;
    }
    if (f < n_features) {
      throw SchemaError("schema feature '" + schema.features[f].name + "' missing from header");
    }
    if (schema.id_column && id_col == expected_cols) {
      throw SchemaError("id column '" + *schema.id_column + "' missing from header");
    }
  }

  std::size_t data_row = 0;
  std::unordered_set<std::string> ids;
  while (reader.next(row)) {
    if (detail::is_blank_row(row)) continue;
    if (row.size() != expected_cols) {
      throw RowError(data_row, "expected " + std::to_string(expected_cols) + " cells, found " +
                                   std::to_string(row.size()));
    }
    PatientRecord rec;
    rec.patient_id = id_col < expected_cols ? std::string(trim(row[id_col]))
                                            : "r" + std::to_string(data_row + 1);
    if (!ids.insert(rec.patient_id).second) {
      throw RowError(data_row, "duplicate patient id '" + rec.patient_id + "'");
    }
    rec.values.reserve(n_features);
    for (std::size_t f = 0; f < n_features; ++f) {
      const auto& spec = schema.features[f];
      const std::string& cell = row[col_of_feature[f]];
      if (detail::is_missing_token(cell, schema, spec)) {
        rec.values.emplace_back(Missing{});
      } else if (spec.kind == FeatureKind::Continuous) {
        if (auto v = parse_number(cell)) {
          rec.values.emplace_back(*v);
        } else if (opts.bad_cells == BadCellPolicy::Reject) {
          throw RowError(data_row, "unparseable number '" + cell + "' in '" + spec.name + "'");
        } else {
          result.warnings.push_back("row " + std::to_string(data_row) + ": '" + cell + "' in '" +
                                    spec.name + "' coerced to missing");
          rec.values.emplace_back(Missing{});
        }
      } else {
        rec.values.emplace_back(std::string(trim(cell)));
      }
    }
    result.table.records.push_back(std::move(rec));
    ++data_row;
  }
  result.table.schema = std::move(schema);
  return result;
}

inline LoadResult load_table(const std::string& data_path, const std::string& schema_path,
                             const LoadOptions& opts = {}) {
  auto schema = load_schema(schema_path);
  const auto text = csv::read_file(data_path);
  return parse_table(text, std::move(schema), opts);
}

inline std::string serialize_table(const Table& table, char delimiter = ',') {
  std::string out;
  csv::Row header;
  if (table.schema.id_column) header.push_back(*table.schema.id_column);
  for (const auto& f : table.schema.features) header.push_back(f.name);
  csv::append_row(out, header, delimiter);
  csv::Row row;
  for (const auto& rec : table.records) {
    row.clear();
    if (table.schema.id_column) row.push_back(rec.patient_id);
    for (const auto& v : rec.values) {
      if (const auto* d = std::get_if<double>(&v)) {
        row.push_back(detail::shortest_number(*d));
      } else if (const auto* s = std::get_if<std::string>(&v)) {
        row.push_back(*s);
      } else {
        row.emplace_back();
      }
    }
    csv::append_row(out, row, delimiter);
  }
  return out;
}

inline void write_table(const Table& table, const std::string& data_path, char delimiter = ',') {
  std::ofstream out(data_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + data_path);
  out << serialize_table(table, delimiter);
}

struct InferredSchema {
  Schema schema;
  std::vector<std::string> warnings;
};

/// Draft schema for human editing: all-numeric columns become continuous with
/// precision = max observed decimals; a column named `id_column_hint` becomes
/// the id column.
inline InferredSchema infer_schema_text(std::string_view text, char delimiter = ',',
                                        const std::string& id_column_hint = "patient_id") {
  InferredSchema out;
  csv::Reader reader(text, delimiter);
  csv::Row header;
  if (!reader.next(header) || detail::is_blank_row(header)) throw DataError("data file is empty");

  const std::size_t n = header.size();
  std::vector<bool> all_numeric(n, true);
  std::vector<bool> any_value(n, false);
  std::vector<int> max_decimals(n, 0);
  csv::Row row;
  std::size_t data_row = 0;
  while (reader.next(row)) {
    if (detail::is_blank_row(row)) continue;
    if (row.size() != n) {
      throw RowError(data_row, "expected " + std::to_string(n) + " cells, found " +
                                   std::to_string(row.size()));
    }
    for (std::size_t c = 0; c < n; ++c) {
      const auto cell = trim(row[c]);
      if (cell.empty()) continue;
      any_value[c] = true;
      if (all_numeric[c]) {
        if (parse_number(cell)) {
          max_decimals[c] = std::max(max_decimals[c], decimal_places(cell));
        } else {
          all_numeric[c] = false;
        }
      }
    }
    ++data_row;
  }

  FeatureId id = 0;
  for (std::size_t c = 0; c < n; ++c) {
    std::string name(trim(header[c]));
    if (name == id_column_hint && !out.schema.id_column) {
      out.schema.id_column = name;
      continue;
    }
    FeatureSpec f;
    f.name = name.empty() ? "column_" + std::to_string(c) : name;
    f.section = {"Features"};
    f.id = id++;
    if (!any_value[c]) {
      f.kind = FeatureKind::Categorical;
      out.warnings.push_back("column '" + f.name + "' is entirely empty; typed categorical");
    } else if (all_numeric[c]) {
      f.kind = FeatureKind::Continuous;
      f.precision = std::min(max_decimals[c], 10);
    } else {
      f.kind = FeatureKind::Categorical;
    }
    out.schema.features.push_back(std::move(f));
  }
  return out;
}

inline InferredSchema infer_schema(const std::string& data_path, char delimiter = ',') {
  return infer_schema_text(csv::read_file(data_path), delimiter);
}

}  // namespace clinmcq
