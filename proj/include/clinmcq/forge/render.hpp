#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "clinmcq/distractor/choices.hpp"
#include "clinmcq/ingest/schema.hpp"

namespace clinmcq {

inline constexpr const char* kMaskToken = "[MASK]";

/// Renders a record as sectioned "Name (unit): value" lines in schema order.
/// Missing and excluded features are omitted; the masked feature shows
/// [MASK]. A "[Level1/Level2]" header precedes each run of features sharing a
/// section path. `excluded` must be sorted.
inline std::string render_record(const PatientRecord& record, const Schema& schema,
                                 const std::vector<FeatureId>& excluded,
                                 std::optional<FeatureId> masked = std::nullopt) {
  if (masked && std::binary_search(excluded.begin(), excluded.end(), *masked)) {
    throw InvalidArgument("render_record: masked feature is also excluded");
  }
  std::string out;
  out.reserve(schema.size() * 32);
  const std::vector<std::string>* current_section = nullptr;
  for (const auto& f : schema.features) {
    if (std::binary_search(excluded.begin(), excluded.end(), f.id)) continue;
    const bool is_masked = masked && *masked == f.id;
    const auto& v = record.values[f.id];
    if (!is_masked && is_missing(v)) continue;
    if (!current_section || *current_section != f.section) {
      out += '[';
      out += f.section_path();
      out += "]\n";
      current_section = &f.section;
    }
    out += f.name;
    if (f.unit) {
      out += " (";
      out += *f.unit;
      out += ')';
    }
    out += ": ";
    out += is_masked ? std::string(kMaskToken) : render_value(v, f);
    out += '\n';
  }
  if (!out.empty()) out.pop_back();
  return out;
}

inline std::string render_options(const ChoiceSet& choices) {
  std::string out;
  for (std::size_t i = 0; i < choices.options.size(); ++i) {
    if (i) out += '\n';
    out += option_letter(i);
    out += ". ";
    out += choices.options[i];
  }
  return out;
}

}  // namespace clinmcq
