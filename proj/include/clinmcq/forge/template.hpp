#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "clinmcq/core/error.hpp"
#include "clinmcq/ingest/csv.hpp"

namespace clinmcq {

/// Prompt text with `{{name}}` placeholders.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  explicit PromptTemplate(std::string text) : text_(std::move(text)) {}

  const std::string& text() const { return text_; }

  /// Substitutes every placeholder. Unknown placeholder names are an error so
  /// that a typo in an edited template fails loudly.
  std::string render(const std::map<std::string, std::string>& values) const {
    std::string out;
    out.reserve(text_.size() + 256);
    std::size_t pos = 0;
    for (;;) {
      const auto open = text_.find("{{", pos);
      if (open == std::string::npos) {
        out.append(text_, pos, std::string::npos);
        return out;
      }
      const auto close = text_.find("}}", open + 2);
      if (close == std::string::npos) throw InvalidArgument("template: unterminated placeholder");
      out.append(text_, pos, open - pos);
      const std::string name = text_.substr(open + 2, close - open - 2);
      const auto it = values.find(name);
      if (it == values.end()) throw InvalidArgument("template: unknown placeholder '" + name + "'");
      out += it->second;
      pos = close + 2;
    }
  }

 private:
  std::string text_;
};

inline constexpr const char* kAnswerInstruction =
    "Answer with the letter of the correct option in the format \\boxed{X}.";

/// The prompt wordings used by the question builders. Each can be replaced by
/// a file of the same name (denoising.txt, timeseries_value.txt, mortality.txt,
/// aki_48h.txt, mrs_3month.txt, mace_1year.txt) in a template directory.
struct TemplateSet {
  PromptTemplate denoising{
      "{{context}}\n"
      "Q1. What would be the masked value of `{{feature}}' in section [{{section}}]?\n"
      "{{options}}\n"
      "{{instruction}}"};
  PromptTemplate timeseries_value{
      "{{context}}\n"
      "Q1. What would be the masked value of `{{feature}}' at [t = +{{hour}}h]?\n"
      "{{options}}\n"
      "{{instruction}}"};
  PromptTemplate mortality{
      "{{context}}\n"
      "Q1. Will this patient die during the hospital stay?\n"
      "{{options}}\n"
      "{{instruction}}"};
  PromptTemplate aki_48h{
      "{{context}}\n"
      "Q1. Will this patient develop acute kidney injury within the next 48 hours?\n"
      "{{options}}\n"
      "{{instruction}}"};
  PromptTemplate mrs_3month{
      "{{context}}\n"
      "Q1. What will this patient's modified Rankin Scale score be 3 months after the stroke?\n"
      "{{options}}\n"
      "{{instruction}}"};
  PromptTemplate mace_1year{
      "{{context}}\n"
      "Q1. Will this patient experience a major adverse cardiovascular event within 1 year?\n"
      "{{options}}\n"
      "{{instruction}}"};

  static TemplateSet from_directory(const std::string& dir) {
    TemplateSet t;
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("template directory not found: " + dir);
    auto load = [&](PromptTemplate& slot, const char* file) {
      const auto path = fs::path(dir) / file;
      if (!fs::exists(path)) return;
      auto text = csv::read_file(path.string());
      while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
      slot = PromptTemplate(std::move(text));
    };
    load(t.denoising, "denoising.txt");
    load(t.timeseries_value, "timeseries_value.txt");
    load(t.mortality, "mortality.txt");
    load(t.aki_48h, "aki_48h.txt");
    load(t.mrs_3month, "mrs_3month.txt");
    load(t.mace_1year, "mace_1year.txt");
    return t;
  }
};

}  // namespace clinmcq
