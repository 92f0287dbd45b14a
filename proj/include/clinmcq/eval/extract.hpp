#pragma once

#include <optional>
#include <regex>
#include <string>

namespace clinmcq {

/// Letter inside the last \boxed{X} (X in A..E, optional whitespace and a
/// trailing period). Without a boxed expression, the letter of the last
/// standalone "answer is X". Otherwise nullopt.
inline std::optional<char> extract_answer(const std::string& reasoning) {
  static const std::regex boxed(R"(\\boxed\{\s*([A-E])\s*\.?\s*\})");
  static const std::regex answer_is(R"([Aa]nswer\s+is\s*:?\s*\(?([A-E])\)?(?![A-Za-z0-9]))");
  std::optional<char> last;
  for (auto it = std::sregex_iterator(reasoning.begin(), reasoning.end(), boxed);
       it != std::sregex_iterator(); ++it) {
    last = (*it)[1].str()[0];
  }
  if (last) return last;
  for (auto it = std::sregex_iterator(reasoning.begin(), reasoning.end(), answer_is);
       it != std::sregex_iterator(); ++it) {
    last = (*it)[1].str()[0];
  }
  return last;
}

}  // namespace clinmcq
