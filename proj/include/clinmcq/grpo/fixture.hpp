#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "clinmcq/core/rng.hpp"
#include "clinmcq/forge/question.hpp"
#include "clinmcq/forge/render.hpp"
#include "clinmcq/forge/template.hpp"

namespace clinmcq {

/// Five-option questions whose answer is the option nearest the median of
/// three visible marker readings. The answer position is uniform over A..E.
inline std::vector<Question> separable_questions(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Question> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double truth = std::round(rng.uniform(10, 100) * 10) / 10;
    const double step = std::max(0.2, std::round(rng.uniform(0.5, 3.0) * 10) / 10);
    const std::size_t pos = rng.index(5);
    Question q;
    q.question_id = "toy:" + std::to_string(i);
    q.patient_id = "T" + std::to_string(i);
    q.target = "Target";
    q.kind = QuestionKind::Denoising;
    q.choices.provenance = ChoiceProvenance::ContinuousGmm;
    q.choices.answer_index = pos;
    for (std::size_t j = 0; j < 5; ++j) {
      const double v = truth + (static_cast<double>(j) - static_cast<double>(pos)) * step;
      q.choices.raw_values.push_back(v);
      q.choices.options.push_back(format_fixed(v, 1));
    }
    std::string ctx = "[Laboratory]";
    for (int k = 1; k <= 3; ++k) {
      ctx += "\nMarker " + std::to_string(k) + " (u): " + format_fixed(truth + rng.normal(0, 0.1 * step), 2);
    }
    ctx += "\nTarget (u): [MASK]";
    q.prompt = TemplateSet{}.denoising.render({{"context", ctx},
                                               {"feature", "Target"},
                                               {"section", "Laboratory"},
                                               {"options", render_options(q.choices)},
                                               {"instruction", kAnswerInstruction}});
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace clinmcq
