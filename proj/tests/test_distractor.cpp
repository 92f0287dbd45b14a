#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>
#include <random>

#include "choice_invariants.hpp"
#include "clinmcq/distractor/engine.hpp"
#include "clinmcq/ingest/synth.hpp"

using namespace clinmcq;

namespace {

GmmModel single(double mean, double sd) {
  GmmModel m;
  m.weights = {1.0};
  m.means = {mean};
  m.variances = {sd * sd};
  return m;
}

FeatureSpec continuous(int precision, std::optional<Bounds> bounds = std::nullopt) {
  FeatureSpec f;
  f.name = "Lactate";
  f.unit = "mmol/L";
  f.section = {"Laboratory"};
  f.kind = FeatureKind::Continuous;
  f.precision = precision;
  f.bounds = bounds;
  return f;
}

std::vector<double> sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v;
}

void expect_values(const std::vector<double>& got, const std::vector<double>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12) << i;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST(FitGmm, DegenerateInputReducesK) {
  const std::vector<double> v(40, 5.0);
  const auto fit = fit_gmm(v, 3);
  ASSERT_EQ(fit.model.k(), 1u);
  EXPECT_DOUBLE_EQ(fit.model.means[0], 5.0);
  EXPECT_DOUBLE_EQ(fit.model.variances[0], fit.model.variance_floor);
  EXPECT_DOUBLE_EQ(fit.model.variance_floor, 1e-6);
  EXPECT_EQ(fit.warnings.size(), 1u);
  EXPECT_THROW(fit_gmm(std::vector<double>{}, 3), InvalidArgument);
  EXPECT_EQ(fit_gmm(std::vector<double>{1.0, 2.0}, 3).model.k(), 2u);
}

TEST(FitGmm, RecoversPlantedMixture) {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::vector<double> v;
  for (int i = 0; i < 3000; ++i) v.push_back(5.0 * (i % 3) + noise(gen));
  const auto fit = fit_gmm(v, 3);
  const auto means = sorted(fit.model.means);
  EXPECT_NEAR(means[0], 0.0, 0.2);
  EXPECT_NEAR(means[1], 5.0, 0.2);
  EXPECT_NEAR(means[2], 10.0, 0.2);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(fit.model.sd(j), 0.5, 0.1);
  const auto& tr = fit.model.log_likelihood_trace;
  for (std::size_t i = 1; i < tr.size(); ++i) EXPECT_GE(tr[i], tr[i - 1] - 1e-7);
}

TEST(FitGmm, TraceMonotoneAndModelValidOnRandomInputs) {
  std::mt19937_64 gen(123);
  for (int trial = 0; trial < 60; ++trial) {
    std::uniform_int_distribution<int> n_dist(5, 400);
    std::lognormal_distribution<double> skewed(0.0, 1.0);
    std::uniform_real_distribution<double> u(-50, 50);
    std::vector<double> v(static_cast<std::size_t>(n_dist(gen)));
    for (auto& x : v) x = trial % 2 ? skewed(gen) : std::round(u(gen));
    const auto fit = fit_gmm(v, 1 + trial % 4);
    const auto& m = fit.model;
    double wsum = 0;
    for (double w : m.weights) {
      EXPECT_GE(w, 0.0);
      wsum += w;
    }
    EXPECT_NEAR(wsum, 1.0, 1e-9);
    for (double var : m.variances) EXPECT_GE(var, m.variance_floor);
    for (std::size_t i = 1; i < m.log_likelihood_trace.size(); ++i) {
      ASSERT_GE(m.log_likelihood_trace[i], m.log_likelihood_trace[i - 1] - 1e-7) << trial;
    }
    const auto again = fit_gmm(v, 1 + trial % 4);
    EXPECT_EQ(again.model.means, m.means);
  }
}

TEST(SampleComponent, SingleComponentAlwaysZero) {
  Rng rng(1);
  const auto m = single(0, 1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_component(m, 3.0 * i, rng), 0u);
}

TEST(SampleComponent, FarSeparatedComponentDominates) {
  GmmModel m;
  m.weights = {0.3, 0.3, 0.4};
  m.means = {0.0, 10.0, 20.0};
  m.variances = {1.0, 1.0, 1.0};
  // Closed form: responsibilities at x = 10 put ~1 - 2e-22 on component 1.
  const auto post = posterior(m, 10.0);
  EXPECT_GT(post[1], 1 - 1e-12);
  Rng rng(5);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += sample_component(m, 10.0, rng) == 1;
  EXPECT_GT(hits / 10000.0, 0.999);
}

TEST(SampleComponent, SymmetricMidpointSplitsEvenly) {
  GmmModel m;
  m.weights = {0.5, 0.5};
  m.means = {-1.0, 1.0};
  m.variances = {1.0, 1.0};
  Rng rng(77);
  int first = 0;
  for (int i = 0; i < 10000; ++i) first += sample_component(m, 0.0, rng) == 0;
  EXPECT_NEAR(first / 10000.0, 0.5, 0.02);
}

TEST(ContinuousChoices, LactateArithmeticSequence) {
  Rng rng(3);
  const auto spec = continuous(1);
  const auto cs = continuous_choices(single(3.0, 0.5), 3.1, 2.0, 5, spec, rng);
  ASSERT_TRUE(cs.margin);
  EXPECT_DOUBLE_EQ(*cs.margin, 1.0);
  expect_values(sorted(cs.raw_values), {2.1, 2.6, 3.1, 3.6, 4.1});
  EXPECT_EQ(cs.answer_text(), "3.1");
  EXPECT_EQ(invariants::check_choice_set(cs, spec, Value(3.1)), "");
}

TEST(ContinuousChoices, NegativeCandidatesShiftUpward) {
  Rng rng(4);
  const auto spec = continuous(1, Bounds{0.0, kInf});
  const auto cs = continuous_choices(single(1.0, 0.5), 0.2, 2.0, 5, spec, rng);
  expect_values(sorted(cs.raw_values), {0.2, 0.7, 1.2, 1.7, 2.2});
  EXPECT_EQ(invariants::check_choice_set(cs, spec, Value(0.2)), "");
}

TEST(ContinuousChoices, RoundingCollisionReducesCount) {
  Rng rng(5);
  const auto spec = continuous(0);
  const auto cs = continuous_choices(single(7.0, 0.5), 7.0, 2.0, 5, spec, rng);
  expect_values(sorted(cs.raw_values), {6.0, 7.0, 8.0});
  EXPECT_EQ(invariants::check_choice_set(cs, spec, Value(7.0)), "");
  // A margin below one grid unit still yields the minimum of two options.
  const auto tiny = continuous_choices(single(7.0, 0.1), 7.0, 2.0, 5, spec, rng);
  EXPECT_EQ(tiny.size(), 2u);
  EXPECT_EQ(invariants::check_choice_set(tiny, spec, Value(7.0)), "");
}

TEST(ContinuousChoices, OptionCountAndDifficultyValidated) {
  Rng rng(1);
  const auto spec = continuous(1);
  EXPECT_THROW(continuous_choices(single(0, 1), 0, 2.0, 1, spec, rng), InvalidArgument);
  EXPECT_THROW(continuous_choices(single(0, 1), 0, 2.0, 6, spec, rng), InvalidArgument);
  EXPECT_THROW(continuous_choices(single(0, 1), 0, 0.0, 5, spec, rng), InvalidArgument);
  for (std::size_t k = 2; k <= 5; ++k) {
    const auto cs = continuous_choices(single(0, 1), 0.4, 2.0, k, spec, rng);
    EXPECT_EQ(cs.size(), k);
    EXPECT_EQ(invariants::check_choice_set(cs, spec, Value(0.4)), "");
  }
}

TEST(PlausibilityPostprocess, WholeStepTranslation) {
  const auto spec = continuous(1, Bounds{0.0, kInf});
  expect_values(plausibility_postprocess({-0.4, 0.1, 0.6, 1.1, 1.6}, 0.6, spec),
                {0.1, 0.6, 1.1, 1.6, 2.1});
}

TEST(PlausibilityPostprocess, NoBoundsIsIdentity) {
  const auto spec = continuous(1);
  expect_values(plausibility_postprocess({-0.4, 0.1, 0.6, 1.1, 1.6}, 0.6, spec),
                {-0.4, 0.1, 0.6, 1.1, 1.6});
}

TEST(PlausibilityPostprocess, NarrowBoundsShrinkButKeepTruth) {
  const auto spec = continuous(1, Bounds{0.0, 1.0});
  const auto g = plausibility_postprocess(arithmetic_grid(0.5, 2.0, 5, 1), spec);
  const auto v = g.values();
  ASSERT_GE(v.size(), 2u);
  ASSERT_LE(v.size(), 5u);
  EXPECT_NE(std::find_if(v.begin(), v.end(), [](double x) { return std::fabs(x - 0.5) < 1e-12; }),
            v.end());
  for (double x : v) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
}

TEST(PlausibilityPostprocess, TruthOutsideBoundsIsSchemaError) {
  const auto spec = continuous(1, Bounds{0.0, 1.0});
  EXPECT_THROW(plausibility_postprocess({1.0, 1.5, 2.0}, 1.5, spec), SchemaError);
  EXPECT_THROW(plausibility_postprocess({1.0, 1.5, 2.2}, 1.5, continuous(1)), InvalidArgument);
}

TEST(CategoricalChoices, BinaryFeature) {
  Rng rng(9);
  const FrequencyTable t{{"Appropriate", 700}, {"Inappropriate", 300}};
  const auto cs = categorical_choices(t, "Appropriate", 5, rng);
  ASSERT_EQ(cs.size(), 2u);
  EXPECT_EQ(cs.answer_text(), "Appropriate");
  EXPECT_EQ(std::set<std::string>(cs.options.begin(), cs.options.end()),
            (std::set<std::string>{"Appropriate", "Inappropriate"}));
}

TEST(CategoricalChoices, TenValuesFiveOptions) {
  Rng rng(10);
  FrequencyTable t;
  for (int i = 0; i < 10; ++i) t["v" + std::to_string(i)] = 1 + i;
  for (int trial = 0; trial < 200; ++trial) {
    const auto cs = categorical_choices(t, "v3", 5, rng);
    ASSERT_EQ(cs.size(), 5u);
    ASSERT_EQ(std::set<std::string>(cs.options.begin(), cs.options.end()).size(), 5u);
    ASSERT_EQ(cs.answer_text(), "v3");
  }
}

TEST(CategoricalChoices, ZeroFrequencyNeverSampled) {
  Rng rng(11);
  const FrequencyTable t{{"a", 10}, {"b", 0}, {"c", 5}, {"d", 3}};
  for (int trial = 0; trial < 500; ++trial) {
    const auto cs = categorical_choices(t, "a", 3, rng);
    ASSERT_EQ(std::count(cs.options.begin(), cs.options.end(), "b"), 0);
  }
}

TEST(CategoricalChoices, FrequencyWeighting) {
  Rng rng(12);
  const FrequencyTable t{{"truth", 1}, {"common", 90}, {"rare", 10}};
  int picked_rare = 0;
  for (int i = 0; i < 5000; ++i) {
    const auto cs = categorical_choices(t, "truth", 2, rng);
    picked_rare += std::count(cs.options.begin(), cs.options.end(), "rare") > 0;
  }
  EXPECT_NEAR(picked_rare / 5000.0, 0.1, 0.015);
}

TEST(CategoricalChoices, Errors) {
  Rng rng(1);
  EXPECT_THROW(categorical_choices({{"only", 5}}, "only", 5, rng), GenerationError);
  EXPECT_THROW(categorical_choices({{"a", 5}, {"b", 1}}, "zzz", 5, rng), GenerationError);
  EXPECT_THROW(categorical_choices({{"a", 5}, {"b", 1}}, "a", 7, rng), InvalidArgument);
}

TEST(DistractorEngine, PositionsUniformAndInvariantsHold) {
  const auto syn = synthesize_registry(600, 40, 31, 0.1);
  const auto& s = syn.table.schema;
  const DistractorEngine engine(syn.table.records, s, {}, Executor{2});
  std::map<std::size_t, std::vector<int>> positions;  // option count -> histogram
  std::size_t built = 0;
  for (const auto& r : syn.table.records) {
    for (FeatureId f = 0; f < s.size() && built < 1000; ++f) {
      if (s[f].kind != FeatureKind::Continuous || is_missing(r.values[f])) continue;
      Rng rng(derive_seed(5, r.patient_id, f));
      const auto cs = engine.make_choices(f, r.values[f], rng);
      ASSERT_EQ(invariants::check_choice_set(cs, s[f], r.values[f]), "") << r.patient_id << " " << f;
      auto& h = positions[cs.size()];
      h.resize(cs.size());
      ++h[cs.answer_index];
      ++built;
    }
  }
  ASSERT_EQ(built, 1000u);
  double chi2 = 0;
  double df = 0;
  for (const auto& [k, h] : positions) {
    double n = 0;
    for (int c : h) n += c;
    for (int c : h) chi2 += (c - n / k) * (c - n / k) / (n / k);
    df += static_cast<double>(k) - 1;
  }
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), chi2));
  EXPECT_GT(p, 0.01) << "chi2 " << chi2 << " df " << df;
}

TEST(DistractorEngine, EligibilityAndDeterminism) {
  const auto syn = synthesize_registry(200, 10, 2, 0.0);
  const auto& s = syn.table.schema;
  const DistractorEngine a(syn.table.records, s);
  const DistractorEngine b(syn.table.records, s, {}, Executor{4});
  for (FeatureId f = 0; f < s.size(); ++f) {
    EXPECT_TRUE(a.eligible(f));
    if (a.gmm(f)) EXPECT_EQ(a.gmm(f)->means, b.gmm(f)->means);
  }
  Rng rng(1);
  EXPECT_THROW(a.make_choices(0, Value(Missing{}), rng), GenerationError);
}
