#include "support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace fetsgan;
using namespace fetsgan::testing;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> wave(std::size_t T, const std::function<double(double)>& f) {
  std::vector<double> x(T);
  for (std::size_t t = 0; t < T; ++t) x[t] = f(static_cast<double>(t));
  return x;
}

Dataset single_feature(const std::vector<std::vector<double>>& seqs) {
  Dataset d{1, {"v"}, {}, {}};
  for (std::size_t i = 0; i < seqs.size(); ++i) d.push(Sequence{seqs[i].size(), seqs[i]}, std::to_string(i));
  return d;
}

FitConfig small_fit(int epochs = 30) {
  FitConfig fc;
  fc.hidden = 16;
  fc.layers = 1;
  fc.max_epochs = epochs;
  fc.patience = epochs;
  fc.batch_size = 32;
  return fc;
}

Dataset normalized_sines(std::size_t n, std::size_t T, std::uint64_t seed) {
  const auto raw = synth_sines(small_sines(n, T, seed));
  return fit_normalizer(raw).apply(raw);
}

ModelBundle<double> tiny_bundle(const Dataset& raw) {
  auto c = tiny_config();
  c.epochs = 1;
  TrainOptions o;
  o.warnings = nullptr;
  return train<double>(c, raw, o).bundle;
}

}  // namespace

TEST(DominantComponent, SineAtIndexFive) {
  const auto x = wave(100, [](double t) { return std::sin(2 * kPi * 5 * t / 100); });
  const auto c = dominant_component(x);
  EXPECT_EQ(c.frequency, 5u);
  EXPECT_NEAR(c.amplitude, 1.0, 1e-6);
  EXPECT_NEAR(c.phase, -kPi / 2, 1e-6);
  EXPECT_NEAR(c.amplitude, 2.0 * oracle::dft_magnitude(x, 5) / 100.0, 1e-9);
}

TEST(DominantComponent, CosineAtIndexTwo) {
  const auto x = wave(64, [](double t) { return 3.0 * std::cos(2 * kPi * 2 * t / 64); });
  const auto c = dominant_component(x);
  EXPECT_EQ(c.frequency, 2u);
  EXPECT_NEAR(c.amplitude, 3.0, 1e-9);
  EXPECT_NEAR(c.phase, 0.0, 1e-9);
}

TEST(DominantComponent, ConstantHasNoOscillatoryEnergy) {
  const std::vector<double> x(50, 0.7);
  const auto c = dominant_component(x);
  EXPECT_NEAR(c.amplitude, 0.0, 1e-9);
  EXPECT_GE(c.frequency, 1u);
  EXPECT_LT(c.frequency, 25u);
}

TEST(DominantComponent, BinMagnitudesMatchBruteForceDft) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 30; ++i) {
    std::vector<double> x(4 + rng() % 60);
    for (auto& v : x) v = u(rng);
    std::size_t best = 1;
    for (std::size_t k = 1; k < x.size() / 2; ++k) {
      EXPECT_NEAR(std::abs(dft_bin(x, k)), oracle::dft_magnitude(x, k), 1e-9);
      if (oracle::dft_magnitude(x, k) > oracle::dft_magnitude(x, best)) best = k;
    }
    EXPECT_EQ(dominant_component(x).frequency, best);
  }
}

TEST(DominantComponent, AmplitudeEquivariant) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(40);
  for (auto& v : x) v = u(rng);
  for (double c : {0.25, 3.0, 17.5}) {
    std::vector<double> y;
    for (double v : x) y.push_back(c * v);
    const auto a = dominant_component(x), b = dominant_component(y);
    EXPECT_EQ(a.frequency, b.frequency);
    EXPECT_NEAR(b.amplitude, c * a.amplitude, 1e-9 * c);
    EXPECT_NEAR(b.phase, a.phase, 1e-9);
  }
}

TEST(DominantComponent, PhaseAndIndexRanges) {
  const auto d = synth_sines(small_sines(200, 30, 4));
  for (const auto& s : d.sequences) {
    const auto c = dominant_component(s, 1);
    EXPECT_GE(c.frequency, 1u);
    EXPECT_LT(c.frequency, 15u);
    EXPECT_GT(c.phase, -kPi);
    EXPECT_LE(c.phase, kPi);
    EXPECT_GE(c.amplitude, 0.0);
  }
}

TEST(DominantComponent, RejectsMultiFeatureAndShortInput) {
  EXPECT_THROW(dominant_component(Sequence{5, std::vector<double>(10)}, 2), ContractViolation);
  EXPECT_THROW(dominant_component(std::vector<double>{1, 2, 3}), ContractViolation);
}

TEST(KsStatistic, IdenticalAndDisjoint) {
  const std::vector<double> a{1, 2, 3, 4}, b{6, 7, 8, 9};
  EXPECT_EQ(ks_statistic(a, a), 0.0);
  EXPECT_EQ(ks_statistic(a, b), 1.0);
  EXPECT_THROW(ks_statistic({}, a), ContractViolation);
}

TEST(KsStatistic, MatchesEcdfOracleWithTies) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(1 + rng() % 40), b(1 + rng() % 40);
    // Small integer support forces frequent ties.
    const bool ties = i % 2 == 0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : a) v = ties ? static_cast<double>(rng() % 6) : u(rng);
    for (auto& v : b) v = ties ? static_cast<double>(rng() % 6) : u(rng) + 0.1;
    EXPECT_NEAR(ks_statistic(a, b), oracle::ks(a, b), 1e-9);
  }
}

TEST(DistributionReport, IdenticalDatasetsGiveZeroKs) {
  const auto d = synth_sines(small_sines(50, 40, 5));
  const auto r = distribution_report(d, d);
  EXPECT_TRUE(r.spectral);
  EXPECT_EQ(r.ks_frequency, 0.0);
  EXPECT_EQ(r.ks_amplitude, 0.0);
  EXPECT_EQ(r.ks_phase, 0.0);
  EXPECT_EQ(r.frequency.real, r.frequency.synthetic);
}

TEST(DistributionReport, DisjointFrequencyRanges) {
  auto lo = small_sines(60, 50, 6), hi = small_sines(60, 50, 7);
  lo.freq_min = 1.0;
  lo.freq_max = 4.0;
  hi.freq_min = 6.0;
  hi.freq_max = 9.0;
  const auto r = distribution_report(synth_sines(lo), synth_sines(hi));
  EXPECT_EQ(r.ks_frequency, 1.0);
}

TEST(DistributionReport, HistogramsCountEverySequence) {
  const auto a = synth_sines(small_sines(37, 30, 8)), b = synth_sines(small_sines(23, 30, 9));
  const auto r = distribution_report(a, b, 12);
  for (const auto* h : {&r.frequency, &r.amplitude, &r.phase}) {
    EXPECT_EQ(h->edges.size(), h->real.size() + 1);
    EXPECT_EQ(std::accumulate(h->real.begin(), h->real.end(), std::size_t{0}), 37u);
    EXPECT_EQ(std::accumulate(h->synthetic.begin(), h->synthetic.end(), std::size_t{0}), 23u);
  }
  EXPECT_EQ(r.amplitude.real.size(), 12u);
}

TEST(DistributionReport, MultivariateUsesPca) {
  Dataset d{2, {"a", "b"}, {}, {}};
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 10; ++i) {
    Sequence s{6, {}};
    for (int k = 0; k < 12; ++k) s.values.push_back(g(rng));
    d.push(s, std::to_string(i));
  }
  const auto r = distribution_report(d, d);
  EXPECT_FALSE(r.spectral);
  EXPECT_EQ(r.pca.real.size(), 10u);
  EXPECT_EQ(r.pca.real, r.pca.synthetic);
}

TEST(Pca, TwoClustersStaySeparated) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 0.3);
  Dataset real{3, {"a", "b", "c"}, {}, {}};
  std::vector<int> label;
  for (int i = 0; i < 40; ++i) {
    const double centre = i % 2 == 0 ? -2.0 : 2.0;
    Sequence s{5, {}};
    for (int k = 0; k < 15; ++k) s.values.push_back(centre * (k % 3 == 0 ? 1.0 : -0.5) + g(rng));
    real.push(s, std::to_string(i));
    label.push_back(i % 2);
  }
  const auto p = pca_project(real, real).real;
  // Mean silhouette of the two labelled groups in the projected plane.
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double same = 0.0, other = 0.0;
    std::size_t ns = 0, no = 0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (i == j) continue;
      const double dist = std::hypot(p[i][0] - p[j][0], p[i][1] - p[j][1]);
      if (label[i] == label[j]) {
        same += dist;
        ++ns;
      } else {
        other += dist;
        ++no;
      }
    }
    const double a = same / static_cast<double>(ns), b = other / static_cast<double>(no);
    total += (b - a) / std::max(a, b);
  }
  EXPECT_GT(total / static_cast<double>(p.size()), 0.0);
}

TEST(Pca, AxesAreDeterministicallySigned) {
  const auto d = synth_sines(small_sines(30, 8, 12));
  const auto a = pca_project(d, d), b = pca_project(d, d);
  EXPECT_EQ(a.real, b.real);
}

TEST(DiscriminativeScore, HalvesOfTheSameDataAreIndistinguishable) {
  const auto all = normalized_sines(400, 20, 13);
  std::vector<std::size_t> first(200), second(200);
  std::iota(first.begin(), first.end(), std::size_t{0});
  std::iota(second.begin(), second.end(), std::size_t{200});
  const auto r = discriminative_score<double>(all.subset(first), all.subset(second), small_fit(), 1);
  EXPECT_LE(r.score, 0.1);
  EXPECT_NEAR(r.score, std::abs(0.5 - r.accuracy), 1e-15);
  EXPECT_EQ(r.seed, 1u);
}

TEST(DiscriminativeScore, ConstantZerosAreSeparable) {
  const auto real = normalized_sines(100, 20, 14);
  const auto zeros = single_feature(std::vector<std::vector<double>>(100, std::vector<double>(20, 0.0)));
  const auto r = discriminative_score<double>(real, zeros, small_fit(), 2);
  EXPECT_GE(r.score, 0.4);
  EXPECT_LE(r.score, 0.5);
}

TEST(DiscriminativeScore, SameSeedSameScore) {
  const auto a = normalized_sines(40, 10, 15), b = normalized_sines(40, 10, 16);
  EXPECT_EQ(discriminative_score<double>(a, b, small_fit(5), 3).accuracy,
            discriminative_score<double>(a, b, small_fit(5), 3).accuracy);
}

TEST(PredictiveScore, ZeroSyntheticScoresFarWorseThanReal) {
  const auto real = normalized_sines(100, 20, 17);
  const auto zeros = single_feature(std::vector<std::vector<double>>(100, std::vector<double>(20, 0.0)));
  const auto from_zeros = predictive_score<double>(real, zeros, 1, small_fit(300), 4);
  const auto from_real = predictive_score<double>(real, real, 1, small_fit(300), 4);
  EXPECT_GT(from_zeros.mae, 3.0 * from_real.mae);
  EXPECT_GT(from_zeros.mae, 0.3);
}

TEST(PredictiveScore, SelfConsistentOnSines) {
  const auto real = normalized_sines(300, 50, 18);
  FitConfig fc;
  fc.max_epochs = 30;
  const auto r = predictive_score<float>(real, real, 1, fc, 5);
  EXPECT_LE(r.mae, 0.05);
  EXPECT_GE(r.mae, 0.0);
}

TEST(PredictiveScore, HorizonMustBeBelowLength) {
  const auto real = normalized_sines(4, 5, 19);
  EXPECT_THROW(predictive_score<double>(real, real, 5, small_fit(1), 0), ContractViolation);
  EXPECT_THROW(predictive_score<double>(real, real, 0, small_fit(1), 0), ContractViolation);
}

TEST(PredictiveScore, DenormalizedScalesByHalfRange) {
  const auto raw = synth_sines(small_sines(20, 10, 20));
  const auto norm = fit_normalizer(raw);
  const auto real = norm.apply(raw);
  const auto r = predictive_score<double>(real, real, 1, small_fit(3), 6, &norm);
  EXPECT_NEAR(r.mae_denorm, r.mae * 0.5 * (norm.max[0] - norm.min[0]), 1e-9);
}

TEST(SampleNear, ZeroNoiseWithSharedEtaIsIdentical) {
  const auto raw = synth_sines(small_sines(16, 12, 21));
  const auto m = tiny_bundle(raw);
  Rng rng(22);
  const auto out = sample_near(m, raw.sequences[0], 0.0, 5, rng, true);
  ASSERT_EQ(out.samples.size(), 5u);
  for (const auto& s : out.samples.sequences) EXPECT_EQ(s.values, out.samples.sequences[0].values);
  EXPECT_EQ(out.anchor_code.size(), 4u);
  EXPECT_FALSE(out.untrained);
}

TEST(SampleNear, OutputsStayInDataRange) {
  const auto raw = synth_sines(small_sines(16, 12, 23));
  const auto m = tiny_bundle(raw);
  Rng rng(24);
  const auto out = sample_near(m, raw.sequences[1], 0.1, 20, rng);
  for (const auto& s : out.samples.sequences) {
    EXPECT_EQ(s.length, 12u);
    for (double v : s.values) {
      EXPECT_GE(v, m.normalizer.min[0] - 1e-9);
      EXPECT_LE(v, m.normalizer.max[0] + 1e-9);
    }
  }
}

TEST(SampleNear, UntrainedFlagAndBadNoise) {
  Rng init(25);
  auto c = tiny_config();
  auto m = init_models<double>(c, 1, init);
  m.normalizer = fit_normalizer(synth_sines(small_sines(4, 8)));
  Rng rng(26);
  const auto anchor = sine_sequence({1.0, 2.0, 0.0}, 8);
  EXPECT_TRUE(sample_near(m, anchor, 0.1, 2, rng, false, true).untrained);
  EXPECT_THROW(sample_near(m, anchor, -0.1, 2, rng), ContractViolation);
}

TEST(Protocol, SeedRule) {
  EXPECT_EQ(protocol_seed(7, 0, 0), 7u);
  EXPECT_EQ(protocol_seed(7, 2, 3), 2010u);
}

TEST(Protocol, RepetitionCountsAndReportShape) {
  const auto raw = synth_sines(small_sines(24, 10, 27));
  const auto m = tiny_bundle(raw);
  ProtocolSpec spec;
  spec.models = 3;
  spec.samples = 2;
  spec.metrics = {"dis", "pred3"};
  spec.fit = small_fit(2);
  const auto r = run_protocol<double>({&m}, raw, spec);
  ASSERT_EQ(r.metrics.size(), 2u);
  EXPECT_EQ(r.metrics.at("dis").values.size(), 6u);
  EXPECT_EQ(r.metrics.at("pred3").denorm.size(), 6u);
  for (double v : r.metrics.at("dis").values) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 0.5);
  }
  const auto j = to_json(r);
  EXPECT_EQ(j["metrics"]["dis"]["runs"], 6);
  EXPECT_TRUE(j["metrics"]["pred3"].contains("denormalized"));
  EXPECT_EQ(j["meta"]["models"], 3);
  EXPECT_EQ(j["meta"]["distinct_checkpoints"], 1);
  EXPECT_EQ(to_json(run_protocol<double>({&m}, raw, spec)).dump(), j.dump());
}

TEST(Protocol, UnknownMetricRejected) {
  const auto raw = synth_sines(small_sines(8, 10, 28));
  const auto m = tiny_bundle(raw);
  ProtocolSpec spec;
  spec.metrics = {"pred7"};
  EXPECT_THROW(run_protocol<double>({&m}, raw, spec), ContractViolation);
}

TEST(MetricSummary, MeanAndSampleStd) {
  const MetricSummary s{{1.0, 2.0, 3.0, 4.0}, {}};
  EXPECT_DOUBLE_EQ(s.mean(), 2.5);
  EXPECT_NEAR(s.stddev(), std::sqrt(5.0 / 3.0), 1e-12);
  const MetricSummary one{{0.3}, {}};
  EXPECT_EQ(one.stddev(), 0.0);
  const auto j = to_json(s);
  EXPECT_EQ(j["runs"], 4);
  EXPECT_EQ(j["values"].size(), 4u);
}
