#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "anatcl/cohort.hpp"
#include "anatcl/model.hpp"
#include "anatcl/probe.hpp"
#include "helpers.hpp"

using namespace anatcl;
using namespace anatcl::probe;
using numgrad::Tensor;
using testing_helpers::expect_kind;
using testing_helpers::to_rows;

namespace {

Tensor gaussian(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Tensor t = Tensor::zeros({r, c});
  for (auto& v : t.data()) v = g(rng);
  return t;
}

std::vector<double> linear_targets(const Tensor& x, const std::vector<double>& w, double b) {
  std::vector<double> y(x.rows(), b);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) y[i] += x.at(i, j) * w[j];
  return y;
}

}  // namespace

TEST(Ridge, ExactInterpolation) {
  std::mt19937_64 rng(1);
  const Tensor x = gaussian(30, 4, rng);
  const std::vector<double> w{1.5, -2.0, 0.25, 3.0};
  const auto y = linear_targets(x, w, 7.0);
  const auto m = ridge_fit(x, y, 0.0);
  const auto pred = m.predict(x);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(pred[i], y[i], 1e-8);
  EXPECT_NEAR(m.intercept, 7.0, 1e-8);
}

TEST(Ridge, HugePenaltyPredictsMean) {
  std::mt19937_64 rng(2);
  const Tensor x = gaussian(25, 3, rng);
  const auto y = linear_targets(x, {1, 2, 3}, 4.0);
  const auto m = ridge_fit(x, y, 1e14);
  double mean = 0.0;
  for (double v : y) mean += v / y.size();
  for (double w : m.weights) EXPECT_LT(std::abs(w), 1e-10);
  for (double p : m.predict(x)) EXPECT_NEAR(p, mean, 1e-9);
}

TEST(Ridge, MatchesNormalEquationOracle) {
  std::mt19937_64 rng(3);
  for (auto [n, p] : {std::pair<std::size_t, std::size_t>{20, 5}, {50, 20}}) {
    for (double lambda : {0.0, 0.5, 10.0}) {
      const Tensor x = gaussian(n, p, rng);
      std::vector<double> y(n);
      std::normal_distribution<double> g;
      for (auto& v : y) v = g(rng) * 3.0 + 1.0;
      const auto m = ridge_fit(x, y, lambda);
      const auto ref = oracle::ridge(to_rows(x), y, lambda);
      for (std::size_t j = 0; j < p; ++j) EXPECT_NEAR(m.weights[j], ref[j], 1e-9) << n << "x" << p << " l=" << lambda;
      EXPECT_NEAR(m.intercept, ref[p], 1e-9);
    }
  }
}

TEST(Ridge, SingularWithoutPenalty) {
  // Two identical columns.
  Tensor x = Tensor::zeros({10, 2});
  for (std::size_t i = 0; i < 10; ++i) x.at(i, 0) = x.at(i, 1) = static_cast<double>(i);
  const std::vector<double> y(10, 1.0);
  expect_kind([&] { ridge_fit(x, y, 0.0); }, ErrorKind::singular_system);
  EXPECT_NO_THROW(ridge_fit(x, y, 1.0));
  expect_kind([&] { ridge_fit(x, std::vector<double>(9, 1.0), 1.0); }, ErrorKind::length_mismatch);
}

TEST(Logistic, SeparableClusters) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Tensor x = Tensor::zeros({200, 3});
  std::vector<double> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    y[i] = i < 60 ? 1.0 : 0.0;
    for (std::size_t j = 0; j < 3; ++j) x.at(i, j) = g(rng) + (y[i] == 1.0 ? 5.0 : -5.0);
  }
  const auto m = logistic_probe_fit(x, y);
  EXPECT_GE(balanced_accuracy(classify(m, x), y), 0.99);
}

TEST(Logistic, SingleClass) {
  std::mt19937_64 rng(5);
  const Tensor x = gaussian(10, 2, rng);
  expect_kind([&] { logistic_probe_fit(x, std::vector<double>(10, 1.0)); }, ErrorKind::single_class);
}

TEST(Logistic, Deterministic) {
  std::mt19937_64 rng(6);
  const Tensor x = gaussian(40, 3, rng);
  std::vector<double> y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = x.at(i, 0) + 0.3 * x.at(i, 1) > 0.2 ? 1.0 : 0.0;
  EXPECT_EQ(logistic_probe_fit(x, y), logistic_probe_fit(x, y));
}

TEST(Logistic, BalancedObjectiveIgnoresMinorityDuplication) {
  std::mt19937_64 rng(7);
  const Tensor x = gaussian(60, 3, rng);
  std::vector<double> y(60);
  std::normal_distribution<double> g;
  for (std::size_t i = 0; i < 60; ++i) y[i] = x.at(i, 0) + g(rng) > 0.8 ? 1.0 : 0.0;
  std::vector<double> data(x.data().begin(), x.data().end());
  std::vector<double> y2 = y;
  std::size_t rows = 60;
  for (std::size_t i = 0; i < 60; ++i) {
    if (y[i] != 1.0) continue;
    data.insert(data.end(), x.row(i).begin(), x.row(i).end());
    y2.push_back(1.0);
    ++rows;
  }
  const Tensor x2 = Tensor::matrix(rows, 3, std::move(data));
  const auto a = logistic_probe_fit(x, y), b = logistic_probe_fit(x2, y2);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a.weights[j], b.weights[j], 1e-10);
  EXPECT_NEAR(a.intercept, b.intercept, 1e-10);
}

TEST(Metrics, Examples) {
  const std::vector<double> t{1, 1, 0, 0};
  EXPECT_EQ(mae(t, t), 0.0);
  EXPECT_EQ(balanced_accuracy(t, t), 1.0);
  EXPECT_EQ(r2(t, t), 1.0);
  EXPECT_DOUBLE_EQ(balanced_accuracy(std::vector<double>{1, 0, 0, 0}, t), 0.75);
  const std::vector<double> ages{10, 20, 40, 50};
  EXPECT_DOUBLE_EQ(r2(std::vector<double>(4, 30.0), ages), 0.0);
  EXPECT_DOUBLE_EQ(mae(std::vector<double>{12, 20, 37, 50}, ages), 1.25);
  expect_kind([] { mae(std::vector<double>{1}, std::vector<double>{1, 2}); }, ErrorKind::length_mismatch);
  expect_kind([] { balanced_accuracy(std::vector<double>{1, 0}, std::vector<double>{1, 1}); },
              ErrorKind::single_class);
}

TEST(Metrics, BalancedAccuracyUnderClassDuplication) {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> pred(40), target(40);
  for (std::size_t i = 0; i < 40; ++i) {
    target[i] = i % 2;
    pred[i] = coin(rng) ? 1.0 : 0.0;
  }
  const double base = balanced_accuracy(pred, target);
  auto p2 = pred, t2 = target;
  for (std::size_t rep = 0; rep < 3; ++rep)
    for (std::size_t i = 0; i < 40; ++i)
      if (target[i] == 0.0) {
        p2.push_back(pred[i]);
        t2.push_back(0.0);
      }
  EXPECT_DOUBLE_EQ(balanced_accuracy(p2, t2), base);
}

TEST(ProbeResult, PopulationStd) {
  const auto r = ProbeResult::from_folds("age", "mae", {1, 2, 3, 4, 5});
  EXPECT_DOUBLE_EQ(r.mean, 3.0);
  EXPECT_DOUBLE_EQ(r.std, std::sqrt(2.0));
  const std::vector<ProbeResult> rs{r};
  const auto csv = to_csv(rs);
  EXPECT_NE(csv.find("age,mae,4,5\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("age,mae,3,1.4142135623730951\n"), std::string::npos) << csv;
}

class CrossValidate : public ::testing::Test {
 protected:
  static cohort::Cohort make(std::size_t n, std::uint64_t seed) {
    cohort::SyntheticConfig sc;
    sc.n_subjects = n;
    sc.input_dim = 24;
    sc.seed = seed;
    return cohort::generate(sc);
  }
  static model::Parameters encoder(std::uint64_t seed = 1) {
    model::EncoderConfig e;
    e.input_dim = 24;
    e.hidden = {32};
    e.representation_dim = 16;
    e.projection_dim = 8;
    e.seed = seed;
    return model::init(e);
  }
};

TEST_F(CrossValidate, ExactlyKFolds) {
  const auto c = make(100, 1);
  for (std::size_t k : {2u, 5u, 7u}) {
    ProbeOptions opt;
    opt.folds = k;
    const auto rep = cross_validate(c, encoder(), "age", opt);
    ASSERT_EQ(rep.results.size(), 2u);
    EXPECT_EQ(rep.results[0].metric, "mae");
    EXPECT_EQ(rep.results[1].metric, "r2");
    EXPECT_EQ(rep.results[0].folds.size(), k);
    EXPECT_EQ(rep.fits.size(), k);
  }
}

TEST_F(CrossValidate, StratifiesBinaryTasks) {
  const auto c = make(203, 2);
  const auto labels = c.label("dx_neuro");
  double pos = 0;
  for (double v : labels) pos += v;
  const auto rep = cross_validate(c, encoder(), "dx_neuro");
  ASSERT_EQ(rep.results[0].folds.size(), 5u);
  for (const auto& f : rep.fits) {
    double fp = 0;
    for (auto i : f.test) fp += labels[i];
    EXPECT_LE(std::abs(fp - pos * f.test.size() / c.size()), 1.0 + 1e-9);
  }
}

TEST_F(CrossValidate, PureNoiseLabelIsAtChance) {
  double sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto c = make(500, seed);
    ProbeOptions opt;
    opt.seed = seed;
    const auto rep = cross_validate(c, encoder(seed), "coin", opt);
    const double m = rep.results[0].mean;
    EXPECT_GE(m, 0.40) << "seed " << seed;
    EXPECT_LE(m, 0.60) << "seed " << seed;
    sum += m;
  }
  EXPECT_GE(sum / 3.0, 0.40);
  EXPECT_LE(sum / 3.0, 0.60);
}

TEST_F(CrossValidate, SameSeedSameBytes) {
  const auto c = make(80, 3);
  const auto a = cross_validate(c, encoder(), "age");
  const auto b = cross_validate(c, encoder(), "age");
  EXPECT_EQ(to_csv(a.results), to_csv(b.results));
}

TEST_F(CrossValidate, TestFoldNeverReachesTheFit) {
  auto c = make(100, 4);
  const auto p = encoder();
  const auto a = cross_validate(c, p, "age");
  const auto& test = a.fits[0].test;
  auto subjects = c.subjects();
  for (auto i : test)
    for (auto& v : subjects[i].x) v = v * 5.0 + 100.0;
  const cohort::Cohort perturbed(subjects, c.roi());
  const auto b = cross_validate(perturbed, p, "age");
  EXPECT_EQ(b.fits[0], a.fits[0]);
  EXPECT_NE(b.results[0].folds[0], a.results[0].folds[0]);
  EXPECT_NE(b.fits[1], a.fits[1]);
}

TEST_F(CrossValidate, UnknownLabel) {
  expect_kind([&] { cross_validate(make(50, 5), encoder(), "nope"); }, ErrorKind::label_missing);
}

TEST(FeatureStudy, GmvRanksFirstAndNoiseIsUninformative) {
  cohort::SyntheticConfig sc;
  sc.n_subjects = 500;
  sc.input_dim = 8;
  sc.seed = 9;
  const auto c = cohort::generate(sc);
  const auto rows = feature_study(*c.roi(), c.ages());
  ASSERT_EQ(rows.size(), 7u);
  const FeatureStudyRow* best = &rows[0];
  for (const auto& r : rows) {
    EXPECT_EQ(r.r2.folds.size(), 5u);
    EXPECT_LE(r.neg_mae.mean, 0.0);
    if (r.r2.mean > best->r2.mean) best = &r;
    if (r.measure == anatomy::Measure::gaussian_curv_index) {
      EXPECT_LE(r.r2.mean, 0.05);
    }
  }
  EXPECT_EQ(best->measure, anatomy::Measure::gmv);
  const auto csv = feature_study_csv(rows);
  EXPECT_EQ(csv.rfind("measure,neg_mae_mean,neg_mae_std,r2_mean,r2_std\n", 0), 0u);
}

TEST(FeatureStudy, NeedsTwoMeasures) {
  cohort::SyntheticConfig sc;
  sc.n_subjects = 20;
  sc.input_dim = 4;
  sc.measures = anatomy::MeasureSet({anatomy::Measure::gmv});
  const auto c = cohort::generate(sc);
  expect_kind([&] { feature_study(*c.roi(), c.ages()); }, ErrorKind::invalid_config);
}
