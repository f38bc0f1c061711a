#include <gtest/gtest.h>

#include <cmath>

#include "dpars/csv.hpp"
#include "dpars/error.hpp"
#include "dpars/eval.hpp"
#include "dpars/rng.hpp"
#include "dpars/train.hpp"
#include "fixtures.hpp"

using namespace dpars;
using namespace dpars::eval;

namespace {

Matrix random_truth(std::size_t n, Rng& rng) {
  Matrix m(n, 6);
  for (double& v : m.data) v = rng.uniform(90, 180);
  return m;
}

std::vector<std::vector<std::vector<double>>> repeat(const std::vector<double>& p, std::size_t items) {
  return std::vector<std::vector<std::vector<double>>>(items, std::vector<std::vector<double>>(6, p));
}

}  // namespace

TEST(R2, PerfectAndMeanPredictions) {
  Rng rng(1);
  const auto truth = random_truth(50, rng);
  const auto perfect = r2(truth, truth);
  for (double v : perfect.r2) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(perfect.mean_r2, 1.0);
  EXPECT_EQ(perfect.pooled_r2, 1.0);

  Matrix mean_pred(50, 6);
  for (std::size_t c = 0; c < 6; ++c) {
    double m = 0.0;
    for (std::size_t r = 0; r < 50; ++r) m += truth(r, c);
    for (std::size_t r = 0; r < 50; ++r) mean_pred(r, c) = m / 50.0;
  }
  for (double v : r2(mean_pred, truth).r2) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(R2, MeanIsAverageOfFingersAndBoundedAbove) {
  Rng rng(2);
  const auto truth = random_truth(40, rng);
  auto pred = truth;
  for (double& v : pred.data) v += rng.normal() * 10.0;
  const auto m = r2(pred, truth);
  double s = 0.0;
  for (double v : m.r2) {
    EXPECT_LE(v, 1.0);
    s += v;
  }
  EXPECT_NEAR(m.mean_r2, s / 6.0, 1e-15);
}

TEST(R2, ConstantTruthIsUndefinedWithWarning) {
  Rng rng(3);
  auto truth = random_truth(10, rng);
  for (std::size_t r = 0; r < 10; ++r) truth(r, 2) = 120.0;
  const auto m = r2(truth, truth);
  EXPECT_FALSE(m.defined[2]);
  EXPECT_TRUE(std::isnan(m.r2[2]));
  EXPECT_EQ(m.mean_r2, 1.0);
  EXPECT_EQ(m.warnings.size(), 1u);
  EXPECT_THROW(r2(Matrix(1, 6), Matrix(1, 6)), ShapeError);
  EXPECT_THROW(r2(Matrix(3, 6), Matrix(3, 5)), ShapeError);
}

TEST(EntropyStats, OneHotAndUniform) {
  std::vector<double> hot(11, 0.0);
  hot[2] = 1.0;
  const auto a = entropy_stats(repeat(hot, 5));
  for (std::size_t f = 0; f < 6; ++f) {
    EXPECT_EQ(a.mean_entropy[f], 0.0);
    EXPECT_EQ(a.top1_mass[f], 1.0);
    EXPECT_EQ(a.support[f], std::vector<std::size_t>{2});
  }
  const auto u = entropy_stats(repeat(std::vector<double>(11, 1.0 / 11), 5));
  for (std::size_t f = 0; f < 6; ++f) {
    EXPECT_NEAR(u.mean_entropy[f], std::log(11.0), 1e-12);
    EXPECT_EQ(u.support[f].size(), 11u);
    EXPECT_GE(u.top2_mass[f], u.top1_mass[f]);
    EXPECT_LE(u.top2_mass[f], 1.0);
  }
  EXPECT_THROW(entropy_stats({}), ShapeError);
}

TEST(Cost, DefaultStageCountsAndRatios) {
  const auto c = mac_count(DparsConfig{});
  EXPECT_EQ(c.dense.encoder, 640u);
  EXPECT_DOUBLE_EQ(c.input_compression, 6.4);
  EXPECT_DOUBLE_EQ(c.temporal_compression, 20.0);
  EXPECT_DOUBLE_EQ(c.reduction_factor, 128.0);
  EXPECT_EQ(c.params.total, model::param_count(DparsConfig{}).total);
  EXPECT_EQ(c.dense.total(), c.pruned.total());
}

TEST(Cost, SupportTwoOfElevenGivesFiveAndAHalf) {
  const DparsConfig cfg;
  const auto c = mac_count(cfg, std::vector<std::size_t>(6, 2));
  EXPECT_DOUBLE_EQ(c.attractor_output_ratio, 5.5);
  EXPECT_LE(c.pruned.total(), c.dense.total());
  EXPECT_THROW(mac_count(cfg, std::vector<std::size_t>(6, 12)), ConfigError);
  EXPECT_THROW(mac_count(cfg, std::vector<std::size_t>(6, 0)), ConfigError);
  EXPECT_THROW(mac_count(cfg, std::vector<std::size_t>(5, 2)), ConfigError);
}

TEST(Prune, FullSupportIsIdentical) {
  Rng rng(4);
  const DparsConfig cfg;
  auto p = train::init_params(cfg, 5);
  for (double& v : p.attractor[0].b2.value.data) v = rng.normal();
  std::vector<std::size_t> all(11);
  for (std::size_t k = 0; k < 11; ++k) all[k] = k;
  const auto pruned = prune_attractor_heads(p, std::vector<std::vector<std::size_t>>(6, all));
  Matrix w(cfg.t_seq, cfg.c_in);
  for (double& v : w.data) v = rng.normal();
  const sigproc::WindowView view{w.data, w.rows, w.cols, w.rows - 1};
  EXPECT_EQ(model::forward(view, pruned.params).y, model::forward(view, p).y);
}

TEST(Prune, SingleStateIsDegenerate) {
  Rng rng(6);
  const DparsConfig cfg;
  const auto p = train::init_params(cfg, 6);
  const auto pruned = prune_attractor_heads(p, std::vector<std::vector<std::size_t>>(6, {4}));
  Matrix w(cfg.t_seq, cfg.c_in);
  for (double& v : w.data) v = rng.normal();
  const auto t = model::forward({w.data, w.rows, w.cols, w.rows - 1}, pruned.params);
  for (std::size_t f = 0; f < 6; ++f) {
    EXPECT_EQ(t.y_attr[f], 126.0);
    EXPECT_EQ(t.probs[f], std::vector<double>{1.0});
  }
  MacCounter macs;
  StreamingDecoder dec(pruned.params);
  for (std::size_t r = 0; r < cfg.t_seq; ++r) dec.step(w.row(r), r + 1 == cfg.t_seq ? &macs : nullptr);
  EXPECT_EQ(macs.attractor_output, pruned.cost.pruned.attractor_output);
  EXPECT_THROW(prune_attractor_heads(p, std::vector<std::vector<std::size_t>>(6, {3, 3})), ConfigError);
  EXPECT_THROW(prune_attractor_heads(p, std::vector<std::vector<std::size_t>>(6, {11})), ConfigError);
}

TEST(Baseline, RealizableLinearTargetsFitAlmostPerfectly) {
  auto data = fixture::small_dataset();
  Rng rng(7);
  std::vector<double> w(data.geometry.window_samples * data.stream.channels() * 6);
  for (double& v : w) v = rng.normal();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto win = data.window(i);
    for (std::size_t f = 0; f < 6; ++f) {
      double s = 135.0;
      for (std::size_t k = 0; k < win.data.size(); ++k) s += w[f * win.data.size() + k] * win.data[k];
      data.items[i].target[f] = s;
    }
  }
  const auto b = baseline_linear(data);
  EXPECT_GE(b.test.mean_r2, 0.99);
}

TEST(Predict, ItemsAlignWithSplit) {
  auto data = fixture::small_dataset();
  const auto p = train::init_params(fixture::small_config(), 1);
  const auto pred = predict(data, p, dataset::Split::test);
  EXPECT_EQ(pred.y.rows, data.count(dataset::Split::test));
  EXPECT_EQ(pred.probs.size(), pred.y.rows);
  for (std::size_t r = 0; r < pred.y.rows; ++r)
    for (std::size_t f = 0; f < 6; ++f) EXPECT_EQ(pred.y(r, f), pred.y_attr(r, f) + pred.y_refn(r, f));
}

TEST(Sweeps, RowCountsAndCsv) {
  auto data = fixture::small_dataset();
  train::TrainConfig tc;
  tc.epochs = 1;
  const auto rows = encoding_size_sweep(data, fixture::small_config(), tc, {1, 2}, {1, 2});
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_GE(r.var_r2, 0.0);
    EXPECT_EQ(r.per_seed.size(), 2u);
  }
  const auto lam = lambda_sweep(data, fixture::small_config(), tc, {0.0, 0.1}, {3});
  ASSERT_EQ(lam.size(), 2u);
  EXPECT_EQ(lam[0].var_r2, 0.0);
  const auto t = csv::parse(sweep_csv(rows, "d_enc"));
  EXPECT_EQ(t.header, (std::vector<std::string>{"d_enc", "mean_r2", "var_r2"}));
  EXPECT_EQ(t.values(1, 0), 2.0);
  EXPECT_THROW(encoding_size_sweep(data, fixture::small_config(), tc, {}, {1}), ConfigError);
}
