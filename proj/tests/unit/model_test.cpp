#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "dpars/error.hpp"
#include "dpars/model.hpp"
#include "dpars/rng.hpp"
#include "dpars/train.hpp"
#include "oracles.hpp"

using namespace dpars;

namespace {

DparsConfig tiny() {
  DparsConfig c;
  c.c_in = 4;
  c.d_enc = 2;
  c.t_seq = 3;
  c.h_atn = 3;
  c.d_exp = 4;
  c.h_attr = 3;
  c.n_states = 5;
  c.n_fingers = 2;
  c.h_refn = 3;
  return c;
}

void randomize(DparsParams& p, Rng& rng, double scale = 1.0) {
  for (auto* q : p.all())
    for (double& v : q->value.data) v = rng.uniform(-scale, scale);
}

Matrix random_window(const DparsConfig& c, Rng& rng) {
  Matrix w(c.t_seq, c.c_in);
  for (double& v : w.data) v = rng.normal();
  return w;
}

sigproc::WindowView view(const Matrix& m) { return {m.data, m.rows, m.cols, m.rows - 1}; }

}  // namespace

TEST(DparsConfig, DefaultStatesAreEvenlySpaced) {
  const auto s = DparsConfig{}.attractor_states();
  ASSERT_EQ(s.size(), 11u);
  for (std::size_t k = 0; k < s.size(); ++k) EXPECT_DOUBLE_EQ(s[k], 90.0 + 9.0 * k);
}

TEST(DparsConfig, RejectsDegenerateShapes) {
  for (auto field : {&DparsConfig::c_in, &DparsConfig::d_enc, &DparsConfig::t_seq, &DparsConfig::h_atn,
                     &DparsConfig::d_exp, &DparsConfig::h_attr, &DparsConfig::n_fingers, &DparsConfig::h_refn}) {
    DparsConfig c;
    c.*field = 0;
    EXPECT_THROW(c.validate(), ConfigError);
  }
  DparsConfig c;
  c.n_states = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DparsConfig{};
  c.angle_min = 180;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(DparsConfig{}.validate());
}

TEST(DparsConfig, KvRoundTrip) {
  auto c = tiny();
  c.refinement_input = RefinementInput::expansion;
  c.angle_max = 170.5;
  EXPECT_EQ(DparsConfig::from_kv(c.to_kv()), c);
}

TEST(DparsConfig, DefaultsExpandAndCompress) {
  const DparsConfig c;
  EXPECT_GT(c.d_exp, c.d_enc);
  EXPECT_DOUBLE_EQ(static_cast<double>(c.c_in) / c.d_enc, 6.4);
  EXPECT_EQ(c.t_seq * c.d_enc / c.d_enc, 20u);
}

TEST(ParamCount, TinyConfigHandSum) {
  // encoder 4*2 = 8; attention 3*4+3+3+1 = 19; expansion 2*4+4 = 12;
  // attractor 2*(4*3+3+5*3+5) = 70; refinement 2*(2*3+3+3+1) = 26.
  const auto n = model::param_count(tiny());
  EXPECT_EQ(n.encoder, 8u);
  EXPECT_EQ(n.attention, 19u);
  EXPECT_EQ(n.expansion, 12u);
  EXPECT_EQ(n.attractor, 70u);
  EXPECT_EQ(n.refinement, 26u);
  EXPECT_EQ(n.total, 135u);
  EXPECT_EQ(DparsParams::zeros(tiny()).enumerated_size(), 135u);
}

TEST(ParamCount, DefaultTotalIsBracketed) {
  const auto n = model::param_count(DparsConfig{});
  EXPECT_GE(n.total, 5500u);
  EXPECT_LE(n.total, 8200u);
  EXPECT_EQ(n.total, DparsParams::zeros(DparsConfig{}).enumerated_size());
}

TEST(ParamCount, MatchesEnumerationOnRandomConfigs) {
  Rng rng(8);
  for (int i = 0; i < 30; ++i) {
    DparsConfig c;
    c.c_in = 1 + rng.index(9);
    c.d_enc = 1 + rng.index(6);
    c.t_seq = 1 + rng.index(6);
    c.h_atn = 1 + rng.index(6);
    c.d_exp = 1 + rng.index(6);
    c.h_attr = 1 + rng.index(6);
    c.n_states = 2 + rng.index(6);
    c.n_fingers = 1 + rng.index(6);
    c.h_refn = 1 + rng.index(6);
    c.refinement_input = rng.index(2) ? RefinementInput::context : RefinementInput::expansion;
    EXPECT_EQ(model::param_count(c).total, DparsParams::zeros(c).enumerated_size());
  }
}

TEST(DparsParams, NamesAreUniqueAndEncoderHasNoBias) {
  const auto p = DparsParams::zeros(DparsConfig{});
  std::set<std::string> names;
  for (const auto* q : p.all()) {
    EXPECT_TRUE(names.insert(q->name).second) << q->name;
    EXPECT_NE(q->name, "encoder.b");
  }
}

TEST(Encode, ZeroAndIdentity) {
  auto c = tiny();
  auto p = DparsParams::zeros(c);
  const std::vector<double> x = {1, 2, 3, 4};
  for (double v : model::encode(x, p)) EXPECT_EQ(v, 0.0);

  c.c_in = 2;
  auto q = DparsParams::zeros(c);
  q.enc_w.value.data = {1, 0, 0, 1};
  const std::vector<double> x2 = {0.5, -1.5};
  EXPECT_EQ(model::encode(x2, q), x2);
}

TEST(AttentionScore, ZeroWeightsGiveZero) {
  const auto p = DparsParams::zeros(tiny());
  const std::vector<double> a = {1, 2}, b = {-3, 4};
  EXPECT_EQ(model::attention_score(a, b, p), 0.0);
}

TEST(AttentionScore, SharedAcrossLagsAndOrderSensitive) {
  Rng rng(2);
  auto p = DparsParams::zeros(tiny());
  randomize(p, rng);
  const std::vector<double> z = {0.3, -0.8};
  std::vector<std::span<const double>> lags(3, std::span<const double>(z));
  const auto ctx = model::attention_context(lags, p);
  for (double s : ctx.scores) EXPECT_EQ(s, model::attention_score(z, z, p));

  bool differs = false;
  for (int trial = 0; trial < 20 && !differs; ++trial) {
    std::vector<double> a = {rng.normal(), rng.normal()}, b = {rng.normal(), rng.normal()};
    differs = model::attention_score(a, b, p) != model::attention_score(b, a, p);
  }
  EXPECT_TRUE(differs);
}

TEST(AttentionContext, IdenticalFramesGiveUniformWeights) {
  Rng rng(3);
  DparsConfig c;
  auto p = DparsParams::zeros(c);
  randomize(p, rng, 0.3);
  std::vector<double> z(c.d_enc);
  for (double& v : z) v = rng.normal();
  std::vector<std::span<const double>> lags(c.t_seq, std::span<const double>(z));
  const auto ctx = model::attention_context(lags, p);
  for (double a : ctx.alpha) EXPECT_NEAR(a, 0.05, 1e-15);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(ctx.z_atn[i], z[i], 1e-12);
}

TEST(AttentionContext, DominantScoreSelectsItsLag) {
  // Score depends on [z_prev; z_now] through w1; a huge positive output bias
  // on a tanh unit that only fires for one lag isolates that lag.
  auto c = tiny();
  c.d_enc = 1;
  c.h_atn = 1;
  auto p = DparsParams::zeros(c);
  p.atn_w1.value.data = {1.0, 0.0};  // looks at z_prev only
  p.atn_w2.value.data = {500.0};
  const std::vector<double> z0 = {2.0}, z1 = {-1.0}, z2 = {-3.0};
  std::vector<std::span<const double>> lags = {z0, z1, z2};
  const auto ctx = model::attention_context(lags, p);
  EXPECT_NEAR(ctx.alpha[0], 1.0, 1e-12);
  EXPECT_NEAR(ctx.z_atn[0], 2.0, 1e-10);
}

TEST(Expand, ZeroWeightsGiveTanhOfBias) {
  auto p = DparsParams::zeros(tiny());
  p.exp_b.value.data = {0.5, -1, 0, 3};
  const std::vector<double> z = {7, -7};
  const auto e = model::expand(z, p);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(e[i], std::tanh(p.exp_b.value.data[i]));
}

TEST(Expand, OutputsInsideOpenUnitInterval) {
  Rng rng(4);
  auto p = DparsParams::zeros(DparsConfig{});
  randomize(p, rng);
  std::vector<double> z(10);
  for (double& v : z) v = rng.normal();
  for (double v : model::expand(z, p)) {
    EXPECT_GT(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(AttractorHead, ConvexCombinations) {
  DparsConfig c;
  auto p = DparsParams::zeros(c);
  const std::vector<double> e(c.d_exp, 0.3);
  EXPECT_DOUBLE_EQ(model::attractor_head(e, 0, p).y_attr, 135.0);

  p.attractor[1].b2.value.data.back() = 1000.0;
  const auto hot = model::attractor_head(e, 1, p);
  EXPECT_EQ(hot.y_attr, 180.0);

  p.attractor[2].b2.value.data.front() = 1000.0;
  p.attractor[2].b2.value.data.back() = 1000.0;
  EXPECT_DOUBLE_EQ(model::attractor_head(e, 2, p).y_attr, 135.0);
}

TEST(Refine, ZeroWeightsAndFingerIsolation) {
  Rng rng(5);
  DparsConfig c;
  auto p = DparsParams::zeros(c);
  const std::vector<double> z(c.d_enc, 1.0);
  EXPECT_EQ(model::refine(z, 0, p), 0.0);

  randomize(p, rng);
  const double f1 = model::refine(z, 1, p);
  for (double& v : p.refinement[0].w2.value.data) v += 3.0;
  EXPECT_EQ(model::refine(z, 1, p), f1);
  EXPECT_TRUE(std::isfinite(model::refine(std::vector<double>(c.d_enc, 1e6), 0, p)));
}

TEST(Forward, AllZeroGivesMidpoint) {
  DparsConfig c;
  const auto p = DparsParams::zeros(c);
  const Matrix w(c.t_seq, c.c_in);
  const auto t = model::forward(view(w), p);
  for (std::size_t f = 0; f < 6; ++f) {
    EXPECT_DOUBLE_EQ(t.y_attr[f], 135.0);
    EXPECT_EQ(t.y_refn[f], 0.0);
    EXPECT_DOUBLE_EQ(t.y[f], 135.0);
  }
}

TEST(Forward, TraceInvariantsOnRandomInputs) {
  Rng rng(6);
  DparsConfig c;
  for (int i = 0; i < 50; ++i) {
    auto p = DparsParams::zeros(c);
    randomize(p, rng, 2.0);
    const auto w = random_window(c, rng);
    const auto t = model::forward(view(w), p);
    EXPECT_NEAR(std::accumulate(t.alpha.begin(), t.alpha.end(), 0.0), 1.0, 1e-9);
    for (std::size_t f = 0; f < c.n_fingers; ++f) {
      EXPECT_NEAR(std::accumulate(t.probs[f].begin(), t.probs[f].end(), 0.0), 1.0, 1e-9);
      EXPECT_GE(t.y_attr[f], 90.0);
      EXPECT_LE(t.y_attr[f], 180.0);
      EXPECT_EQ(t.y[f], t.y_attr[f] + t.y_refn[f]);
    }
  }
}

TEST(Forward, IdenticalFramesAreOrderInvariant) {
  Rng rng(7);
  DparsConfig c;
  auto p = DparsParams::zeros(c);
  randomize(p, rng, 0.5);
  Matrix w(c.t_seq, c.c_in);
  for (std::size_t k = 0; k < c.c_in; ++k) {
    const double v = rng.normal();
    for (std::size_t r = 0; r < c.t_seq; ++r) w(r, k) = v;
  }
  const auto a = model::forward(view(w), p);
  EXPECT_EQ(a.alpha, std::vector<double>(c.t_seq, a.alpha[0]));
}

TEST(Forward, RejectsWrongWindowGeometry) {
  const auto p = DparsParams::zeros(DparsConfig{});
  const Matrix w(19, 64);
  EXPECT_THROW(model::forward(view(w), p), ShapeError);
}

TEST(Forward, InstrumentedMacsMatchCostFormula) {
  DparsConfig c;
  auto p = DparsParams::zeros(c);
  const Matrix w(c.t_seq, c.c_in);
  StreamingDecoder dec(p);
  MacCounter macs;
  for (std::size_t r = 0; r + 1 < c.t_seq; ++r) dec.step(w.row(r));
  ASSERT_TRUE(dec.step(w.row(c.t_seq - 1), &macs).has_value());
  EXPECT_EQ(macs.encoder, 640u);
  EXPECT_EQ(macs.attention, c.t_seq * (2 * c.d_enc * c.h_atn + c.h_atn));
  EXPECT_EQ(macs.context, c.t_seq * c.d_enc);
  EXPECT_EQ(macs.expansion, c.d_enc * c.d_exp);
  EXPECT_EQ(macs.attractor_hidden, 6 * c.d_exp * c.h_attr);
  EXPECT_EQ(macs.attractor_output, 6 * (c.h_attr * c.n_states + c.n_states));
  EXPECT_EQ(macs.refinement, 6 * (c.d_enc * c.h_refn + c.h_refn));
}

TEST(StreamingDecoder, FillRuleAndBatchEquality) {
  Rng rng(9);
  DparsConfig c;
  auto p = DparsParams::zeros(c);
  randomize(p, rng, 0.5);
  Matrix stream(80, c.c_in);
  for (double& v : stream.data) v = rng.normal();
  StreamingDecoder dec(p);
  for (std::size_t i = 0; i < stream.rows; ++i) {
    auto out = dec.step(stream.row(i));
    if (i + 1 < c.t_seq) {
      EXPECT_FALSE(out.has_value()) << i;
      continue;
    }
    ASSERT_TRUE(out.has_value()) << i;
    const sigproc::WindowView w{std::span<const double>(stream.data).subspan((i + 1 - c.t_seq) * c.c_in,
                                                                             c.t_seq * c.c_in),
                                c.t_seq, c.c_in, i};
    const auto batch = model::forward(w, p);
    EXPECT_EQ(out->y, batch.y);
    EXPECT_EQ(out->alpha, batch.alpha);
    EXPECT_EQ(out->probs, batch.probs);
  }
}

TEST(StreamingDecoder, ResetReplaysIdentically) {
  Rng rng(10);
  DparsConfig c;
  auto p = DparsParams::zeros(c);
  randomize(p, rng, 0.5);
  Matrix stream(30, c.c_in);
  for (double& v : stream.data) v = rng.normal();
  StreamingDecoder dec(p);
  std::vector<std::vector<double>> first;
  for (std::size_t i = 0; i < stream.rows; ++i)
    if (auto t = dec.step(stream.row(i))) first.push_back(t->y);
  dec.reset();
  EXPECT_EQ(dec.filled(), 0u);
  std::size_t k = 0;
  for (std::size_t i = 0; i < stream.rows; ++i)
    if (auto t = dec.step(stream.row(i))) EXPECT_EQ(t->y, first[k++]);
  EXPECT_EQ(k, first.size());
}

TEST(BuildGraph, TapeForwardMatchesValuePathBitForBit) {
  Rng rng(11);
  DparsConfig c;
  auto p = DparsParams::zeros(c);
  randomize(p, rng, 0.5);
  const auto w = random_window(c, rng);
  ad::Tape tape;
  const auto out = model::build_graph(tape, view(w), p);
  const auto ref = model::forward(view(w), p);
  const auto y = tape.value(out.y);
  EXPECT_EQ(std::vector<double>(y.begin(), y.end()), ref.y);
}

TEST(BuildGraph, FullLossGradientMatchesFiniteDifferences) {
  Rng rng(12);
  for (auto input : {RefinementInput::context, RefinementInput::expansion}) {
    auto c = tiny();
    c.refinement_input = input;
    auto p = DparsParams::zeros(c);
    randomize(p, rng);
    const auto w = random_window(c, rng);
    const std::vector<double> target = {120.0, 150.0};
    auto loss = [&] {
      ad::Tape t;
      return t.scalar(train::loss_graph(t, model::build_graph(t, view(w), p), target, 0.3));
    };
    p.zero_grad();
    ad::Tape t;
    t.backward(train::loss_graph(t, model::build_graph(t, view(w), p), target, 0.3));
    for (auto* q : p.all()) {
      for (std::size_t i = 0; i < q->value.size(); ++i) {
        const double fd = oracle::central_difference(loss, q->value.data[i]);
        EXPECT_LT(oracle::rel_error(q->grad.data[i], fd, 1e-6), 1e-5) << q->name << "[" << i << "]";
      }
    }
  }
}
