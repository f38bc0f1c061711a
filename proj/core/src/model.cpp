#include "dpars/model.hpp"

#include <cmath>

#include "dpars/csv.hpp"
#include "dpars/error.hpp"
#include "dpars/kernels.hpp"

namespace dpars {

void DparsConfig::validate() const {
  const std::pair<const char*, std::size_t> widths[] = {
      {"c_in", c_in},     {"d_enc", d_enc},   {"t_seq", t_seq},         {"h_atn", h_atn},
      {"d_exp", d_exp},   {"h_attr", h_attr}, {"n_fingers", n_fingers}, {"h_refn", h_refn}};
  for (const auto& [name, v] : widths) {
    if (v < 1) throw ConfigError("model", std::string(name) + " must be >= 1");
  }
  if (n_states < 2) throw ConfigError("model", "n_states must be >= 2");
  if (!(angle_min < angle_max)) throw ConfigError("model", "angle_min must be below angle_max");
}

std::vector<double> DparsConfig::attractor_states() const {
  std::vector<double> k(n_states);
  const double step = (angle_max - angle_min) / static_cast<double>(n_states - 1);
  for (std::size_t i = 0; i < n_states; ++i) k[i] = angle_min + step * static_cast<double>(i);
  k.back() = angle_max;
  return k;
}

const std::set<std::string>& DparsConfig::keys() {
  static const std::set<std::string> k = {"c_in",     "d_enc",     "t_seq",     "h_atn",
                                          "d_exp",    "h_attr",    "n_states",  "angle_min",
                                          "angle_max", "n_fingers", "h_refn",   "refinement_input"};
  return k;
}

DparsConfig DparsConfig::from_kv(const KvConfig& kv) {
  DparsConfig c;
  auto size = [&](const char* key, std::size_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError("model", std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.c_in = size("c_in", c.c_in);
  c.d_enc = size("d_enc", c.d_enc);
  c.t_seq = size("t_seq", c.t_seq);
  c.h_atn = size("h_atn", c.h_atn);
  c.d_exp = size("d_exp", c.d_exp);
  c.h_attr = size("h_attr", c.h_attr);
  c.n_states = size("n_states", c.n_states);
  c.n_fingers = size("n_fingers", c.n_fingers);
  c.h_refn = size("h_refn", c.h_refn);
  c.angle_min = kv.get_double("angle_min", c.angle_min);
  c.angle_max = kv.get_double("angle_max", c.angle_max);
  const auto ri = kv.get_string("refinement_input", "context");
  if (ri == "context") {
    c.refinement_input = RefinementInput::context;
  } else if (ri == "expansion") {
    c.refinement_input = RefinementInput::expansion;
  } else {
    throw ConfigError("model", "refinement_input must be 'context' or 'expansion'");
  }
  c.validate();
  return c;
}

KvConfig DparsConfig::to_kv() const {
  KvConfig kv;
  kv.set("c_in", std::to_string(c_in));
  kv.set("d_enc", std::to_string(d_enc));
  kv.set("t_seq", std::to_string(t_seq));
  kv.set("h_atn", std::to_string(h_atn));
  kv.set("d_exp", std::to_string(d_exp));
  kv.set("h_attr", std::to_string(h_attr));
  kv.set("n_states", std::to_string(n_states));
  kv.set("n_fingers", std::to_string(n_fingers));
  kv.set("h_refn", std::to_string(h_refn));
  kv.set("angle_min", csv::format_double(angle_min));
  kv.set("angle_max", csv::format_double(angle_max));
  kv.set("refinement_input", refinement_input == RefinementInput::context ? "context" : "expansion");
  return kv;
}

DparsParams DparsParams::zeros(const DparsConfig& c) {
  c.validate();
  DparsParams p;
  p.config = c;
  p.enc_w = ad::Parameter("encoder.w", c.d_enc, c.c_in);
  p.atn_w1 = ad::Parameter("attention.w1", c.h_atn, 2 * c.d_enc);
  p.atn_b1 = ad::Parameter("attention.b1", c.h_atn, 1);
  p.atn_w2 = ad::Parameter("attention.w2", 1, c.h_atn);
  p.atn_b2 = ad::Parameter("attention.b2", 1, 1);
  p.exp_w = ad::Parameter("expansion.w", c.d_exp, c.d_enc);
  p.exp_b = ad::Parameter("expansion.b", c.d_exp, 1);
  const auto states = c.attractor_states();
  for (std::size_t f = 0; f < c.n_fingers; ++f) {
    const std::string a = "attractor." + std::to_string(f) + ".";
    AttractorHead h{ad::Parameter(a + "w1", c.h_attr, c.d_exp), ad::Parameter(a + "b1", c.h_attr, 1),
                    ad::Parameter(a + "w2", c.n_states, c.h_attr), ad::Parameter(a + "b2", c.n_states, 1),
                    states};
    p.attractor.push_back(std::move(h));
    const std::string r = "refinement." + std::to_string(f) + ".";
    RefinementHead rh{ad::Parameter(r + "w1", c.h_refn, c.refinement_width()),
                      ad::Parameter(r + "b1", c.h_refn, 1), ad::Parameter(r + "w2", 1, c.h_refn),
                      ad::Parameter(r + "b2", 1, 1)};
    p.refinement.push_back(std::move(rh));
  }
  return p;
}

std::vector<ad::Parameter*> DparsParams::all() {
  std::vector<ad::Parameter*> out = {&enc_w, &atn_w1, &atn_b1, &atn_w2, &atn_b2, &exp_w, &exp_b};
  for (auto& h : attractor) out.insert(out.end(), {&h.w1, &h.b1, &h.w2, &h.b2});
  for (auto& h : refinement) out.insert(out.end(), {&h.w1, &h.b1, &h.w2, &h.b2});
  return out;
}

std::vector<const ad::Parameter*> DparsParams::all() const {
  auto mut = const_cast<DparsParams*>(this)->all();
  return {mut.begin(), mut.end()};
}

std::size_t DparsParams::enumerated_size() const {
  std::size_t n = 0;
  for (const auto* p : all()) n += p->value.size();
  return n;
}

void DparsParams::zero_grad() {
  for (auto* p : all()) p->zero_grad();
}

namespace model {
namespace {

void need(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeError("model", std::string(what) + ": expected " + std::to_string(want) + " values, got " +
                                  std::to_string(got));
  }
}

// out = W x + b
void affine(const ad::Parameter& w, const ad::Parameter& b, const double* x, double* tmp, double* out) {
  kernels::matvec(w.value.data.data(), w.value.rows, w.value.cols, x, tmp);
  kernels::add(tmp, b.value.data.data(), w.value.rows, out);
}

AttentionContext attention_from_lags(std::span<const double* const> by_lag, const DparsParams& p,
                                     MacCounter* macs) {
  const auto& c = p.config;
  AttentionContext out;
  out.scores.resize(by_lag.size());
  const double* now = by_lag[0];
  for (std::size_t j = 0; j < by_lag.size(); ++j) {
    out.scores[j] = attention_score({by_lag[j], c.d_enc}, {now, c.d_enc}, p, macs);
  }
  out.alpha.resize(by_lag.size());
  kernels::softmax(out.scores.data(), out.scores.size(), out.alpha.data());
  out.z_atn.resize(c.d_enc);
  kernels::weighted_sum(out.alpha.data(), by_lag.size(), by_lag.data(), c.d_enc, out.z_atn.data());
  if (macs) macs->context += by_lag.size() * c.d_enc;
  return out;
}

}  // namespace

ForwardTrace forward_from_encodings(std::span<const double* const> by_lag, const DparsParams& p,
                                    MacCounter* macs) {
  const auto& c = p.config;
  ForwardTrace t;
  auto ctx = attention_from_lags(by_lag, p, macs);
  t.scores = std::move(ctx.scores);
  t.alpha = std::move(ctx.alpha);
  t.z_atn = std::move(ctx.z_atn);
  t.expansion = expand(t.z_atn, p, macs);
  const std::span<const double> refn_in =
      c.refinement_input == RefinementInput::context ? std::span<const double>(t.z_atn)
                                                      : std::span<const double>(t.expansion);
  t.probs.resize(c.n_fingers);
  t.y_attr.resize(c.n_fingers);
  t.y_refn.resize(c.n_fingers);
  t.y.resize(c.n_fingers);
  for (std::size_t f = 0; f < c.n_fingers; ++f) {
    auto head = attractor_head(t.expansion, f, p, macs);
    t.probs[f] = std::move(head.probs);
    t.y_attr[f] = head.y_attr;
    t.y_refn[f] = refine(refn_in, f, p, macs);
    t.y[f] = t.y_attr[f] + t.y_refn[f];
  }
  return t;
}

std::vector<double> encode(std::span<const double> frame, const DparsParams& p, MacCounter* macs) {
  const auto& c = p.config;
  need(frame.size(), c.c_in, "encode");
  std::vector<double> z(c.d_enc);
  kernels::matvec(p.enc_w.value.data.data(), c.d_enc, c.c_in, frame.data(), z.data());
  if (macs) macs->encoder += c.d_enc * c.c_in;
  return z;
}

double attention_score(std::span<const double> z_prev, std::span<const double> z_now, const DparsParams& p,
                       MacCounter* macs) {
  const auto& c = p.config;
  need(z_prev.size(), c.d_enc, "attention_score");
  need(z_now.size(), c.d_enc, "attention_score");
  std::vector<double> joined(2 * c.d_enc), tmp(c.h_atn), hidden(c.h_atn);
  std::copy(z_prev.begin(), z_prev.end(), joined.begin());
  std::copy(z_now.begin(), z_now.end(), joined.begin() + static_cast<std::ptrdiff_t>(c.d_enc));
  affine(p.atn_w1, p.atn_b1, joined.data(), tmp.data(), hidden.data());
  kernels::tanh(hidden.data(), c.h_atn, hidden.data());
  double s = 0.0;
  double out = 0.0;
  kernels::matvec(p.atn_w2.value.data.data(), 1, c.h_atn, hidden.data(), &s);
  kernels::add(&s, p.atn_b2.value.data.data(), 1, &out);
  if (macs) macs->attention += 2 * c.d_enc * c.h_atn + c.h_atn;
  return out;
}

AttentionContext attention_context(std::span<const std::span<const double>> by_lag, const DparsParams& p,
                                   MacCounter* macs) {
  const auto& c = p.config;
  if (by_lag.size() != c.t_seq) {
    throw ShapeError("model", "attention_context: need " + std::to_string(c.t_seq) + " encodings, got " +
                                  std::to_string(by_lag.size()));
  }
  std::vector<const double*> ptrs;
  for (const auto& z : by_lag) {
    need(z.size(), c.d_enc, "attention_context");
    ptrs.push_back(z.data());
  }
  return attention_from_lags(ptrs, p, macs);
}

std::vector<double> expand(std::span<const double> z_atn, const DparsParams& p, MacCounter* macs) {
  const auto& c = p.config;
  need(z_atn.size(), c.d_enc, "expand");
  std::vector<double> tmp(c.d_exp), e(c.d_exp);
  affine(p.exp_w, p.exp_b, z_atn.data(), tmp.data(), e.data());
  kernels::tanh(e.data(), c.d_exp, e.data());
  if (macs) macs->expansion += c.d_enc * c.d_exp;
  return e;
}

AttractorOutput attractor_head(std::span<const double> e, std::size_t finger, const DparsParams& p,
                               MacCounter* macs) {
  const auto& c = p.config;
  need(e.size(), c.d_exp, "attractor_head");
  if (finger >= p.attractor.size()) throw ShapeError("model", "attractor_head: finger index out of range");
  const auto& h = p.attractor[finger];
  const std::size_t states = h.states.size();
  std::vector<double> tmp(std::max(c.h_attr, states)), hidden(c.h_attr), logits(states);
  affine(h.w1, h.b1, e.data(), tmp.data(), hidden.data());
  kernels::tanh(hidden.data(), c.h_attr, hidden.data());
  affine(h.w2, h.b2, hidden.data(), tmp.data(), logits.data());
  AttractorOutput out;
  out.probs.resize(states);
  kernels::softmax(logits.data(), states, out.probs.data());
  kernels::matvec(h.states.data(), 1, states, out.probs.data(), &out.y_attr);
  if (macs) {
    macs->attractor_hidden += c.d_exp * c.h_attr;
    macs->attractor_output += c.h_attr * states + states;
  }
  return out;
}

double refine(std::span<const double> input, std::size_t finger, const DparsParams& p, MacCounter* macs) {
  const auto& c = p.config;
  need(input.size(), c.refinement_width(), "refine");
  if (finger >= p.refinement.size()) throw ShapeError("model", "refine: finger index out of range");
  const auto& h = p.refinement[finger];
  std::vector<double> tmp(c.h_refn), hidden(c.h_refn);
  affine(h.w1, h.b1, input.data(), tmp.data(), hidden.data());
  kernels::tanh(hidden.data(), c.h_refn, hidden.data());
  double s = 0.0;
  double out = 0.0;
  kernels::matvec(h.w2.value.data.data(), 1, c.h_refn, hidden.data(), &s);
  kernels::add(&s, h.b2.value.data.data(), 1, &out);
  if (macs) macs->refinement += c.refinement_width() * c.h_refn + c.h_refn;
  return out;
}

ForwardTrace forward(const sigproc::WindowView& window, const DparsParams& p, MacCounter* macs) {
  const auto& c = p.config;
  if (window.rows != c.t_seq || window.cols != c.c_in || window.data.size() != c.t_seq * c.c_in) {
    throw ShapeError("model", "window geometry [" + std::to_string(window.rows) + "x" +
                                  std::to_string(window.cols) + "] does not match config [" +
                                  std::to_string(c.t_seq) + "x" + std::to_string(c.c_in) + "]");
  }
  Matrix z_enc(c.t_seq, c.d_enc);
  for (std::size_t r = 0; r < c.t_seq; ++r) {
    const auto z = encode(window.frame(r), p, macs);
    std::copy(z.begin(), z.end(), z_enc.row(r).begin());
  }
  std::vector<const double*> by_lag(c.t_seq);
  for (std::size_t j = 0; j < c.t_seq; ++j) by_lag[j] = z_enc.row(c.t_seq - 1 - j).data();
  auto trace = forward_from_encodings(by_lag, p, macs);
  trace.z_enc = std::move(z_enc);
  return trace;
}

GraphOutputs build_graph(ad::Tape& tape, const sigproc::WindowView& window, DparsParams& p) {
  const auto& c = p.config;
  if (window.rows != c.t_seq || window.cols != c.c_in) throw ShapeError("model", "window geometry mismatch");

  const ad::Var enc_w = tape.parameter(p.enc_w);
  std::vector<ad::Var> by_lag(c.t_seq);
  for (std::size_t r = 0; r < c.t_seq; ++r) {
    by_lag[c.t_seq - 1 - r] = tape.matvec(enc_w, tape.view(window.frame(r), c.c_in));
  }

  const ad::Var w1 = tape.parameter(p.atn_w1);
  const ad::Var b1 = tape.parameter(p.atn_b1);
  const ad::Var w2 = tape.parameter(p.atn_w2);
  const ad::Var b2 = tape.parameter(p.atn_b2);
  std::vector<ad::Var> scores(c.t_seq);
  for (std::size_t j = 0; j < c.t_seq; ++j) {
    const ad::Var joined = tape.concat(by_lag[j], by_lag[0]);
    const ad::Var hidden = tape.tanh(tape.add(tape.matvec(w1, joined), b1));
    scores[j] = tape.add(tape.matvec(w2, hidden), b2);
  }
  const ad::Var alpha = tape.softmax(tape.concat(scores));
  const ad::Var z_atn = tape.weighted_sum(alpha, by_lag);

  const ad::Var e =
      tape.tanh(tape.add(tape.matvec(tape.parameter(p.exp_w), z_atn), tape.parameter(p.exp_b)));
  const ad::Var refn_in = c.refinement_input == RefinementInput::context ? z_atn : e;

  GraphOutputs out;
  std::vector<ad::Var> ys(c.n_fingers);
  for (std::size_t f = 0; f < c.n_fingers; ++f) {
    auto& h = p.attractor[f];
    const ad::Var hidden =
        tape.tanh(tape.add(tape.matvec(tape.parameter(h.w1), e), tape.parameter(h.b1)));
    const ad::Var logits = tape.add(tape.matvec(tape.parameter(h.w2), hidden), tape.parameter(h.b2));
    const ad::Var probs = tape.softmax(logits);
    const ad::Var y_attr = tape.matvec(tape.view(h.states, 1, h.states.size()), probs);

    auto& r = p.refinement[f];
    const ad::Var rh =
        tape.tanh(tape.add(tape.matvec(tape.parameter(r.w1), refn_in), tape.parameter(r.b1)));
    const ad::Var y_refn = tape.add(tape.matvec(tape.parameter(r.w2), rh), tape.parameter(r.b2));

    ys[f] = tape.add(y_attr, y_refn);
    out.probs.push_back(probs);
  }
  out.y = tape.concat(ys);
  return out;
}

ParamCount param_count(const DparsConfig& c) {
  c.validate();
  ParamCount n;
  n.encoder = c.c_in * c.d_enc;
  n.attention = 2 * c.d_enc * c.h_atn + c.h_atn + c.h_atn + 1;
  n.expansion = c.d_enc * c.d_exp + c.d_exp;
  n.attractor = c.n_fingers * (c.d_exp * c.h_attr + c.h_attr + c.h_attr * c.n_states + c.n_states);
  n.refinement = c.n_fingers * (c.refinement_width() * c.h_refn + c.h_refn + c.h_refn + 1);
  n.total = n.encoder + n.attention + n.expansion + n.attractor + n.refinement;
  return n;
}

}  // namespace model

StreamingDecoder::StreamingDecoder(const DparsParams& params)
    : params_(&params), ring_(params.config.t_seq, params.config.d_enc) {}

std::optional<ForwardTrace> StreamingDecoder::step(std::span<const double> frame, MacCounter* macs) {
  const auto& c = params_->config;
  const auto z = model::encode(frame, *params_, macs);
  std::copy(z.begin(), z.end(), ring_.row(head_).begin());
  head_ = (head_ + 1) % c.t_seq;
  if (filled_ < c.t_seq) ++filled_;
  if (filled_ < c.t_seq) return std::nullopt;

  // head_ now points at the oldest slot.
  std::vector<const double*> by_lag(c.t_seq);
  for (std::size_t j = 0; j < c.t_seq; ++j) {
    by_lag[j] = ring_.row((head_ + c.t_seq - 1 - j) % c.t_seq).data();
  }
  auto trace = model::forward_from_encodings(by_lag, *params_, macs);
  trace.z_enc = Matrix(c.t_seq, c.d_enc);
  for (std::size_t r = 0; r < c.t_seq; ++r) {
    const auto src = ring_.row((head_ + r) % c.t_seq);
    std::copy(src.begin(), src.end(), trace.z_enc.row(r).begin());
  }
  return trace;
}

void StreamingDecoder::reset() {
  head_ = 0;
  filled_ = 0;
  std::fill(ring_.data.begin(), ring_.data.end(), 0.0);
}

}  // namespace dpars
