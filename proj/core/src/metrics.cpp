#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "dpars/error.hpp"
#include "dpars/eval.hpp"
#include "dpars/kernels.hpp"

namespace dpars::eval {

MetricsReport r2(const Matrix& pred, const Matrix& truth) {
  if (pred.rows != truth.rows || pred.cols != truth.cols) throw ShapeError("eval", "r2: shape mismatch");
  if (pred.rows < 2) throw ShapeError("eval", "r2: need at least 2 samples");
  const std::size_t n = truth.rows;
  const std::size_t f = truth.cols;
  MetricsReport m;
  m.r2.assign(f, std::numeric_limits<double>::quiet_NaN());
  m.defined.assign(f, false);
  m.mae.assign(f, 0.0);

  double grand_mean = 0.0;
  for (double v : truth.data) grand_mean += v;
  grand_mean /= static_cast<double>(truth.data.size());
  double pooled_res = 0.0, pooled_tot = 0.0;

  double sum_defined = 0.0;
  std::size_t n_defined = 0;
  for (std::size_t c = 0; c < f; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += truth(r, c);
    mean /= static_cast<double>(n);
    double ss_res = 0.0, ss_tot = 0.0, abs_err = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double e = pred(r, c) - truth(r, c);
      const double d = truth(r, c) - mean;
      ss_res += e * e;
      ss_tot += d * d;
      abs_err += std::abs(e);
      const double g = truth(r, c) - grand_mean;
      pooled_res += e * e;
      pooled_tot += g * g;
    }
    m.mae[c] = abs_err / static_cast<double>(n);
    if (ss_tot > 0.0) {
      m.r2[c] = 1.0 - ss_res / ss_tot;
      m.defined[c] = true;
      sum_defined += m.r2[c];
      ++n_defined;
    } else {
      m.warnings.push_back("finger " + std::to_string(c) + ": truth has zero variance, R^2 undefined");
    }
  }
  m.mean_r2 = n_defined ? sum_defined / static_cast<double>(n_defined) : std::numeric_limits<double>::quiet_NaN();
  m.pooled_r2 = pooled_tot > 0.0 ? 1.0 - pooled_res / pooled_tot : std::numeric_limits<double>::quiet_NaN();
  return m;
}

Predictions predict(const dataset::LabeledDataset& data, const DparsParams& params, dataset::Split split,
                    double lambda) {
  const auto idx = data.indices(split);
  const std::size_t f = params.config.n_fingers;
  Predictions p;
  p.y = Matrix(idx.size(), f);
  p.y_attr = Matrix(idx.size(), f);
  p.y_refn = Matrix(idx.size(), f);
  p.truth = Matrix(idx.size(), f);
  p.probs.reserve(idx.size());
  double loss_sum = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& item = data.items[idx[k]];
    auto trace = model::forward(data.window(idx[k]), params);
    loss_sum += train::loss(trace, item.target, lambda);
    for (std::size_t c = 0; c < f; ++c) {
      p.y(k, c) = trace.y[c];
      p.y_attr(k, c) = trace.y_attr[c];
      p.y_refn(k, c) = trace.y_refn[c];
      p.truth(k, c) = item.target[c];
    }
    p.probs.push_back(std::move(trace.probs));
  }
  p.mean_loss = idx.empty() ? 0.0 : loss_sum / static_cast<double>(idx.size());
  return p;
}

double EntropyReport::average_top2() const {
  if (top2_mass.empty()) return 0.0;
  double s = 0.0;
  for (double v : top2_mass) s += v;
  return s / static_cast<double>(top2_mass.size());
}

EntropyReport entropy_stats(const std::vector<std::vector<std::vector<double>>>& probs, double epsilon) {
  if (probs.empty()) throw ShapeError("eval", "entropy_stats: no traces");
  const std::size_t fingers = probs.front().size();
  EntropyReport r;
  r.epsilon = epsilon;
  r.mean_entropy.assign(fingers, 0.0);
  r.top1_mass.assign(fingers, 0.0);
  r.top2_mass.assign(fingers, 0.0);
  r.mean_probs.resize(fingers);
  r.support.resize(fingers);
  for (std::size_t f = 0; f < fingers; ++f) r.mean_probs[f].assign(probs.front()[f].size(), 0.0);

  std::vector<double> sorted;
  for (const auto& item : probs) {
    if (item.size() != fingers) throw ShapeError("eval", "entropy_stats: inconsistent finger count");
    for (std::size_t f = 0; f < fingers; ++f) {
      const auto& p = item[f];
      if (p.size() != r.mean_probs[f].size()) throw ShapeError("eval", "entropy_stats: inconsistent state count");
      r.mean_entropy[f] += kernels::entropy(p.data(), p.size());
      sorted.assign(p.begin(), p.end());
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      r.top1_mass[f] += sorted[0];
      r.top2_mass[f] += sorted[0] + (sorted.size() > 1 ? sorted[1] : 0.0);
      for (std::size_t k = 0; k < p.size(); ++k) r.mean_probs[f][k] += p[k];
    }
  }
  const double n = static_cast<double>(probs.size());
  for (std::size_t f = 0; f < fingers; ++f) {
    r.mean_entropy[f] /= n;
    r.top1_mass[f] = std::min(1.0, r.top1_mass[f] / n);
    r.top2_mass[f] = std::min(1.0, r.top2_mass[f] / n);
    for (std::size_t k = 0; k < r.mean_probs[f].size(); ++k) {
      r.mean_probs[f][k] /= n;
      if (r.mean_probs[f][k] > epsilon) r.support[f].push_back(k);
    }
  }
  return r;
}

namespace {

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(digits);
  ss << v;
  return ss.str();
}

}  // namespace

std::string format_metrics(const MetricsReport& m) {
  std::ostringstream out;
  out << "R^2 per finger:";
  for (std::size_t f = 0; f < m.r2.size(); ++f) out << " " << (m.defined[f] ? fixed(m.r2[f]) : "undef");
  out << "\nmean R^2: " << fixed(m.mean_r2) << "  pooled R^2: " << fixed(m.pooled_r2) << "\nMAE (deg):";
  for (double v : m.mae) out << " " << fixed(v, 2);
  out << "\n";
  for (const auto& w : m.warnings) out << "warning: " << w << "\n";
  return out.str();
}

std::string format_entropy(const EntropyReport& e) {
  std::ostringstream out;
  out << "attractor entropy (nats) per finger:";
  for (double v : e.mean_entropy) out << " " << fixed(v);
  out << "\ntop-1 mass:";
  for (double v : e.top1_mass) out << " " << fixed(v);
  out << "\ntop-2 mass:";
  for (double v : e.top2_mass) out << " " << fixed(v);
  out << "\nsupport (p > " << e.epsilon << "):";
  for (const auto& s : e.support) out << " " << s.size();
  out << "\n";
  return out.str();
}

std::string format_cost(const CostReport& c) {
  std::ostringstream out;
  out << "parameters: encoder " << c.params.encoder << ", attention " << c.params.attention << ", expansion "
      << c.params.expansion << ", attractor " << c.params.attractor << ", refinement " << c.params.refinement
      << ", total " << c.params.total << "\n";
  auto stages = [&](const char* name, const StageMacs& s) {
    out << name << " MACs/prediction: encoder " << s.encoder << ", attention " << s.attention << ", context "
        << s.context << ", expansion " << s.expansion << ", attractor hidden " << s.attractor_hidden
        << ", attractor output " << s.attractor_output << ", refinement " << s.refinement << ", total "
        << s.total() << "\n";
  };
  stages("dense", c.dense);
  if (!c.support_sizes.empty()) {
    stages("pruned", c.pruned);
    out << "attractor output-stage reduction " << fixed(c.attractor_output_ratio, 2) << "x, total reduction "
        << fixed(c.total_ratio, 3) << "x\n";
  }
  out << "input compression " << fixed(c.input_compression, 1) << "x, temporal compression "
      << fixed(c.temporal_compression, 0) << "x, combined " << fixed(c.reduction_factor, 0) << "x\n";
  return out.str();
}

}  // namespace dpars::eval
