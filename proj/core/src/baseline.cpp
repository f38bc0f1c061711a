#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>

#include "dpars/error.hpp"
#include "dpars/eval.hpp"

namespace dpars::eval {

namespace {

// Rows of flattened windows for one split, gathered in blocks so the Gram
// matrix never needs the full design matrix in memory.
constexpr std::size_t kBlock = 512;

Eigen::MatrixXd gather(const dataset::LabeledDataset& data, const std::vector<std::size_t>& idx, std::size_t begin,
                       std::size_t end) {
  const std::size_t p = data.geometry.window_samples * data.stream.frames.cols;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(p));
  for (std::size_t r = begin; r < end; ++r) {
    const auto w = data.window(idx[r]);
    for (std::size_t k = 0; k < p; ++k) x(static_cast<Eigen::Index>(r - begin), static_cast<Eigen::Index>(k)) = w.data[k];
  }
  return x;
}

Matrix predict_split(const dataset::LabeledDataset& data, const std::vector<std::size_t>& idx,
                     const Eigen::MatrixXd& w, const Eigen::RowVectorXd& x_mean, const Eigen::RowVectorXd& y_mean) {
  Matrix out(idx.size(), static_cast<std::size_t>(w.cols()));
  for (std::size_t b = 0; b < idx.size(); b += kBlock) {
    const std::size_t e = std::min(idx.size(), b + kBlock);
    Eigen::MatrixXd x = gather(data, idx, b, e);
    x.rowwise() -= x_mean;
    const Eigen::MatrixXd y = (x * w).rowwise() + y_mean;
    for (Eigen::Index r = 0; r < y.rows(); ++r)
      for (Eigen::Index c = 0; c < y.cols(); ++c) out(b + static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = y(r, c);
  }
  return out;
}

Matrix truth_of(const dataset::LabeledDataset& data, const std::vector<std::size_t>& idx) {
  Matrix t(idx.size(), dataset::kFingers);
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < dataset::kFingers; ++c) t(r, c) = data.items[idx[r]].target[c];
  return t;
}

}  // namespace

BaselineResult baseline_linear(const dataset::LabeledDataset& data) {
  const auto train = data.indices(dataset::Split::train);
  const auto val = data.indices(dataset::Split::val);
  const auto test = data.indices(dataset::Split::test);
  if (train.size() < 2 || val.size() < 2 || test.size() < 2) {
    throw ProtocolError("eval", "baseline needs at least two windows in every split");
  }
  const auto p = static_cast<Eigen::Index>(data.geometry.window_samples * data.stream.frames.cols);
  const auto f = static_cast<Eigen::Index>(dataset::kFingers);
  const double n = static_cast<double>(train.size());

  // Centered normal equations, accumulated blockwise.
  Eigen::RowVectorXd x_sum = Eigen::RowVectorXd::Zero(p);
  Eigen::RowVectorXd y_sum = Eigen::RowVectorXd::Zero(f);
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd xty = Eigen::MatrixXd::Zero(p, f);
  for (std::size_t b = 0; b < train.size(); b += kBlock) {
    const std::size_t e = std::min(train.size(), b + kBlock);
    const Eigen::MatrixXd x = gather(data, train, b, e);
    Eigen::MatrixXd y(x.rows(), f);
    for (std::size_t r = b; r < e; ++r)
      for (Eigen::Index c = 0; c < f; ++c) y(static_cast<Eigen::Index>(r - b), c) = data.items[train[r]].target[c];
    x_sum += x.colwise().sum();
    y_sum += y.colwise().sum();
    xtx.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    xty.noalias() += x.transpose() * y;
  }
  const Eigen::RowVectorXd x_mean = x_sum / n;
  const Eigen::RowVectorXd y_mean = y_sum / n;
  Eigen::MatrixXd gram = xtx.selfadjointView<Eigen::Lower>();
  gram.noalias() -= n * x_mean.transpose() * x_mean;
  const Eigen::MatrixXd cross = xty - n * x_mean.transpose() * y_mean;
  const double scale = gram.trace() / static_cast<double>(p);

  const Matrix val_truth = truth_of(data, val);
  BaselineResult best;
  Eigen::MatrixXd best_w;
  double best_score = -std::numeric_limits<double>::infinity();
  for (double rel : std::array{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0}) {
    const double alpha = rel * std::max(scale, 1e-12);
    Eigen::MatrixXd reg = gram;
    reg.diagonal().array() += alpha;
    const Eigen::LDLT<Eigen::MatrixXd> solver(reg);
    const Eigen::MatrixXd w = solver.solve(cross);
    if (!w.allFinite()) continue;
    auto m = r2(predict_split(data, val, w, x_mean, y_mean), val_truth);
    const double score = std::isfinite(m.mean_r2) ? m.mean_r2 : -std::numeric_limits<double>::infinity();
    if (score > best_score || best_w.size() == 0) {
      best_score = score;
      best_w = w;
      best.alpha = alpha;
      best.val = std::move(m);
    }
  }
  if (best_w.size() == 0) throw NumericalError("eval", "ridge baseline produced no finite solution");
  best.test = r2(predict_split(data, test, best_w, x_mean, y_mean), truth_of(data, test));
  return best;
}

}  // namespace dpars::eval
