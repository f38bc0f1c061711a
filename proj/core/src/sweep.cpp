#include <sstream>

#include "dpars/csv.hpp"
#include "dpars/error.hpp"
#include "dpars/eval.hpp"

namespace dpars::eval {

namespace {

SweepRow summarize(double value, std::vector<double> per_seed) {
  SweepRow row;
  row.value = value;
  for (double v : per_seed) row.mean_r2 += v;
  row.mean_r2 /= static_cast<double>(per_seed.size());
  // Population variance; a single seed gives zero.
  for (double v : per_seed) row.var_r2 += (v - row.mean_r2) * (v - row.mean_r2);
  row.var_r2 /= static_cast<double>(per_seed.size());
  row.per_seed = std::move(per_seed);
  return row;
}

double test_r2(const dataset::LabeledDataset& data, const DparsConfig& config, const train::TrainConfig& tc) {
  const auto result = train::train_loop(data, config, tc);
  const auto pred = predict(data, result.best, dataset::Split::test);
  return r2(pred.y, pred.truth).mean_r2;
}

}  // namespace

std::vector<SweepRow> encoding_size_sweep(const dataset::LabeledDataset& data, const DparsConfig& base,
                                          const train::TrainConfig& train, const std::vector<std::size_t>& sizes,
                                          const std::vector<std::uint64_t>& seeds) {
  if (sizes.empty() || seeds.empty()) throw ConfigError("eval", "sweep needs at least one value and one seed");
  std::vector<SweepRow> rows;
  for (const auto d : sizes) {
    DparsConfig config = base;
    config.d_enc = d;
    config.validate();
    std::vector<double> scores;
    for (const auto seed : seeds) {
      auto tc = train;
      tc.seed = seed;
      scores.push_back(test_r2(data, config, tc));
    }
    rows.push_back(summarize(static_cast<double>(d), std::move(scores)));
  }
  return rows;
}

std::vector<SweepRow> lambda_sweep(const dataset::LabeledDataset& data, const DparsConfig& config,
                                   const train::TrainConfig& train, const std::vector<double>& lambdas,
                                   const std::vector<std::uint64_t>& seeds) {
  if (lambdas.empty() || seeds.empty()) throw ConfigError("eval", "sweep needs at least one value and one seed");
  std::vector<SweepRow> rows;
  for (const double lambda : lambdas) {
    std::vector<double> scores;
    for (const auto seed : seeds) {
      auto tc = train;
      tc.seed = seed;
      tc.lambda = lambda;
      tc.validate();
      scores.push_back(test_r2(data, config, tc));
    }
    rows.push_back(summarize(lambda, std::move(scores)));
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& key) {
  std::string out = key + ",mean_r2,var_r2\n";
  for (const auto& r : rows) {
    csv::append_double(out, r.value);
    out += ',';
    csv::append_double(out, r.mean_r2);
    out += ',';
    csv::append_double(out, r.var_r2);
    out += '\n';
  }
  return out;
}

}  // namespace dpars::eval
