#include <algorithm>

#include "dpars/error.hpp"
#include "dpars/eval.hpp"

namespace dpars::eval {

CostReport mac_count(const DparsConfig& c, const std::vector<std::size_t>& support_sizes) {
  c.validate();
  if (!support_sizes.empty() && support_sizes.size() != c.n_fingers) {
    throw ConfigError("eval", "need one support size per finger");
  }
  for (const auto s : support_sizes) {
    if (s == 0 || s > c.n_states) throw ConfigError("eval", "support size must lie in 1..n_states");
  }
  CostReport r;
  r.params = model::param_count(c);
  r.support_sizes = support_sizes;

  auto stages = [&](const std::vector<std::size_t>& sizes) {
    StageMacs s;
    s.encoder = c.c_in * c.d_enc;
    s.attention = c.t_seq * (2 * c.d_enc * c.h_atn + c.h_atn);
    s.context = c.t_seq * c.d_enc;
    s.expansion = c.d_enc * c.d_exp;
    for (std::size_t f = 0; f < c.n_fingers; ++f) {
      const std::size_t states = sizes.empty() ? c.n_states : sizes[f];
      s.attractor_hidden += c.d_exp * c.h_attr;
      s.attractor_output += c.h_attr * states + states;
      s.refinement += c.refinement_width() * c.h_refn + c.h_refn;
    }
    return s;
  };
  r.dense = stages({});
  r.pruned = stages(support_sizes);
  r.attractor_output_ratio =
      static_cast<double>(r.dense.attractor_output) / static_cast<double>(r.pruned.attractor_output);
  r.total_ratio = static_cast<double>(r.dense.total()) / static_cast<double>(r.pruned.total());
  r.input_compression = static_cast<double>(c.c_in) / static_cast<double>(c.d_enc);
  r.temporal_compression = static_cast<double>(c.t_seq);
  r.reduction_factor = r.input_compression * r.temporal_compression;
  return r;
}

PrunedModel prune_attractor_heads(const DparsParams& params, const std::vector<std::vector<std::size_t>>& support) {
  const auto& c = params.config;
  if (support.size() != c.n_fingers) throw ConfigError("eval", "need one support set per finger");
  PrunedModel out{params, {}};
  std::vector<std::size_t> sizes;
  for (std::size_t f = 0; f < c.n_fingers; ++f) {
    const auto& keep = support[f];
    const auto& src = params.attractor[f];
    if (keep.empty()) throw ConfigError("eval", "empty support set for finger " + std::to_string(f));
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (keep[i] >= src.states.size()) throw ConfigError("eval", "support index out of range");
      if (i && keep[i] <= keep[i - 1]) throw ConfigError("eval", "support indices must be strictly increasing");
    }
    auto& dst = out.params.attractor[f];
    const std::size_t h = src.w2.value.cols;
    dst.w2 = ad::Parameter(src.w2.name, keep.size(), h);
    dst.b2 = ad::Parameter(src.b2.name, keep.size(), 1);
    dst.states.clear();
    for (std::size_t i = 0; i < keep.size(); ++i) {
      const std::size_t k = keep[i];
      std::copy_n(src.w2.value.data.begin() + static_cast<std::ptrdiff_t>(k * h), h,
                  dst.w2.value.data.begin() + static_cast<std::ptrdiff_t>(i * h));
      dst.b2.value.data[i] = src.b2.value.data[k];
      dst.states.push_back(src.states[k]);
    }
    sizes.push_back(keep.size());
  }
  out.cost = mac_count(c, sizes);
  return out;
}

}  // namespace dpars::eval
