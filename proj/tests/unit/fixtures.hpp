#pragma once

#include "dpars/dataset.hpp"
#include "dpars/model.hpp"

namespace fixture {

// A few seconds of 8-channel synthetic data, enough to exercise training.
inline dpars::dataset::LabeledDataset small_dataset(std::uint64_t seed = 42) {
  dpars::dataset::SyntheticConfig c;
  c.seed = seed;
  c.duration_s = 3.0;
  c.n_channels = 8;
  const auto d = dpars::dataset::synthesize(c);
  const auto s = dpars::sigproc::preprocess(d.recording, dpars::sigproc::PreprocessConfig{});
  return dpars::dataset::build_dataset(s, d.angles, dpars::dataset::WindowGeometry{10, 1});
}

inline dpars::DparsConfig small_config() {
  dpars::DparsConfig c;
  c.c_in = 8;
  c.d_enc = 3;
  c.t_seq = 10;
  c.h_atn = 4;
  c.d_exp = 5;
  c.h_attr = 4;
  c.h_refn = 3;
  return c;
}

}  // namespace fixture
