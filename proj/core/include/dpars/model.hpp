#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpars/autodiff.hpp"
#include "dpars/kv_config.hpp"
#include "dpars/matrix.hpp"
#include "dpars/sigproc.hpp"

namespace dpars {

enum class RefinementInput { context, expansion };

/// Architecture dimensions. Defaults give 6828 learnable parameters.
struct DparsConfig {
  std::size_t c_in = 64;
  std::size_t d_enc = 10;
  std::size_t t_seq = 20;
  std::size_t h_atn = 10;
  std::size_t d_exp = 27;
  std::size_t h_attr = 19;
  std::size_t n_states = 11;
  double angle_min = 90.0;
  double angle_max = 180.0;
  std::size_t n_fingers = 6;
  std::size_t h_refn = 16;
  RefinementInput refinement_input = RefinementInput::context;

  /// Throws ConfigError on zero widths, n_states < 2 or angle_min >= angle_max.
  void validate() const;

  /// Evenly spaced attractor states over [angle_min, angle_max], inclusive.
  std::vector<double> attractor_states() const;

  std::size_t refinement_width() const {
    return refinement_input == RefinementInput::context ? d_enc : d_exp;
  }

  static DparsConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
  static const std::set<std::string>& keys();

  friend bool operator==(const DparsConfig&, const DparsConfig&) = default;
};

struct AttractorHead {
  ad::Parameter w1, b1, w2, b2;
  /// Angle of each output row of w2. All states of the config unless pruned.
  std::vector<double> states;
};

struct RefinementHead {
  ad::Parameter w1, b1, w2, b2;
};

/// Every learnable array. The attention MLP is a single parameter set reused
/// at every lag; the encoder has no bias.
struct DparsParams {
  DparsConfig config;
  ad::Parameter enc_w;
  ad::Parameter atn_w1, atn_b1, atn_w2, atn_b2;
  ad::Parameter exp_w, exp_b;
  std::vector<AttractorHead> attractor;
  std::vector<RefinementHead> refinement;

  /// Zero-valued parameters with the right shapes and names.
  static DparsParams zeros(const DparsConfig& config);

  /// Stable order used by optimizers and serialization.
  std::vector<ad::Parameter*> all();
  std::vector<const ad::Parameter*> all() const;

  std::size_t enumerated_size() const;
  void zero_grad();
};

/// Every intermediate of one prediction. Lag-indexed vectors use index j for
/// the encoding j steps before the newest frame.
struct ForwardTrace {
  Matrix z_enc;                 // [t_seq x d_enc], oldest row first
  std::vector<double> scores;   // by lag
  std::vector<double> alpha;    // by lag
  std::vector<double> z_atn;    // [d_enc]
  std::vector<double> expansion;
  std::vector<std::vector<double>> probs;  // per finger, over that head's states
  std::vector<double> y_attr;
  std::vector<double> y_refn;
  std::vector<double> y;
};

/// Multiply-accumulate tally for instrumented forwards.
struct MacCounter {
  std::uint64_t encoder = 0;
  std::uint64_t attention = 0;
  std::uint64_t context = 0;
  std::uint64_t expansion = 0;
  std::uint64_t attractor_hidden = 0;
  std::uint64_t attractor_output = 0;
  std::uint64_t refinement = 0;

  std::uint64_t total() const {
    return encoder + attention + context + expansion + attractor_hidden + attractor_output + refinement;
  }
};

namespace model {

std::vector<double> encode(std::span<const double> frame, const DparsParams& p, MacCounter* macs = nullptr);

double attention_score(std::span<const double> z_prev, std::span<const double> z_now, const DparsParams& p,
                       MacCounter* macs = nullptr);

struct AttentionContext {
  std::vector<double> scores;
  std::vector<double> alpha;
  std::vector<double> z_atn;
};

/// `by_lag[j]` is the encoding j steps before the newest one; needs exactly
/// t_seq entries.
AttentionContext attention_context(std::span<const std::span<const double>> by_lag, const DparsParams& p,
                                   MacCounter* macs = nullptr);

std::vector<double> expand(std::span<const double> z_atn, const DparsParams& p, MacCounter* macs = nullptr);

struct AttractorOutput {
  std::vector<double> probs;
  double y_attr = 0.0;
};

AttractorOutput attractor_head(std::span<const double> e, std::size_t finger, const DparsParams& p,
                               MacCounter* macs = nullptr);

double refine(std::span<const double> input, std::size_t finger, const DparsParams& p, MacCounter* macs = nullptr);

/// Everything after the encoder, given encodings indexed by lag.
ForwardTrace forward_from_encodings(std::span<const double* const> by_lag, const DparsParams& p,
                                    MacCounter* macs = nullptr);

/// Full prediction on a [t_seq x c_in] window of normalized envelopes.
ForwardTrace forward(const sigproc::WindowView& window, const DparsParams& p, MacCounter* macs = nullptr);

/// Tape nodes of one forward pass, for training.
struct GraphOutputs {
  ad::Var y;                      // [n_fingers]
  std::vector<ad::Var> probs;     // per finger
};

/// Records the same computation as forward() on `tape`. Parameters are bound
/// by reference, so backward() accumulates into `p`'s gradients.
GraphOutputs build_graph(ad::Tape& tape, const sigproc::WindowView& window, DparsParams& p);

struct ParamCount {
  std::size_t encoder = 0;
  std::size_t attention = 0;
  std::size_t expansion = 0;
  std::size_t attractor = 0;
  std::size_t refinement = 0;
  std::size_t total = 0;
};

/// Closed-form parameter count for a dense model.
ParamCount param_count(const DparsConfig& config);

}  // namespace model

/// Encodes each incoming frame once and keeps the last t_seq encodings in a
/// ring buffer; emits a trace once the buffer is full.
class StreamingDecoder {
 public:
  explicit StreamingDecoder(const DparsParams& params);

  std::optional<ForwardTrace> step(std::span<const double> frame, MacCounter* macs = nullptr);
  void reset();
  std::size_t filled() const { return filled_; }

 private:
  const DparsParams* params_;
  Matrix ring_;
  std::size_t head_ = 0;  // next slot to write
  std::size_t filled_ = 0;
};

}  // namespace dpars
