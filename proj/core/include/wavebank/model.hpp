#pragma once

#include <string>
#include <vector>

#include "wavebank/params.hpp"
#include "wavebank/rng.hpp"

namespace wavebank {

struct ModelConfig {
  int hidden_size = 96;
  int n_rnn_layers = 3;
  int conv_window = 11;
  int conv_stride = 1;
  std::string alphabet;  // blank is implicit at logit index 0

  void validate() const;  // odd window, unique non-empty alphabet
};

// CTC backend: batch_norm -> 1-D conv over time -> batch_norm ->
// n x { bidirectional Elman RNN -> batch_norm } -> fully connected logits.
// Batch-norm statistics are taken per feature over all rows passed in
// (batch and time jointly, never per timestep); inference uses running
// averages kept with momentum 0.9.
class AcousticModel {
 public:
  AcousticModel(ModelConfig cfg, int input_features, ParamStore& store, Rng& rng);
  AcousticModel(const AcousticModel&) = delete;
  AcousticModel& operator=(const AcousticModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  int input_features() const { return input_features_; }
  int logit_dim() const { return static_cast<int>(cfg_.alphabet.size()) + 1; }

  // One forward pass over a batch of per-utterance feature matrices
  // [T_i, F]. Returns per-utterance logits [T_i - conv_window + 1, L+1].
  // training=true computes batch statistics over the whole batch and
  // updates the running averages in place; training=false normalizes with
  // the stored running averages.
  std::vector<Var> forward(Tape& tape, const ParamBinding& binding,
                           const std::vector<Var>& features, bool training);

  // Closed-form count of the trainable weights.
  int64_t parameter_count() const;

  // Label/character mapping. Logit index = alphabet position + 1.
  std::vector<int> label_ids(const std::string& transcript) const;
  std::string decode_ids(const std::vector<int>& ids) const;

  // Per-frame argmax, collapse repeats, strip blanks.
  std::string greedy_decode(const Tensor& logits) const;

  static constexpr double kBnEps = 1e-5;
  static constexpr double kBnMomentum = 0.9;

 private:
  struct BnState {
    std::string prefix;
    Tensor gamma, beta, running_mean, running_var;
  };
  struct RnnLayer {
    Tensor wx_f, wh_f, b_f, wx_b, wh_b, b_b;
  };

  Var apply_bn(Tape& tape, const ParamBinding& binding, BnState& bn, Var rows, bool training);

  ModelConfig cfg_;
  int input_features_;
  std::vector<BnState> bns_;       // input, post-conv, per-RNN
  Tensor conv_w_;                  // [window, F, H] (no bias: batch norm follows)
  std::vector<RnnLayer> rnns_;
  Tensor fc_w_;                    // [2H, L+1]
  Tensor fc_b_;                    // [L+1]
};

}  // namespace wavebank
