#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wavebank/audio.hpp"
#include "wavebank/params.hpp"
#include "wavebank/rng.hpp"

namespace wavebank {

inline constexpr double kTargetMsPerFrame = 20.0;

// One learnable filter bank: a set of 1-D filters sharing a window size and
// a convolution stride, followed by max-pooling down to the shared target
// frame period.
struct ScaleConfig {
  std::string name;  // High, Mid, Low or custom
  double window_ms = 0.0;
  double stride_ms = 0.0;
  int n_filters = 0;

  int window_samples() const;
  int stride_samples() const;
  void validate(double target_ms) const;
};

// Pooling stride that brings conv output at `conv_stride_ms` per step down
// to one frame per `target_ms`. The ratio must be a whole number.
int pool_stride_for(double conv_stride_ms, double target_ms = kTargetMsPerFrame);

struct FrontEndConfig {
  double target_ms = kTargetMsPerFrame;
  bool fft = false;  // spectrogram baseline instead of learned filters
  std::vector<ScaleConfig> scales;
  std::optional<int> bottleneck_dim;

  // Features presented to the backend: bottleneck width if present, else
  // the concatenated filter count (161 for the fft baseline).
  int feature_dim() const;
  void validate() const;
};

// Builtin experiment presets: the fft baseline, the single-scale stride
// sweep (table2-*), the three-scale bank comparison (table3-*) and the
// widened filter counts with a bottleneck (table4-*).
std::vector<std::string> preset_names();
FrontEndConfig preset(const std::string& name);

// JSON schema: {"target_ms":20,"scales":[{"name":...,"window_ms":...,
// "stride_ms":...,"n_filters":...}],"bottleneck_dim":161}
FrontEndConfig load_frontend_config(const std::filesystem::path& path);
FrontEndConfig parse_frontend_config(const std::string& json_text);
std::string frontend_config_to_json(const FrontEndConfig& cfg);

// Learnable front end. Owns its parameter tensors and registers them in the
// shared store under "frontend/...". For fft configs there are no
// parameters and forward() returns pooled spectrogram features as a
// constant leaf.
class FrontEnd {
 public:
  FrontEnd(FrontEndConfig cfg, ParamStore& store, Rng& rng);
  // The store keeps pointers into this object; pin it in place.
  FrontEnd(const FrontEnd&) = delete;
  FrontEnd& operator=(const FrontEnd&) = delete;

  const FrontEndConfig& config() const { return cfg_; }
  int n_scales() const { return static_cast<int>(cfg_.scales.size()); }
  const Tensor& filters(int scale) const;  // [K,1,n_filters]

  // Input is the normalized waveform. Output frames arrive at
  // cfg.target_ms per frame; scales are truncated to the shortest scale's
  // frame count before concatenation. Differentiable end to end.
  Var forward(Tape& tape, const ParamBinding& binding, const Waveform& w) const;

  // Single scale on its own (no truncation, no bottleneck).
  Var forward_scale(Tape& tape, const ParamBinding& binding, const Waveform& w, int scale) const;

  // Inference convenience: runs forward on a private tape.
  FeatureMap extract(const Waveform& w) const;

 private:
  Var fft_forward(Tape& tape, const Waveform& w) const;

  FrontEndConfig cfg_;
  std::vector<Tensor> filters_;  // per scale [K,1,N]
  std::vector<Tensor> biases_;   // per scale [N]
  Tensor bottleneck_w_;          // [sum N, out]
  Tensor bottleneck_b_;          // [out]
};

// Standalone single-scale forward for ad-hoc filters (used by tests and
// analysis): conv -> +bias -> relu -> max_pool.
Var single_scale_forward(Tape& tape, Var wave_col, Var filters, Var bias, const ScaleConfig& cfg,
                         double target_ms = kTargetMsPerFrame);

}  // namespace wavebank
