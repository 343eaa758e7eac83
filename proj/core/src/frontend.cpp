#include "wavebank/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wavebank/error.hpp"

namespace wavebank {

using nlohmann::json;

namespace {

// ms -> whole samples at 16 kHz, rejecting fractional results.
int ms_to_samples(double ms, const std::string& field) {
  const double exact = ms * kSampleRate / 1000.0;
  const double rounded = std::round(exact);
  if (rounded < 1.0 || std::abs(exact - rounded) > 1e-9) {
    throw ConfigError(field + ": " + std::to_string(ms) +
                      " ms is not a whole positive sample count at 16 kHz");
  }
  return static_cast<int>(rounded);
}

}  // namespace

int ScaleConfig::window_samples() const { return ms_to_samples(window_ms, "window_ms"); }
int ScaleConfig::stride_samples() const { return ms_to_samples(stride_ms, "stride_ms"); }

void ScaleConfig::validate(double target_ms) const {
  window_samples();
  stride_samples();
  if (n_filters < 1) throw ConfigError("n_filters must be >= 1, got " + std::to_string(n_filters));
  if (window_ms < stride_ms) {
    throw ConfigError("window_ms (" + std::to_string(window_ms) + ") must cover stride_ms (" +
                      std::to_string(stride_ms) + ")");
  }
  pool_stride_for(stride_ms, target_ms);
}

int pool_stride_for(double conv_stride_ms, double target_ms) {
  if (conv_stride_ms <= 0.0 || target_ms <= 0.0) {
    throw ConfigError("strides must be positive");
  }
  const double ratio = target_ms / conv_stride_ms;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9) {
    throw ConfigError("target_ms/conv_stride_ms = " + std::to_string(target_ms) + "/" +
                      std::to_string(conv_stride_ms) + " is not a positive integer");
  }
  return static_cast<int>(rounded);
}

int FrontEndConfig::feature_dim() const {
  if (fft) return 161;
  if (bottleneck_dim) return *bottleneck_dim;
  int total = 0;
  for (const auto& s : scales) total += s.n_filters;
  return total;
}

void FrontEndConfig::validate() const {
  if (target_ms <= 0.0) throw ConfigError("target_ms must be positive");
  if (fft) {
    if (!scales.empty()) throw ConfigError("fft front end takes no scales");
    // spectrogram hop is 10 ms; the pooled result must land on target_ms
    pool_stride_for(10.0, target_ms);
    return;
  }
  if (scales.empty()) throw ConfigError("front end needs at least one scale");
  for (const auto& s : scales) s.validate(target_ms);
  if (bottleneck_dim && *bottleneck_dim < 1) {
    throw ConfigError("bottleneck_dim must be >= 1, got " + std::to_string(*bottleneck_dim));
  }
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace {

FrontEndConfig wav_single(double window_ms, double stride_ms, int n_filters, const std::string& name) {
  FrontEndConfig cfg;
  cfg.scales.push_back(ScaleConfig{name, window_ms, stride_ms, n_filters});
  return cfg;
}

FrontEndConfig three_scale(int high, int mid, int low, std::optional<int> bottleneck) {
  FrontEndConfig cfg;
  cfg.scales.push_back(ScaleConfig{"High", 1.0, 0.25, high});
  cfg.scales.push_back(ScaleConfig{"Mid", 4.0, 1.0, mid});
  cfg.scales.push_back(ScaleConfig{"Low", 40.0, 10.0, low});
  cfg.bottleneck_dim = bottleneck;
  return cfg;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"fft-baseline", "table2-10ms",     "table2-5ms",       "table2-2ms",
          "table2-1ms",   "table2-0.5ms",    "table3-high",      "table3-mid",
          "table3-low",   "table3-multiscale", "table4-161x3",   "table4-wide",
          "table4-wide-800"};
}

FrontEndConfig preset(const std::string& name) {
  FrontEndConfig cfg;
  if (name == "fft-baseline") {
    cfg.fft = true;
  } else if (name == "table2-10ms") {
    cfg = wav_single(20.0, 10.0, 161, "custom");
  } else if (name == "table2-5ms") {
    cfg = wav_single(20.0, 5.0, 161, "custom");
  } else if (name == "table2-2ms") {
    cfg = wav_single(20.0, 2.0, 161, "custom");
  } else if (name == "table2-1ms") {
    cfg = wav_single(20.0, 1.0, 161, "custom");
  } else if (name == "table2-0.5ms") {
    cfg = wav_single(20.0, 0.5, 161, "custom");
  } else if (name == "table3-high") {
    cfg = wav_single(1.0, 0.25, 161, "High");
  } else if (name == "table3-mid") {
    cfg = wav_single(4.0, 1.0, 161, "Mid");
  } else if (name == "table3-low") {
    cfg = wav_single(40.0, 10.0, 161, "Low");
  } else if (name == "table3-multiscale") {
    cfg = three_scale(61, 50, 50, std::nullopt);
  } else if (name == "table4-161x3") {
    cfg = three_scale(161, 161, 161, 161);
  } else if (name == "table4-wide") {
    cfg = three_scale(160, 320, 640, 161);
  } else if (name == "table4-wide-800") {
    cfg = three_scale(160, 320, 640, 800);
  } else {
    std::ostringstream os;
    os << "unknown preset '" << name << "'; valid presets:";
    for (const auto& p : preset_names()) os << ' ' << p;
    throw ConfigError(os.str());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// JSON config
// ---------------------------------------------------------------------------

FrontEndConfig parse_frontend_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("front-end config: invalid JSON: ") + e.what());
  }
  FrontEndConfig cfg;
  try {
    if (j.contains("target_ms")) cfg.target_ms = j.at("target_ms").get<double>();
    if (j.contains("fft")) cfg.fft = j.at("fft").get<bool>();
    if (j.contains("scales")) {
      for (const auto& js : j.at("scales")) {
        ScaleConfig s;
        s.name = js.value("name", "custom");
        if (!js.contains("window_ms")) throw FormatError("front-end config: scale missing field 'window_ms'");
        if (!js.contains("stride_ms")) throw FormatError("front-end config: scale missing field 'stride_ms'");
        if (!js.contains("n_filters")) throw FormatError("front-end config: scale missing field 'n_filters'");
        s.window_ms = js.at("window_ms").get<double>();
        s.stride_ms = js.at("stride_ms").get<double>();
        s.n_filters = js.at("n_filters").get<int>();
        cfg.scales.push_back(std::move(s));
      }
    }
    if (j.contains("bottleneck_dim") && !j.at("bottleneck_dim").is_null()) {
      cfg.bottleneck_dim = j.at("bottleneck_dim").get<int>();
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("front-end config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

FrontEndConfig load_frontend_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open front-end config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_frontend_config(ss.str());
}

std::string frontend_config_to_json(const FrontEndConfig& cfg) {
  json j;
  j["target_ms"] = cfg.target_ms;
  if (cfg.fft) j["fft"] = true;
  j["scales"] = json::array();
  for (const auto& s : cfg.scales) {
    j["scales"].push_back({{"name", s.name},
                           {"window_ms", s.window_ms},
                           {"stride_ms", s.stride_ms},
                           {"n_filters", s.n_filters}});
  }
  if (cfg.bottleneck_dim) j["bottleneck_dim"] = *cfg.bottleneck_dim;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// FrontEnd
// ---------------------------------------------------------------------------

namespace {

Tensor init_uniform(Shape shape, int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

FrontEnd::FrontEnd(FrontEndConfig cfg, ParamStore& store, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (cfg_.fft) return;
  filters_.reserve(cfg_.scales.size());
  biases_.reserve(cfg_.scales.size());
  int total_filters = 0;
  for (size_t i = 0; i < cfg_.scales.size(); ++i) {
    const auto& s = cfg_.scales[i];
    const int K = s.window_samples();
    filters_.push_back(init_uniform({K, 1, s.n_filters}, K, rng));
    biases_.push_back(Tensor({s.n_filters}));
    total_filters += s.n_filters;
  }
  if (cfg_.bottleneck_dim) {
    bottleneck_w_ = init_uniform({total_filters, *cfg_.bottleneck_dim}, total_filters, rng);
    bottleneck_b_ = Tensor({*cfg_.bottleneck_dim});
  }
  // Register after all tensors exist; vectors no longer reallocate.
  for (size_t i = 0; i < cfg_.scales.size(); ++i) {
    const std::string prefix = "frontend/scale" + std::to_string(i);
    store.add(prefix + "/filters", &filters_[i]);
    store.add(prefix + "/bias", &biases_[i]);
  }
  if (cfg_.bottleneck_dim) {
    store.add("frontend/bottleneck/w", &bottleneck_w_);
    store.add("frontend/bottleneck/b", &bottleneck_b_);
  }
}

const Tensor& FrontEnd::filters(int scale) const {
  if (scale < 0 || scale >= static_cast<int>(filters_.size())) {
    throw ConfigError("scale index out of range: " + std::to_string(scale));
  }
  return filters_[static_cast<size_t>(scale)];
}

Var single_scale_forward(Tape& tape, Var wave_col, Var filters, Var bias, const ScaleConfig& cfg,
                         double target_ms) {
  const int pool = pool_stride_for(cfg.stride_ms, target_ms);
  Var conv = tape.conv1d(wave_col, filters, cfg.stride_samples());
  Var act = tape.relu(tape.add_rowvec(conv, bias));
  return tape.max_pool(act, pool).out;
}

Var FrontEnd::fft_forward(Tape& tape, const Waveform& w) const {
  FeatureMap fm = spectrogram(w);
  Tape inner;  // pooling reuses the op kernel; no gradients needed here
  Var feats = inner.leaf(std::move(fm.frames));
  const int pool = pool_stride_for(10.0, cfg_.target_ms);
  Var pooled = inner.max_pool(feats, pool).out;
  return tape.leaf(inner.value(pooled));
}

Var FrontEnd::forward_scale(Tape& tape, const ParamBinding& binding, const Waveform& w,
                            int scale) const {
  if (cfg_.fft) throw ConfigError("fft front end has no scales");
  if (scale < 0 || scale >= n_scales()) {
    throw ConfigError("scale index out of range: " + std::to_string(scale));
  }
  const auto& s = cfg_.scales[static_cast<size_t>(scale)];
  if (w.size() < s.window_samples()) {
    throw ConfigError("waveform too short for scale '" + s.name + "': " + std::to_string(w.size()) +
                      " < " + std::to_string(s.window_samples()) + " samples");
  }
  Var wave = tape.leaf(Tensor({w.size(), 1}, w.samples));
  const std::string prefix = "frontend/scale" + std::to_string(scale);
  return single_scale_forward(tape, wave, binding.var(prefix + "/filters"),
                              binding.var(prefix + "/bias"), s, cfg_.target_ms);
}

Var FrontEnd::forward(Tape& tape, const ParamBinding& binding, const Waveform& w) const {
  w.validate();
  if (cfg_.fft) return fft_forward(tape, w);

  std::vector<Var> per_scale;
  per_scale.reserve(cfg_.scales.size());
  int64_t min_frames = -1;
  for (int i = 0; i < n_scales(); ++i) {
    Var out = forward_scale(tape, binding, w, i);
    const int64_t frames = tape.value(out).dim(0);
    min_frames = min_frames < 0 ? frames : std::min(min_frames, frames);
    per_scale.push_back(out);
  }
  // Unify frame counts by truncating to the shortest scale.
  for (auto& v : per_scale) {
    if (tape.value(v).dim(0) > min_frames) v = tape.slice_rows(v, 0, min_frames);
  }
  Var cat = per_scale.size() == 1 ? per_scale[0] : tape.concat_cols(per_scale);
  if (!cfg_.bottleneck_dim) return cat;
  return tape.add_rowvec(tape.matmul(cat, binding.var("frontend/bottleneck/w")),
                         binding.var("frontend/bottleneck/b"));
}

FeatureMap FrontEnd::extract(const Waveform& w) const {
  Tape tape;
  // Static store copy: bind this front end's own tensors.
  ParamStore store;
  std::vector<Tensor> copies_f = filters_;
  std::vector<Tensor> copies_b = biases_;
  Tensor bw = bottleneck_w_, bb = bottleneck_b_;
  for (size_t i = 0; i < copies_f.size(); ++i) {
    const std::string prefix = "frontend/scale" + std::to_string(i);
    store.add(prefix + "/filters", &copies_f[i]);
    store.add(prefix + "/bias", &copies_b[i]);
  }
  if (cfg_.bottleneck_dim) {
    store.add("frontend/bottleneck/w", &bw);
    store.add("frontend/bottleneck/b", &bb);
  }
  ParamBinding binding(tape, store);
  Var out = forward(tape, binding, w);
  FeatureMap fm;
  fm.frames = tape.value(out);
  fm.ms_per_frame = cfg_.target_ms;
  return fm;
}

}  // namespace wavebank
