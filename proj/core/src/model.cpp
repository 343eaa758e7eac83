#include "wavebank/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "wavebank/ctc.hpp"
#include "wavebank/error.hpp"

namespace wavebank {

void ModelConfig::validate() const {
  if (hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
  if (n_rnn_layers < 1) throw ConfigError("n_rnn_layers must be >= 1");
  if (conv_window < 1 || conv_window % 2 == 0) {
    throw ConfigError("conv_window must be odd, got " + std::to_string(conv_window));
  }
  if (conv_stride < 1) throw ConfigError("conv_stride must be >= 1");
  if (alphabet.empty()) throw ConfigError("alphabet must not be empty");
  std::set<char> seen(alphabet.begin(), alphabet.end());
  if (seen.size() != alphabet.size()) throw ConfigError("alphabet contains duplicate characters");
}

namespace {

Tensor init_uniform(Shape shape, int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

AcousticModel::AcousticModel(ModelConfig cfg, int input_features, ParamStore& store, Rng& rng)
    : cfg_(std::move(cfg)), input_features_(input_features) {
  cfg_.validate();
  if (input_features < 1) throw ConfigError("input_features must be >= 1");

  const int H = cfg_.hidden_size;
  const int F = input_features_;
  const int L1 = logit_dim();

  // Creation order defines init draw order and checkpoint layout.
  bns_.reserve(static_cast<size_t>(cfg_.n_rnn_layers) + 2);
  auto make_bn = [&](const std::string& prefix, int64_t dim) {
    BnState bn;
    bn.prefix = prefix;
    bn.gamma = Tensor::filled({dim}, 1.0);
    bn.beta = Tensor({dim});
    bn.running_mean = Tensor({dim});
    bn.running_var = Tensor::filled({dim}, 1.0);
    bns_.push_back(std::move(bn));
  };

  make_bn("model/bn_in", F);
  conv_w_ = init_uniform({cfg_.conv_window, F, H}, static_cast<int64_t>(cfg_.conv_window) * F, rng);
  make_bn("model/bn_conv", H);
  rnns_.reserve(static_cast<size_t>(cfg_.n_rnn_layers));
  for (int l = 0; l < cfg_.n_rnn_layers; ++l) {
    const int in_dim = l == 0 ? H : 2 * H;
    RnnLayer r;
    r.wx_f = init_uniform({in_dim, H}, in_dim, rng);
    r.wh_f = init_uniform({H, H}, H, rng);
    r.b_f = Tensor({H});
    r.wx_b = init_uniform({in_dim, H}, in_dim, rng);
    r.wh_b = init_uniform({H, H}, H, rng);
    r.b_b = Tensor({H});
    rnns_.push_back(std::move(r));
    make_bn("model/bn_rnn" + std::to_string(l), 2 * H);
  }
  fc_w_ = init_uniform({2 * H, L1}, 2 * H, rng);
  fc_b_ = Tensor({L1});

  // Registration after all allocations; addresses are stable from here on.
  auto reg_bn = [&](BnState& bn) {
    store.add(bn.prefix + "/gamma", &bn.gamma);
    store.add(bn.prefix + "/beta", &bn.beta);
    store.add(bn.prefix + "/running_mean", &bn.running_mean, /*trainable=*/false);
    store.add(bn.prefix + "/running_var", &bn.running_var, /*trainable=*/false);
  };
  reg_bn(bns_[0]);
  store.add("model/conv/w", &conv_w_);
  reg_bn(bns_[1]);
  for (int l = 0; l < cfg_.n_rnn_layers; ++l) {
    auto& r = rnns_[static_cast<size_t>(l)];
    const std::string p = "model/rnn" + std::to_string(l);
    store.add(p + "/wx_f", &r.wx_f);
    store.add(p + "/wh_f", &r.wh_f);
    store.add(p + "/b_f", &r.b_f);
    store.add(p + "/wx_b", &r.wx_b);
    store.add(p + "/wh_b", &r.wh_b);
    store.add(p + "/b_b", &r.b_b);
    reg_bn(bns_[static_cast<size_t>(l) + 2]);
  }
  store.add("model/fc/w", &fc_w_);
  store.add("model/fc/b", &fc_b_);
}

Var AcousticModel::apply_bn(Tape& tape, const ParamBinding& binding, BnState& bn, Var rows,
                            bool training) {
  if (training) {
    BatchNormResult r = tape.batch_norm(rows, binding.var(bn.prefix + "/gamma"),
                                        binding.var(bn.prefix + "/beta"), kBnEps);
    for (int64_t j = 0; j < bn.running_mean.size(); ++j) {
      bn.running_mean[j] = kBnMomentum * bn.running_mean[j] + (1.0 - kBnMomentum) * r.batch_mean[j];
      bn.running_var[j] = kBnMomentum * bn.running_var[j] + (1.0 - kBnMomentum) * r.batch_var[j];
    }
    return r.out;
  }
  // Inference: y = gamma * (x - rm) / sqrt(rv + eps) + beta, folded into a
  // per-feature affine map.
  const int64_t F = bn.running_mean.size();
  Tensor scale({F}), shift({F});
  const Tensor& gamma = bn.gamma;
  const Tensor& beta = bn.beta;
  for (int64_t j = 0; j < F; ++j) {
    scale[j] = gamma[j] / std::sqrt(bn.running_var[j] + kBnEps);
    shift[j] = beta[j] - scale[j] * bn.running_mean[j];
  }
  return tape.add_rowvec(tape.mul_rowvec(rows, tape.leaf(std::move(scale))),
                         tape.leaf(std::move(shift)));
}

std::vector<Var> AcousticModel::forward(Tape& tape, const ParamBinding& binding,
                                        const std::vector<Var>& features, bool training) {
  if (features.empty()) throw ConfigError("forward: empty batch");
  std::vector<int64_t> lengths;
  lengths.reserve(features.size());
  for (Var f : features) {
    const Tensor& t = tape.value(f);
    if (t.rank() != 2 || t.dim(1) != input_features_) {
      throw ShapeError("forward: expected [T," + std::to_string(input_features_) + "], got " +
                       t.shape_str());
    }
    lengths.push_back(t.dim(0));
  }

  auto concat_batch = [&](const std::vector<Var>& parts) {
    return parts.size() == 1 ? parts[0] : tape.concat_rows(parts);
  };
  auto split_batch = [&](Var rows, const std::vector<int64_t>& lens) {
    std::vector<Var> parts;
    parts.reserve(lens.size());
    int64_t off = 0;
    for (int64_t n : lens) {
      parts.push_back(lens.size() == 1 ? rows : tape.slice_rows(rows, off, n));
      off += n;
    }
    return parts;
  };

  // Input batch norm over batch x time jointly.
  Var x = concat_batch(features);
  x = apply_bn(tape, binding, bns_[0], x, training);
  std::vector<Var> per_utt = split_batch(x, lengths);

  // Temporal convolution per utterance (valid, so frames shrink by
  // conv_window-1).
  Var conv_w = binding.var("model/conv/w");
  std::vector<int64_t> conv_lengths;
  conv_lengths.reserve(per_utt.size());
  for (auto& u : per_utt) {
    const int64_t t_in = tape.value(u).dim(0);
    if (t_in < cfg_.conv_window) {
      throw ShapeError("forward: utterance too short for conv window (" + std::to_string(t_in) +
                       " < " + std::to_string(cfg_.conv_window) + " frames)");
    }
    u = tape.conv1d(u, conv_w, cfg_.conv_stride);
    conv_lengths.push_back(tape.value(u).dim(0));
  }
  x = apply_bn(tape, binding, bns_[1], concat_batch(per_utt), training);
  x = tape.relu(x);
  per_utt = split_batch(x, conv_lengths);

  for (int l = 0; l < cfg_.n_rnn_layers; ++l) {
    const std::string p = "model/rnn" + std::to_string(l);
    BiRnnVars params{binding.var(p + "/wx_f"), binding.var(p + "/wh_f"), binding.var(p + "/b_f"),
                     binding.var(p + "/wx_b"), binding.var(p + "/wh_b"), binding.var(p + "/b_b")};
    for (auto& u : per_utt) u = tape.bidirectional_rnn(u, params);
    x = apply_bn(tape, binding, bns_[static_cast<size_t>(l) + 2], concat_batch(per_utt), training);
    per_utt = split_batch(x, conv_lengths);
  }

  Var fc_w = binding.var("model/fc/w");
  Var fc_b = binding.var("model/fc/b");
  Var logits_all = tape.add_rowvec(tape.matmul(concat_batch(per_utt), fc_w), fc_b);
  return split_batch(logits_all, conv_lengths);
}

int64_t AcousticModel::parameter_count() const {
  const int64_t H = cfg_.hidden_size;
  const int64_t F = input_features_;
  const int64_t L1 = logit_dim();
  int64_t n = 2 * F;                                // input bn
  n += static_cast<int64_t>(cfg_.conv_window) * F * H;  // conv (bias absorbed by bn)
  n += 2 * H;                                       // post-conv bn
  for (int l = 0; l < cfg_.n_rnn_layers; ++l) {
    const int64_t in_dim = l == 0 ? H : 2 * H;
    n += 2 * (in_dim * H + H * H + H);              // both directions
    n += 2 * (2 * H);                               // bn gamma/beta
  }
  n += 2 * H * L1 + L1;                             // fully connected
  return n;
}

std::vector<int> AcousticModel::label_ids(const std::string& transcript) const {
  std::vector<int> ids;
  ids.reserve(transcript.size());
  for (char c : transcript) {
    const size_t pos = cfg_.alphabet.find(c);
    if (pos == std::string::npos) {
      throw ConfigError(std::string("character '") + c + "' not in model alphabet '" +
                        cfg_.alphabet + "'");
    }
    ids.push_back(static_cast<int>(pos) + 1);
  }
  return ids;
}

std::string AcousticModel::decode_ids(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id <= kBlankId || id > static_cast<int>(cfg_.alphabet.size())) {
      throw ConfigError("label id out of range: " + std::to_string(id));
    }
    out.push_back(cfg_.alphabet[static_cast<size_t>(id - 1)]);
  }
  return out;
}

std::string AcousticModel::greedy_decode(const Tensor& logits) const {
  if (logits.rank() != 2 || logits.dim(1) != logit_dim()) {
    throw ShapeError("greedy_decode: logits must be [T," + std::to_string(logit_dim()) + "]");
  }
  const int64_t T = logits.dim(0), C = logits.dim(1);
  std::string out;
  int prev = kBlankId;
  for (int64_t t = 0; t < T; ++t) {
    int best = 0;
    for (int64_t c = 1; c < C; ++c) {
      if (logits.at(t, c) > logits.at(t, best)) best = static_cast<int>(c);
    }
    if (best != kBlankId && best != prev) {
      out.push_back(cfg_.alphabet[static_cast<size_t>(best - 1)]);
    }
    prev = best;
  }
  return out;
}

}  // namespace wavebank
