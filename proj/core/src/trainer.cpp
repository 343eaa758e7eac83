#include "wavebank/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wavebank/ctc.hpp"
#include "wavebank/error.hpp"
#include "wavebank/metrics.hpp"

namespace wavebank {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (lr < 0.0) throw ConfigError("lr must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (noise_fraction < 0.0 || noise_fraction > 1.0) throw ConfigError("noise_fraction must be in [0,1]");
  if (snr_max_db < snr_min_db) throw ConfigError("snr range is inverted");
  if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
}

TrainConfig parse_train_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("train config: invalid JSON: ") + e.what());
  }
  TrainConfig cfg;
  try {
    cfg.lr = j.value("lr", cfg.lr);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.noise_fraction = j.value("noise_fraction", cfg.noise_fraction);
    if (j.contains("snr_range_db")) {
      const auto range = j.at("snr_range_db").get<std::vector<double>>();
      if (range.size() != 2) throw FormatError("train config: snr_range_db must be [min,max]");
      cfg.snr_min_db = range[0];
      cfg.snr_max_db = range[1];
    }
    cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
  } catch (const json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open train config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["lr"] = cfg.lr;
  j["momentum"] = cfg.momentum;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["noise_fraction"] = cfg.noise_fraction;
  j["snr_range_db"] = {cfg.snr_min_db, cfg.snr_max_db};
  j["clip_norm"] = cfg.clip_norm;
  return j.dump(2);
}

ModelConfig parse_model_config(const std::string& json_text, std::string alphabet) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("model config: invalid JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg.hidden_size = j.value("hidden_size", cfg.hidden_size);
    cfg.n_rnn_layers = j.value("n_rnn_layers", cfg.n_rnn_layers);
    cfg.conv_window = j.value("conv_window", cfg.conv_window);
    cfg.conv_stride = j.value("conv_stride", cfg.conv_stride);
    if (j.contains("alphabet")) alphabet = j.at("alphabet").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  cfg.alphabet = std::move(alphabet);
  cfg.validate();
  return cfg;
}

ModelConfig load_model_config(const std::filesystem::path& path, std::string alphabet) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model_config(ss.str(), std::move(alphabet));
}

std::string model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["hidden_size"] = cfg.hidden_size;
  j["n_rnn_layers"] = cfg.n_rnn_layers;
  j["conv_window"] = cfg.conv_window;
  j["conv_stride"] = cfg.conv_stride;
  j["alphabet"] = cfg.alphabet;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

std::unique_ptr<Pipeline> Pipeline::create(FrontEndConfig fe_cfg, ModelConfig m_cfg,
                                           const Corpus& norm_corpus, uint64_t seed) {
  fe_cfg.validate();
  m_cfg.validate();
  auto pipe = std::make_unique<Pipeline>();
  pipe->fe_cfg = fe_cfg;
  pipe->m_cfg = m_cfg;

  if (norm_corpus.utterances.empty()) throw ConfigError("cannot fit normalization on empty corpus");
  if (fe_cfg.fft) {
    std::vector<Tensor> mats;
    mats.reserve(norm_corpus.utterances.size());
    for (const auto& utt : norm_corpus.utterances) mats.push_back(spectrogram(utt.waveform).frames);
    std::vector<const Tensor*> ptrs;
    ptrs.reserve(mats.size());
    for (const auto& m : mats) ptrs.push_back(&m);
    pipe->input_norm = fit_norm_stats(ptrs);
  } else {
    std::vector<const Waveform*> waves;
    waves.reserve(norm_corpus.utterances.size());
    for (const auto& utt : norm_corpus.utterances) waves.push_back(&utt.waveform);
    pipe->input_norm = fit_norm_stats_waveforms(waves);
  }

  Rng rng = Rng::derive(seed, {0x696e6974u});
  pipe->frontend = std::make_unique<FrontEnd>(fe_cfg, pipe->store, rng);
  pipe->model = std::make_unique<AcousticModel>(m_cfg, fe_cfg.feature_dim(), pipe->store, rng);
  return pipe;
}

Var Pipeline::features(Tape& tape, const ParamBinding& binding, const Waveform& w) const {
  if (fe_cfg.fft) {
    // Normalization stats are fitted on unpooled spectrogram frames; since
    // standardization is monotone per feature it commutes with max-pooling,
    // so applying it after the pooled front end is equivalent.
    Tape inner;
    ParamBinding inner_binding(inner, store);
    Var pooled = frontend->forward(inner, inner_binding, w);
    return tape.leaf(apply_norm(inner.value(pooled), input_norm));
  }
  return frontend->forward(tape, binding, apply_norm(w, input_norm));
}

Tensor Pipeline::infer_logits(const Waveform& w) {
  Tape tape;
  ParamBinding binding(tape, store);
  Var feats = features(tape, binding, w);
  std::vector<Var> logits = model->forward(tape, binding, {feats}, /*training=*/false);
  return tape.value(logits[0]);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

std::vector<size_t> epoch_order(const Corpus& corpus, uint64_t seed, int epoch) {
  if (epoch == 0) return sortagrad_order(corpus);
  std::vector<size_t> order(corpus.utterances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::derive(seed, {0x73687566u, static_cast<uint64_t>(epoch)});
  // Fisher-Yates
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

TrainResult train(Pipeline& pipe, const Corpus& corpus, const TrainConfig& cfg, uint64_t seed,
                  TrainerState& state, const std::function<void(const TrainStepRow&)>& on_step) {
  cfg.validate();
  if (corpus.utterances.empty()) throw ConfigError("train: empty corpus");
  for (const auto& utt : corpus.utterances) pipe.model->label_ids(utt.transcript);  // alphabet check

  std::vector<ParamStore::Entry> trainable;
  for (const auto& e : pipe.store.entries()) {
    if (e.trainable) trainable.push_back(e);
  }
  if (state.velocity.empty()) {
    for (const auto& e : trainable) state.velocity.push_back(Tensor::zeros(e.value->shape()));
  } else if (state.velocity.size() != trainable.size()) {
    throw ConfigError("trainer state does not match the parameter set");
  }

  // Shared noise pool, long enough to crop against any utterance.
  Waveform noise;
  if (cfg.noise_fraction > 0.0) {
    int64_t max_len = 0;
    for (const auto& utt : corpus.utterances) max_len = std::max(max_len, utt.waveform.size());
    Rng noise_rng = Rng::derive(seed, {0x6e6f6973u});
    noise = white_noise(max_len + kSampleRate, noise_rng);
  }

  TrainResult result;
  const auto t_start = std::chrono::steady_clock::now();

  for (int epoch = state.epochs_completed; epoch < cfg.epochs; ++epoch) {
    const std::vector<size_t> order = epoch_order(corpus, seed, epoch);
    Rng aug_rng = Rng::derive(seed, {0x617567u, static_cast<uint64_t>(epoch)});

    // Materialize this epoch's (possibly augmented) waveforms in visit
    // order; augmentation draws are per utterance, independent of batching.
    std::vector<const Utterance*> utts;
    std::vector<Waveform> waves;
    utts.reserve(order.size());
    waves.reserve(order.size());
    for (size_t idx : order) {
      const Utterance& utt = corpus.utterances[idx];
      utts.push_back(&utt);
      const bool augment = aug_rng.uniform() < cfg.noise_fraction;
      if (augment) {
        const double snr = aug_rng.uniform(cfg.snr_min_db, cfg.snr_max_db);
        waves.push_back(mix_noise(utt.waveform, noise, snr, aug_rng));
      } else {
        waves.push_back(utt.waveform);
      }
    }

    double epoch_loss_sum = 0.0;
    int64_t epoch_utts = 0;
    for (size_t begin = 0; begin < utts.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(utts.size(), begin + static_cast<size_t>(cfg.batch_size));
      const int64_t batch_n = static_cast<int64_t>(end - begin);

      // Nesterov lookahead: evaluate the gradient at theta + mu*v.
      std::vector<Tensor> saved;
      saved.reserve(trainable.size());
      for (size_t i = 0; i < trainable.size(); ++i) {
        saved.push_back(*trainable[i].value);
        Tensor& theta = *trainable[i].value;
        const Tensor& v = state.velocity[i];
        for (int64_t k = 0; k < theta.size(); ++k) theta[k] += cfg.momentum * v[k];
      }

      Tape tape;
      ParamBinding binding(tape, pipe.store);
      double loss_value;
      Var loss;
      try {
        std::vector<Var> feats;
        feats.reserve(static_cast<size_t>(batch_n));
        for (size_t u = begin; u < end; ++u) {
          feats.push_back(pipe.features(tape, binding, waves[u]));
        }
        std::vector<Var> logits = pipe.model->forward(tape, binding, feats, /*training=*/true);
        for (size_t u = begin; u < end; ++u) {
          Var l = ctc_loss(tape, logits[u - begin], pipe.model->label_ids(utts[u]->transcript));
          loss = (u == begin) ? l : tape.add(loss, l);
        }
        loss = tape.scale(loss, 1.0 / static_cast<double>(batch_n));
        loss_value = tape.value(loss)[0];
      } catch (const NumericError& e) {
        throw NumericError("training diverged at step " + std::to_string(state.global_step + 1) +
                           ": " + e.what());
      }
      if (!std::isfinite(loss_value)) {
        throw NumericError("training diverged: non-finite loss at step " +
                           std::to_string(state.global_step + 1));
      }
      tape.backward(loss);

      // Restore, clip, apply the update.
      std::vector<Tensor> grads;
      grads.reserve(trainable.size());
      double sq_norm = 0.0;
      for (size_t i = 0; i < trainable.size(); ++i) {
        grads.push_back(tape.grad(binding.var(trainable[i].name)));
        for (int64_t k = 0; k < grads.back().size(); ++k) sq_norm += grads.back()[k] * grads.back()[k];
      }
      const double norm = std::sqrt(sq_norm);
      const double rescale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
      for (size_t i = 0; i < trainable.size(); ++i) {
        Tensor& theta = *trainable[i].value;
        Tensor& v = state.velocity[i];
        const Tensor& g = grads[i];
        theta = saved[i];
        for (int64_t k = 0; k < theta.size(); ++k) {
          v[k] = cfg.momentum * v[k] - cfg.lr * rescale * g[k];
          theta[k] += v[k];
        }
      }

      ++state.global_step;
      epoch_loss_sum += loss_value * static_cast<double>(batch_n);
      epoch_utts += batch_n;
      TrainStepRow row;
      row.epoch = epoch + 1;
      row.step = state.global_step;
      row.loss = loss_value;
      row.lr = cfg.lr;
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
      result.steps.push_back(row);
      if (on_step) on_step(row);
    }
    state.epochs_completed = epoch + 1;
    result.epoch_mean_loss.push_back(epoch_loss_sum / static_cast<double>(epoch_utts));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalReport evaluate(Pipeline& pipe, const Corpus& corpus) {
  if (corpus.utterances.empty()) throw ConfigError("evaluate: empty corpus");
  int64_t word_err = 0, word_ref = 0, char_err = 0, char_ref = 0;
  for (const auto& utt : corpus.utterances) {
    pipe.model->label_ids(utt.transcript);  // alphabet check
    const Tensor logits = pipe.infer_logits(utt.waveform);
    const std::string hyp = pipe.model->greedy_decode(logits);
    const auto ref_words = split_words(utt.transcript);
    word_err += levenshtein(ref_words, split_words(hyp));
    word_ref += static_cast<int64_t>(ref_words.size());
    char_err += levenshtein(utt.transcript, hyp);
    char_ref += static_cast<int64_t>(utt.transcript.size());
  }
  EvalReport report;
  report.n_utts = static_cast<int64_t>(corpus.utterances.size());
  report.wer = static_cast<double>(word_err) / static_cast<double>(word_ref);
  report.cer = static_cast<double>(char_err) / static_cast<double>(char_ref);
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const Pipeline& pipe,
                     const TrainerState& state, uint64_t seed, const TrainConfig& cfg) {
  ArrayFile file;
  file.put_string("meta/frontend_json", frontend_config_to_json(pipe.fe_cfg));
  file.put_string("meta/model_json", model_config_to_json(pipe.m_cfg));
  file.put_string("meta/train_json", train_config_to_json(cfg));
  file.put_u64("meta/seed", {seed});
  file.put("meta/progress", Tensor({2}, {static_cast<double>(state.epochs_completed),
                                         static_cast<double>(state.global_step)}));
  file.put("norm/mean", pipe.input_norm.mean);
  file.put("norm/std", pipe.input_norm.stddev);
  for (const auto& e : pipe.store.entries()) file.put(e.name, *e.value);
  size_t vi = 0;
  for (const auto& e : pipe.store.entries()) {
    if (!e.trainable) continue;
    if (vi < state.velocity.size()) file.put("opt/v/" + e.name, state.velocity[vi]);
    ++vi;
  }
  file.save(path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const ArrayFile file = ArrayFile::load(path);
  LoadedCheckpoint out;
  const FrontEndConfig fe_cfg = parse_frontend_config(file.get_string("meta/frontend_json"));
  const ModelConfig m_cfg = parse_model_config(file.get_string("meta/model_json"), "");
  out.train_cfg = parse_train_config(file.get_string("meta/train_json"));
  const auto seed_words = file.get_u64("meta/seed");
  out.seed = seed_words.empty() ? 0 : seed_words[0];

  auto pipe = std::make_unique<Pipeline>();
  pipe->fe_cfg = fe_cfg;
  pipe->m_cfg = m_cfg;
  pipe->input_norm.mean = file.get("norm/mean");
  pipe->input_norm.stddev = file.get("norm/std");
  Rng rng(0);  // placeholder init, overwritten below
  pipe->frontend = std::make_unique<FrontEnd>(fe_cfg, pipe->store, rng);
  pipe->model = std::make_unique<AcousticModel>(m_cfg, fe_cfg.feature_dim(), pipe->store, rng);
  for (const auto& e : pipe->store.entries()) {
    const Tensor& stored = file.get(e.name);
    if (!stored.same_shape(*e.value)) {
      throw FormatError("checkpoint: shape mismatch for '" + e.name + "': file " +
                        stored.shape_str() + " vs model " + e.value->shape_str());
    }
    *e.value = stored;
  }

  const Tensor& progress = file.get("meta/progress");
  out.state.epochs_completed = static_cast<int>(progress[0]);
  out.state.global_step = static_cast<int64_t>(progress[1]);
  for (const auto& e : pipe->store.entries()) {
    if (!e.trainable) continue;
    out.state.velocity.push_back(file.get("opt/v/" + e.name));
  }
  out.pipeline = std::move(pipe);
  return out;
}

}  // namespace wavebank
