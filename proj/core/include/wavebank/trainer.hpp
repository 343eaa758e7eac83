#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wavebank/audio.hpp"
#include "wavebank/checkpoint.hpp"
#include "wavebank/frontend.hpp"
#include "wavebank/model.hpp"

namespace wavebank {

struct TrainConfig {
  double lr = 3e-4;
  double momentum = 0.99;
  int batch_size = 8;
  int epochs = 20;
  double noise_fraction = 0.4;
  double snr_min_db = 0.0;
  double snr_max_db = 15.0;
  double clip_norm = 5.0;

  void validate() const;
};

TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string train_config_to_json(const TrainConfig& cfg);

ModelConfig parse_model_config(const std::string& json_text, std::string alphabet);
ModelConfig load_model_config(const std::filesystem::path& path, std::string alphabet);
std::string model_config_to_json(const ModelConfig& cfg);

// Front end + backend + the input normalization fitted on the training
// corpus. The store references tensors owned by the two stages.
struct Pipeline {
  FrontEndConfig fe_cfg;
  ModelConfig m_cfg;
  NormStats input_norm;
  ParamStore store;
  std::unique_ptr<FrontEnd> frontend;
  std::unique_ptr<AcousticModel> model;

  static std::unique_ptr<Pipeline> create(FrontEndConfig fe_cfg, ModelConfig m_cfg,
                                          const Corpus& norm_corpus, uint64_t seed);

  // Normalized front-end features for one utterance, on the given tape.
  Var features(Tape& tape, const ParamBinding& binding, const Waveform& w) const;

  // Inference logits (running-average batch norm), one utterance.
  Tensor infer_logits(const Waveform& w);
};

struct TrainerState {
  std::vector<Tensor> velocity;  // aligned with trainable store entries
  int epochs_completed = 0;
  int64_t global_step = 0;
};

struct TrainStepRow {
  int epoch = 0;  // 1-based
  int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<TrainStepRow> steps;
  std::vector<double> epoch_mean_loss;
};

// SGD with Nesterov momentum: v <- mu*v - lr*g(theta + mu*v),
// theta <- theta + v. Epoch 1 visits utterances in sortagrad order, later
// epochs in a seeded shuffle; noise_fraction of each epoch's utterances get
// white noise mixed in at a per-utterance seeded SNR. All randomness is
// derived from `seed`, so restarts from a checkpoint replay identically.
TrainResult train(Pipeline& pipe, const Corpus& corpus, const TrainConfig& cfg, uint64_t seed,
                  TrainerState& state,
                  const std::function<void(const TrainStepRow&)>& on_step = nullptr);

struct EvalReport {
  double wer = 0.0;
  double cer = 0.0;
  int64_t n_utts = 0;
};

EvalReport evaluate(Pipeline& pipe, const Corpus& corpus);

// Checkpoints carry weights, optimizer state, normalization stats and
// enough configuration to rebuild the pipeline.
void save_checkpoint(const std::filesystem::path& path, const Pipeline& pipe,
                     const TrainerState& state, uint64_t seed, const TrainConfig& cfg);
struct LoadedCheckpoint {
  std::unique_ptr<Pipeline> pipeline;
  TrainerState state;
  uint64_t seed = 0;
  TrainConfig train_cfg;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wavebank
