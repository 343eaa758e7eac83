// wavebank: corpus generation, feature extraction, CTC training, evaluation
// and learned-filter analysis behind one binary.
//
// Exit codes: 0 success, 2 configuration/input error, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wavebank/analysis.hpp"
#include "wavebank/audio.hpp"
#include "wavebank/error.hpp"
#include "wavebank/frontend.hpp"
#include "wavebank/manifest.hpp"
#include "wavebank/metrics.hpp"
#include "wavebank/parallel.hpp"
#include "wavebank/trainer.hpp"

namespace fs = std::filesystem;
using namespace wavebank;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Creates out_dir itself but requires its parent to exist already.
void ensure_out_dir(const fs::path& dir) {
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  if (!fs::exists(parent)) {
    throw IoError("parent directory does not exist: " + parent.string());
  }
  std::error_code ec;
  fs::create_directory(dir, ec);
  if (ec && !fs::is_directory(dir)) {
    throw IoError("cannot create output directory: " + dir.string());
  }
}

std::map<std::string, std::string> tool_versions() {
  return {{"wavebank", std::string(kVersion)},
          {"checkpoint_format", "1"},
          {"manifest_format", "1"}};
}

struct GlobalOpts {
  uint64_t seed = 1234;
  int threads = 1;
  std::string config;  // per-command primary config file
};

// --- gen-data ---------------------------------------------------------------

SynthConfig parse_synth_config(const std::string& json_text);

int cmd_gen_data(const GlobalOpts& g, const std::string& out_dir) {
  SynthConfig cfg;
  std::string cfg_text = "{}";
  if (!g.config.empty()) cfg_text = read_file(g.config);
  cfg = parse_synth_config(cfg_text);
  cfg.seed = g.seed;

  ensure_out_dir(out_dir);
  const Corpus corpus = synth_corpus(cfg);
  write_corpus(corpus, out_dir);

  RunManifest m;
  m.command = "gen-data";
  m.seed = g.seed;
  m.config_hash = hex64(fnv1a64(cfg_text + "|seed=" + std::to_string(g.seed)));
  m.artifacts.push_back("manifest.tsv");
  for (const auto& utt : corpus.utterances) m.artifacts.push_back("wavs/" + utt.id + ".wav");
  m.versions = tool_versions();
  write_run_manifest(out_dir, m);

  std::cout << "wrote " << corpus.utterances.size() << " utterances to " << out_dir << "\n";
  return 0;
}

SynthConfig parse_synth_config(const std::string& json_text) {
  // Reuses the train-config parser idiom; kept local since the schema is a
  // flat quadruple.
  SynthConfig cfg;
  if (json_text.empty()) return cfg;
  try {
    auto j = nlohmann::json::parse(json_text);
    cfg.n_utts = j.value("n_utts", cfg.n_utts);
    cfg.alphabet_size = j.value("alphabet_size", cfg.alphabet_size);
    cfg.min_chars = j.value("min_chars", cfg.min_chars);
    cfg.max_chars = j.value("max_chars", cfg.max_chars);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("gen-data config: ") + e.what());
  }
  return cfg;
}

// --- extract ----------------------------------------------------------------

FrontEndConfig resolve_frontend(const std::string& preset_name, const std::string& config_path) {
  if (!preset_name.empty() && !config_path.empty()) {
    throw ConfigError("give either --preset or a front-end config file, not both");
  }
  if (!preset_name.empty()) return preset(preset_name);
  if (!config_path.empty()) return load_frontend_config(config_path);
  throw ConfigError("a front end is required: --preset NAME or --config FILE");
}

int cmd_extract(const GlobalOpts& g, const std::string& preset_name, const std::string& wav_path,
                const std::string& output) {
  const FrontEndConfig fe_cfg = resolve_frontend(preset_name, g.config);
  ParamStore store;
  Rng rng = Rng::derive(g.seed, {0x696e6974u});
  FrontEnd frontend(fe_cfg, store, rng);
  const Waveform wave = read_wav(wav_path);
  const FeatureMap fm = frontend.extract(wave);

  std::ofstream file_out;
  std::ostream* out = &std::cout;
  if (!output.empty()) {
    file_out.open(output);
    if (!file_out) throw IoError("cannot create output file: " + output);
    out = &file_out;
  }
  const int64_t T = fm.frames.dim(0), F = fm.frames.dim(1);
  *out << "# ms_per_frame=" << fm.ms_per_frame << " features=" << F << "\n";
  for (int64_t t = 0; t < T; ++t) {
    for (int64_t f = 0; f < F; ++f) {
      if (f) *out << ',';
      *out << full(fm.frames.at(t, f));
    }
    *out << '\n';
  }
  return 0;
}

// --- train ------------------------------------------------------------------

std::string derive_alphabet(const Corpus& corpus) {
  std::set<char> chars;
  for (const auto& utt : corpus.utterances) chars.insert(utt.transcript.begin(), utt.transcript.end());
  return std::string(chars.begin(), chars.end());
}

int cmd_train(const GlobalOpts& g, const std::string& corpus_dir, const std::string& out_dir,
              const std::string& preset_name, const std::string& frontend_config,
              const std::string& model_config, const std::string& train_config, bool resume) {
  const Corpus corpus = read_corpus(corpus_dir);
  ensure_out_dir(out_dir);
  const fs::path out(out_dir);
  const fs::path latest = out / "ckpt_latest.bin";

  std::string fe_source = !frontend_config.empty() ? frontend_config : g.config;
  TrainConfig tc;
  if (!train_config.empty()) tc = load_train_config(train_config);

  std::unique_ptr<Pipeline> pipe;
  TrainerState state;
  if (resume) {
    if (!fs::exists(latest)) throw ConfigError("--resume: no checkpoint at " + latest.string());
    LoadedCheckpoint loaded = load_checkpoint(latest);
    // The epoch target may grow between sessions; everything else must match.
    TrainConfig a = loaded.train_cfg, b = tc;
    a.epochs = b.epochs = 0;
    if (train_config_to_json(a) != train_config_to_json(b)) {
      throw ConfigError("--resume: train config differs from the checkpointed run");
    }
    if (loaded.seed != g.seed) {
      throw ConfigError("--resume: seed differs from the checkpointed run");
    }
    pipe = std::move(loaded.pipeline);
    state = std::move(loaded.state);
  } else {
    const FrontEndConfig fe_cfg = resolve_frontend(preset_name, fe_source);
    ModelConfig mc;
    const std::string alphabet = derive_alphabet(corpus);
    if (!model_config.empty()) {
      mc = load_model_config(model_config, alphabet);
    } else {
      mc.alphabet = alphabet;
    }
    pipe = Pipeline::create(fe_cfg, mc, corpus, g.seed);
    save_checkpoint(out / "ckpt_init.bin", *pipe, state, g.seed, tc);
  }

  std::ofstream log(out / "train_log.csv", resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot open training log: " + (out / "train_log.csv").string());
  if (!resume) log << "epoch,step,loss,lr,wall_ms\n";

  TrainResult result;
  try {
    result = train(*pipe, corpus, tc, g.seed, state, [&](const TrainStepRow& row) {
      log << row.epoch << ',' << row.step << ',' << full(row.loss) << ',' << full(row.lr) << ','
          << full(row.wall_ms) << '\n';
    });
  } catch (const NumericError&) {
    log.flush();
    throw;
  }
  log.flush();

  char name[32];
  std::snprintf(name, sizeof name, "ckpt_epoch_%04d.bin", state.epochs_completed);
  save_checkpoint(out / name, *pipe, state, g.seed, tc);
  save_checkpoint(latest, *pipe, state, g.seed, tc);

  RunManifest m;
  m.command = "train";
  m.seed = g.seed;
  m.config_hash = hex64(fnv1a64(frontend_config_to_json(pipe->fe_cfg) + "|" +
                                model_config_to_json(pipe->m_cfg) + "|" + train_config_to_json(tc) +
                                "|seed=" + std::to_string(g.seed)));
  m.artifacts = {"train_log.csv", "ckpt_latest.bin", name};
  m.versions = tool_versions();
  write_run_manifest(out, m);

  for (size_t e = 0; e < result.epoch_mean_loss.size(); ++e) {
    std::cout << "epoch " << (state.epochs_completed - result.epoch_mean_loss.size() + e + 1)
              << " mean_loss " << full(result.epoch_mean_loss[e]) << "\n";
  }
  std::cout << "trained " << state.epochs_completed << " epochs, " << state.global_step
            << " steps; checkpoint " << (out / name).string() << "\n";
  return 0;
}

// --- eval -------------------------------------------------------------------

int cmd_eval(const std::string& checkpoint, const std::string& corpus_dir) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  const Corpus corpus = read_corpus(corpus_dir);
  const EvalReport report = evaluate(*loaded.pipeline, corpus);
  std::cout << "utterances: " << report.n_utts << "\n";
  std::cout << "WER: " << full(report.wer) << "\n";
  std::cout << "CER: " << full(report.cer) << "\n";
  return 0;
}

// --- analyze ----------------------------------------------------------------

int cmd_analyze(const GlobalOpts& g, const std::string& checkpoint, const std::string& preset_name,
                const std::string& out_dir) {
  ensure_out_dir(out_dir);
  std::unique_ptr<Pipeline> pipe;
  std::unique_ptr<FrontEnd> standalone;
  ParamStore standalone_store;
  const FrontEnd* frontend = nullptr;
  std::string hash_src;
  if (!checkpoint.empty()) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint);
    pipe = std::move(loaded.pipeline);
    frontend = pipe->frontend.get();
    hash_src = "checkpoint=" + checkpoint;
  } else {
    const FrontEndConfig fe_cfg = resolve_frontend(preset_name, g.config);
    Rng rng = Rng::derive(g.seed, {0x696e6974u});
    standalone = std::make_unique<FrontEnd>(fe_cfg, standalone_store, rng);
    frontend = standalone.get();
    hash_src = frontend_config_to_json(fe_cfg) + "|seed=" + std::to_string(g.seed);
  }

  const auto summaries = summarize_frontend(*frontend);
  const fs::path out(out_dir);
  export_centroids(summaries, out / "centroids.csv");
  const auto filter_files = export_filters(*frontend, out);

  RunManifest m;
  m.command = "analyze";
  m.seed = g.seed;
  m.config_hash = hex64(fnv1a64(hash_src));
  m.artifacts.push_back("centroids.csv");
  for (const auto& f : filter_files) m.artifacts.push_back(f.filename().string());
  m.versions = tool_versions();
  write_run_manifest(out, m);

  for (const auto& s : summaries) {
    std::cout << s.bank_name << " n_filters " << s.n_filters << " mean_centroid_hz "
              << full(s.bank_mean_hz) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learnable multiscale waveform front ends with a CTC backend"};
  app.fallthrough();
  GlobalOpts g;
  app.add_option("--seed", g.seed, "master seed for all randomness");
  app.add_option("--threads", g.threads, "worker threads (1 = fully serial)");
  app.add_option("--config", g.config, "primary config file for the subcommand");

  auto* gen = app.add_subcommand("gen-data", "synthesize a deterministic tone corpus");
  std::string gen_out;
  gen->add_option("--out", gen_out, "output directory")->required();

  auto* extract = app.add_subcommand("extract", "run a front end over one WAV, emit CSV");
  std::string ex_preset, ex_output, ex_wav;
  extract->add_option("--preset", ex_preset, "builtin front-end preset");
  extract->add_option("--output", ex_output, "write CSV here instead of stdout");
  extract->add_option("wav", ex_wav, "input WAV (PCM16 mono 16 kHz)")->required();

  auto* train_cmd = app.add_subcommand("train", "train front end + backend with CTC");
  std::string tr_corpus, tr_out, tr_preset, tr_fec, tr_mc, tr_tc;
  bool tr_resume = false;
  train_cmd->add_option("--corpus", tr_corpus, "corpus directory (manifest.tsv + wavs)")->required();
  train_cmd->add_option("--out", tr_out, "output directory")->required();
  train_cmd->add_option("--preset", tr_preset, "builtin front-end preset");
  train_cmd->add_option("--frontend-config", tr_fec, "front-end config JSON");
  train_cmd->add_option("--model-config", tr_mc, "backend config JSON");
  train_cmd->add_option("--train-config", tr_tc, "training config JSON");
  train_cmd->add_flag("--resume", tr_resume, "continue from ckpt_latest.bin in --out");

  auto* eval_cmd = app.add_subcommand("eval", "greedy-decode WER/CER of a checkpoint");
  std::string ev_ckpt, ev_corpus;
  eval_cmd->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--corpus", ev_corpus, "corpus directory")->required();

  auto* analyze = app.add_subcommand("analyze", "spectral centroids + filter-tap CSVs");
  std::string an_ckpt, an_preset, an_out;
  analyze->add_option("--checkpoint", an_ckpt, "checkpoint file");
  analyze->add_option("--preset", an_preset, "builtin preset (seeded init instead of checkpoint)");
  analyze->add_option("--out", an_out, "output directory")->required();

  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    set_max_threads(g.threads);
    if (gen->parsed()) return cmd_gen_data(g, gen_out);
    if (extract->parsed()) return cmd_extract(g, ex_preset, ex_wav, ex_output);
    if (train_cmd->parsed())
      return cmd_train(g, tr_corpus, tr_out, tr_preset, tr_fec, tr_mc, tr_tc, tr_resume);
    if (eval_cmd->parsed()) return cmd_eval(ev_ckpt, ev_corpus);
    if (analyze->parsed()) return cmd_analyze(g, an_ckpt, an_preset, an_out);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
