#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wavebank/rng.hpp"
#include "wavebank/tensor.hpp"

namespace wavebank {

inline constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
  void validate() const;  // 16 kHz, at least one sample
};

struct Utterance {
  std::string id;
  Waveform waveform;
  std::string transcript;
};

struct Corpus {
  std::vector<Utterance> utterances;
};

// Frame-major feature matrix plus its temporal resolution.
struct FeatureMap {
  Tensor frames;  // [T, F]
  double ms_per_frame = 0.0;
  std::vector<std::string> feature_labels;  // optional, e.g. Hz per bin
};

// Per-feature standardization statistics. std is floored, never zero.
struct NormStats {
  Tensor mean;    // [F]
  Tensor stddev;  // [F]
};

inline constexpr double kStdFloor = 1e-8;

// PCM16 mono 16 kHz RIFF/WAV. Samples are scaled to [-1,1] by 1/32768 on
// read; writing rounds to the nearest PCM16 step and clamps.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w);

// Magnitude DFT per Hann-windowed frame (periodic Hann, no pre-emphasis).
// Defaults give 320-sample windows at 160-sample hops: 161 bins spanning
// 0-8 kHz at 50 Hz spacing, one frame per 10 ms.
FeatureMap spectrogram(const Waveform& w, double window_ms = 20.0, double hop_ms = 10.0);

// Statistics over all rows of all matrices (population variance, so a
// corpus repeated twice yields identical stats).
NormStats fit_norm_stats(const std::vector<const Tensor*>& feature_mats);
Tensor apply_norm(const Tensor& frames, const NormStats& stats);
// Treats the waveform as one feature sampled at 16 kHz.
NormStats fit_norm_stats_waveforms(const std::vector<const Waveform*>& waves);
Waveform apply_norm(const Waveform& w, const NormStats& stats);

// Adds noise at the requested SNR: out = signal + g * crop(noise) with
// g = sqrt(P_signal / (P_noise * 10^(snr_db/10))) and P the mean squared
// amplitude of the cropped segment. The crop offset is drawn from rng.
Waveform mix_noise(const Waveform& signal, const Waveform& noise, double snr_db, Rng& rng);

Waveform white_noise(int64_t n_samples, Rng& rng);  // uniform in [-0.5, 0.5)

// Synthetic tone-pair corpus. Character i of the alphabet maps to
// frequencies f1 = 400 + 300*i Hz and f2 = 1200 + 450*i Hz, played for
// 120 ms at amplitude 0.5 each and followed by 30 ms of silence.
struct SynthConfig {
  int n_utts = 64;
  int alphabet_size = 6;  // 2..10
  int min_chars = 2;
  int max_chars = 6;
  uint64_t seed = 0;
};

std::string synth_alphabet(int alphabet_size);  // "ab..."
Corpus synth_corpus(const SynthConfig& cfg);

// Ascending by sample count, ties by id lexicographically.
std::vector<size_t> sortagrad_order(const Corpus& corpus);

// Corpus on disk: <dir>/manifest.tsv with lines "id\twav_path\ttranscript"
// (wav_path relative to the manifest) and one WAV file per utterance.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace wavebank
