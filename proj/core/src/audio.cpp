#include "wavebank/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "wavebank/error.hpp"

namespace wavebank {

namespace fs = std::filesystem;

void Waveform::validate() const {
  if (sample_rate != kSampleRate) {
    throw ConfigError("waveform sample rate must be 16000, got " + std::to_string(sample_rate));
  }
  if (samples.empty()) throw ConfigError("waveform must contain at least one sample");
}

// ---------------------------------------------------------------------------
// WAV I/O
// ---------------------------------------------------------------------------

namespace {

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

std::string read_tag(std::istream& in) {
  char tag[4];
  in.read(tag, 4);
  return std::string(tag, 4);
}

}  // namespace

Waveform read_wav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path.string());

  if (read_tag(in) != "RIFF") throw FormatError(path.string() + ": missing RIFF header");
  read_u32(in);  // riff size, unchecked
  if (read_tag(in) != "WAVE") throw FormatError(path.string() + ": missing WAVE form type");

  bool have_fmt = false;
  while (in) {
    const std::string tag = read_tag(in);
    if (!in) break;
    const uint32_t chunk_size = read_u32(in);
    if (tag == "fmt ") {
      const uint16_t format = read_u16(in);
      const uint16_t channels = read_u16(in);
      const uint32_t rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      const uint16_t bits = read_u16(in);
      if (format != 1) throw FormatError(path.string() + ": audio_format must be PCM(1), got " + std::to_string(format));
      if (channels != 1) throw FormatError(path.string() + ": channels must be 1, got " + std::to_string(channels));
      if (rate != kSampleRate) throw FormatError(path.string() + ": sample_rate must be 16000, got " + std::to_string(rate));
      if (bits != 16) throw FormatError(path.string() + ": bits_per_sample must be 16, got " + std::to_string(bits));
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (tag == "data") {
      if (!have_fmt) throw FormatError(path.string() + ": data chunk before fmt chunk");
      if (chunk_size % 2 != 0) throw FormatError(path.string() + ": odd data chunk size");
      const size_t n = chunk_size / 2;
      if (n == 0) throw FormatError(path.string() + ": empty data chunk");
      std::vector<char> raw(chunk_size);
      in.read(raw.data(), static_cast<std::streamsize>(chunk_size));
      if (static_cast<size_t>(in.gcount()) != chunk_size) {
        throw FormatError(path.string() + ": truncated data chunk");
      }
      Waveform w;
      w.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        const int16_t s = static_cast<int16_t>(static_cast<unsigned char>(raw[2 * i]) |
                                               (static_cast<unsigned char>(raw[2 * i + 1]) << 8));
        w.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return w;
    } else {
      // skip unknown chunk (word aligned)
      in.seekg(chunk_size + (chunk_size % 2), std::ios::cur);
    }
  }
  throw FormatError(path.string() + ": no data chunk found");
}

void write_wav(const fs::path& path, const Waveform& w) {
  w.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot create WAV file: " + path.string());

  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, kSampleRate);
  write_u32(out, kSampleRate * 2);  // byte rate
  write_u16(out, 2);                // block align
  write_u16(out, 16);               // bits per sample
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (double x : w.samples) {
    long long q = std::llround(x * 32768.0);
    q = std::clamp<long long>(q, -32768, 32767);
    write_u16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  if (!out) throw IoError("failed writing WAV file: " + path.string());
}

// ---------------------------------------------------------------------------
// Spectrogram
// ---------------------------------------------------------------------------

FeatureMap spectrogram(const Waveform& w, double window_ms, double hop_ms) {
  w.validate();
  const int64_t win = std::llround(window_ms * kSampleRate / 1000.0);
  const int64_t hop = std::llround(hop_ms * kSampleRate / 1000.0);
  if (win < 2 || hop < 1) throw ConfigError("spectrogram: window/hop too small");
  if (w.size() < win) {
    throw ConfigError("spectrogram: waveform shorter than one window (" + std::to_string(w.size()) +
                      " < " + std::to_string(win) + " samples)");
  }
  const int64_t n_frames = (w.size() - win) / hop + 1;
  const int64_t n_bins = win / 2 + 1;

  // Periodic Hann window.
  std::vector<double> hann(static_cast<size_t>(win));
  for (int64_t i = 0; i < win; ++i) {
    hann[static_cast<size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win));
  }
  // cos/sin tables over k*n mod win keep large-angle error out of the DFT.
  std::vector<double> cos_tab(static_cast<size_t>(win)), sin_tab(static_cast<size_t>(win));
  for (int64_t i = 0; i < win; ++i) {
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win);
    cos_tab[static_cast<size_t>(i)] = std::cos(ang);
    sin_tab[static_cast<size_t>(i)] = std::sin(ang);
  }

  FeatureMap fm;
  fm.frames = Tensor({n_frames, n_bins});
  fm.ms_per_frame = hop_ms;
  std::vector<double> frame(static_cast<size_t>(win));
  for (int64_t f = 0; f < n_frames; ++f) {
    const double* src = w.samples.data() + f * hop;
    for (int64_t i = 0; i < win; ++i) frame[static_cast<size_t>(i)] = src[i] * hann[static_cast<size_t>(i)];
    for (int64_t k = 0; k < n_bins; ++k) {
      double re = 0.0, im = 0.0;
      int64_t idx = 0;
      for (int64_t i = 0; i < win; ++i) {
        re += frame[static_cast<size_t>(i)] * cos_tab[static_cast<size_t>(idx)];
        im -= frame[static_cast<size_t>(i)] * sin_tab[static_cast<size_t>(idx)];
        idx += k;
        if (idx >= win) idx -= win;
      }
      fm.frames.at(f, k) = std::hypot(re, im);
    }
  }
  const double bin_hz = static_cast<double>(kSampleRate) / static_cast<double>(win);
  fm.feature_labels.reserve(static_cast<size_t>(n_bins));
  for (int64_t k = 0; k < n_bins; ++k) {
    std::ostringstream os;
    os << bin_hz * static_cast<double>(k) << "Hz";
    fm.feature_labels.push_back(os.str());
  }
  return fm;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

NormStats fit_norm_stats(const std::vector<const Tensor*>& feature_mats) {
  if (feature_mats.empty()) throw ConfigError("fit_norm_stats: empty corpus");
  const int64_t F = feature_mats.front()->dim(1);
  int64_t n = 0;
  Tensor mean({F});
  for (const Tensor* m : feature_mats) {
    if (m->rank() != 2 || m->dim(1) != F) throw ShapeError("fit_norm_stats: inconsistent feature dims");
    const int64_t rows = m->dim(0);
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < F; ++j) mean[j] += m->at(i, j);
    n += rows;
  }
  if (n < 2) throw ConfigError("fit_norm_stats: need at least 2 frames, got " + std::to_string(n));
  for (int64_t j = 0; j < F; ++j) mean[j] /= static_cast<double>(n);

  Tensor stddev({F});
  for (const Tensor* m : feature_mats) {
    const int64_t rows = m->dim(0);
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < F; ++j) {
        const double d = m->at(i, j) - mean[j];
        stddev[j] += d * d;
      }
    }
  }
  for (int64_t j = 0; j < F; ++j) {
    stddev[j] = std::sqrt(stddev[j] / static_cast<double>(n));
    if (stddev[j] < kStdFloor) stddev[j] = kStdFloor;
  }
  return NormStats{std::move(mean), std::move(stddev)};
}

Tensor apply_norm(const Tensor& frames, const NormStats& stats) {
  if (frames.rank() != 2 || frames.dim(1) != stats.mean.dim(0)) {
    throw ShapeError("apply_norm: feature dim mismatch");
  }
  Tensor out = frames;
  const int64_t rows = out.dim(0), F = out.dim(1);
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t j = 0; j < F; ++j) {
      out.at(i, j) = (out.at(i, j) - stats.mean[j]) / stats.stddev[j];
    }
  }
  return out;
}

NormStats fit_norm_stats_waveforms(const std::vector<const Waveform*>& waves) {
  if (waves.empty()) throw ConfigError("fit_norm_stats: empty corpus");
  int64_t n = 0;
  double mean = 0.0;
  for (const Waveform* w : waves) {
    for (double x : w->samples) mean += x;
    n += w->size();
  }
  if (n < 2) throw ConfigError("fit_norm_stats: need at least 2 samples");
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (const Waveform* w : waves) {
    for (double x : w->samples) var += (x - mean) * (x - mean);
  }
  double sd = std::sqrt(var / static_cast<double>(n));
  if (sd < kStdFloor) sd = kStdFloor;
  NormStats s;
  s.mean = Tensor({1});
  s.stddev = Tensor({1});
  s.mean[0] = mean;
  s.stddev[0] = sd;
  return s;
}

Waveform apply_norm(const Waveform& w, const NormStats& stats) {
  if (stats.mean.size() != 1) throw ShapeError("apply_norm: waveform stats must have one feature");
  Waveform out = w;
  for (double& x : out.samples) x = (x - stats.mean[0]) / stats.stddev[0];
  return out;
}

// ---------------------------------------------------------------------------
// Noise mixing
// ---------------------------------------------------------------------------

namespace {

double mean_power(const double* x, int64_t n) {
  double p = 0.0;
  for (int64_t i = 0; i < n; ++i) p += x[i] * x[i];
  return p / static_cast<double>(n);
}

}  // namespace

Waveform mix_noise(const Waveform& signal, const Waveform& noise, double snr_db, Rng& rng) {
  signal.validate();
  noise.validate();
  if (noise.size() < signal.size()) {
    throw ConfigError("mix_noise: noise (" + std::to_string(noise.size()) +
                      " samples) shorter than signal (" + std::to_string(signal.size()) + ")");
  }
  const int64_t offset = rng.uniform_int(0, noise.size() - signal.size());
  const int64_t n = signal.size();
  const double p_signal = mean_power(signal.samples.data(), n);
  const double p_noise = mean_power(noise.samples.data() + offset, n);
  if (p_signal == 0.0) throw ConfigError("mix_noise: zero-power signal");
  if (p_noise == 0.0) throw ConfigError("mix_noise: zero-power noise");
  const double g = std::sqrt(p_signal / (p_noise * std::pow(10.0, snr_db / 10.0)));
  Waveform out = signal;
  for (int64_t i = 0; i < n; ++i) out.samples[static_cast<size_t>(i)] += g * noise.samples[static_cast<size_t>(offset + i)];
  return out;
}

Waveform white_noise(int64_t n_samples, Rng& rng) {
  if (n_samples < 1) throw ConfigError("white_noise: need at least one sample");
  Waveform w;
  w.samples.resize(static_cast<size_t>(n_samples));
  for (auto& x : w.samples) x = rng.uniform(-0.5, 0.5);
  return w;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

std::string synth_alphabet(int alphabet_size) {
  if (alphabet_size < 2 || alphabet_size > 10) {
    throw ConfigError("alphabet_size must be in [2,10], got " + std::to_string(alphabet_size));
  }
  std::string a;
  for (int i = 0; i < alphabet_size; ++i) a.push_back(static_cast<char>('a' + i));
  return a;
}

namespace {

constexpr int64_t kToneSamples = 120 * kSampleRate / 1000;  // 120 ms
constexpr int64_t kGapSamples = 30 * kSampleRate / 1000;    // 30 ms

void append_char_tone(std::vector<double>& out, int char_index) {
  const double f1 = 400.0 + 300.0 * char_index;
  const double f2 = 1200.0 + 450.0 * char_index;
  const double w1 = 2.0 * std::numbers::pi * f1 / kSampleRate;
  const double w2 = 2.0 * std::numbers::pi * f2 / kSampleRate;
  for (int64_t n = 0; n < kToneSamples; ++n) {
    out.push_back(0.5 * std::sin(w1 * static_cast<double>(n)) + 0.5 * std::sin(w2 * static_cast<double>(n)));
  }
  out.insert(out.end(), kGapSamples, 0.0);
}

}  // namespace

Corpus synth_corpus(const SynthConfig& cfg) {
  const std::string alphabet = synth_alphabet(cfg.alphabet_size);
  if (cfg.n_utts < 1) throw ConfigError("n_utts must be >= 1");
  if (cfg.min_chars < 1 || cfg.max_chars < cfg.min_chars) {
    throw ConfigError("invalid transcript length range [" + std::to_string(cfg.min_chars) + "," +
                      std::to_string(cfg.max_chars) + "]");
  }
  Rng rng = Rng::derive(cfg.seed, {0x636f7270u});
  Corpus corpus;
  corpus.utterances.reserve(static_cast<size_t>(cfg.n_utts));
  for (int u = 0; u < cfg.n_utts; ++u) {
    const int64_t len = rng.uniform_int(cfg.min_chars, cfg.max_chars);
    std::string transcript;
    for (int64_t i = 0; i < len; ++i) {
      transcript.push_back(alphabet[static_cast<size_t>(rng.uniform_int(0, cfg.alphabet_size - 1))]);
    }
    Utterance utt;
    std::ostringstream id;
    id << "utt_" << std::setw(4) << std::setfill('0') << u;
    utt.id = id.str();
    utt.transcript = transcript;
    utt.waveform.samples.reserve(transcript.size() * static_cast<size_t>(kToneSamples + kGapSamples));
    for (char c : transcript) append_char_tone(utt.waveform.samples, c - 'a');
    corpus.utterances.push_back(std::move(utt));
  }
  return corpus;
}

std::vector<size_t> sortagrad_order(const Corpus& corpus) {
  if (corpus.utterances.empty()) throw ConfigError("sortagrad_order: empty corpus");
  std::vector<size_t> order(corpus.utterances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const auto& ua = corpus.utterances[a];
    const auto& ub = corpus.utterances[b];
    if (ua.waveform.size() != ub.waveform.size()) return ua.waveform.size() < ub.waveform.size();
    return ua.id < ub.id;
  });
  return order;
}

// ---------------------------------------------------------------------------
// Corpus on disk
// ---------------------------------------------------------------------------

void write_corpus(const Corpus& corpus, const fs::path& dir) {
  if (!fs::exists(dir)) throw IoError("corpus directory does not exist: " + dir.string());
  fs::create_directory(dir / "wavs");
  std::ofstream manifest(dir / "manifest.tsv");
  if (!manifest) throw IoError("cannot create manifest: " + (dir / "manifest.tsv").string());
  for (const auto& utt : corpus.utterances) {
    const std::string rel = "wavs/" + utt.id + ".wav";
    write_wav(dir / rel, utt.waveform);
    manifest << utt.id << '\t' << rel << '\t' << utt.transcript << '\n';
  }
}

Corpus read_corpus(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.tsv";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot open manifest: " + manifest_path.string());
  Corpus corpus;
  std::string line;
  int lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    const size_t t1 = line.find('\t');
    const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw FormatError(manifest_path.string() + ":" + std::to_string(lineno) +
                        ": expected 3 tab-separated fields");
    }
    Utterance utt;
    utt.id = line.substr(0, t1);
    const std::string rel = line.substr(t1 + 1, t2 - t1 - 1);
    utt.transcript = line.substr(t2 + 1);
    if (utt.transcript.empty()) {
      throw FormatError(manifest_path.string() + ":" + std::to_string(lineno) + ": empty transcript");
    }
    utt.waveform = read_wav(dir / rel);
    corpus.utterances.push_back(std::move(utt));
  }
  if (corpus.utterances.empty()) throw FormatError(manifest_path.string() + ": empty corpus");
  return corpus;
}

}  // namespace wavebank
