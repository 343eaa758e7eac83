#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "wavebank/audio.hpp"
#include "wavebank/error.hpp"

using namespace wavebank;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() / ("wavebank_audio_test_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Hand-rolled PCM16 WAV writer so the reader is checked against an
// independent byte layout.
void write_raw_wav(const fs::path& path, const std::vector<int16_t>& samples, uint32_t rate = 16000,
                   uint16_t channels = 1, uint16_t bits = 16) {
  std::ofstream out(path, std::ios::binary);
  auto u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(static_cast<uint16_t>(channels * bits / 8));
  u16(bits);
  out.write("data", 4);
  u32(data_bytes);
  for (int16_t s : samples) out.write(reinterpret_cast<const char*>(&s), 2);
}

Waveform tone(double freq_hz, int64_t n, double amp = 0.8) {
  Waveform w;
  w.samples.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    w.samples[static_cast<size_t>(i)] = amp * std::sin(2.0 * M_PI * freq_hz * i / kSampleRate);
  }
  return w;
}

}  // namespace

TEST_CASE("read_wav basics") {
  const fs::path dir = temp_dir();

  SUBCASE("one second of silence") {
    write_raw_wav(dir / "silence.wav", std::vector<int16_t>(16000, 0));
    const Waveform w = read_wav(dir / "silence.wav");
    REQUIRE(w.size() == 16000);
    for (double s : w.samples) CHECK(s == 0.0);
  }

  SUBCASE("scale law: 16384 -> 0.5") {
    write_raw_wav(dir / "one.wav", {16384});
    const Waveform w = read_wav(dir / "one.wav");
    REQUIRE(w.size() == 1);
    CHECK(w.samples[0] == 0.5);
  }

  SUBCASE("format errors name the offending field") {
    write_raw_wav(dir / "rate.wav", {0, 0}, 8000);
    CHECK_THROWS_WITH_AS(read_wav(dir / "rate.wav"),
                         doctest::Contains("sample_rate"), FormatError);
    write_raw_wav(dir / "stereo.wav", {0, 0}, 16000, 2);
    CHECK_THROWS_WITH_AS(read_wav(dir / "stereo.wav"),
                         doctest::Contains("channels"), FormatError);
    write_raw_wav(dir / "bits.wav", {0, 0}, 16000, 1, 8);
    CHECK_THROWS_WITH_AS(read_wav(dir / "bits.wav"),
                         doctest::Contains("bits_per_sample"), FormatError);
    CHECK_THROWS_AS(read_wav(dir / "missing.wav"), IoError);
  }
}

TEST_CASE("wav round trip within one PCM16 step") {
  const fs::path dir = temp_dir();
  Rng rng(5);
  Waveform w;
  w.samples.resize(500);
  for (auto& s : w.samples) s = rng.uniform(-1.0, 1.0);
  w.samples[0] = 1.0;    // clamp edge
  w.samples[1] = -1.0;
  write_wav(dir / "rt.wav", w);
  const Waveform r = read_wav(dir / "rt.wav");
  REQUIRE(r.size() == w.size());
  for (size_t i = 0; i < w.samples.size(); ++i) {
    CHECK(std::abs(r.samples[i] - w.samples[i]) <= 1.0 / 32768.0);
  }
  // already-quantized samples survive exactly
  write_wav(dir / "rt2.wav", r);
  const Waveform r2 = read_wav(dir / "rt2.wav");
  for (size_t i = 0; i < r.samples.size(); ++i) CHECK(r2.samples[i] == r.samples[i]);
}

TEST_CASE("spectrogram dimensions") {
  const Waveform w = tone(1000.0, 16000);
  const FeatureMap fm = spectrogram(w);
  CHECK(fm.frames.dim(1) == 161);
  CHECK(fm.frames.dim(0) == 99);
  CHECK(fm.ms_per_frame == 10.0);

  Waveform tiny;
  tiny.samples.assign(100, 0.1);
  CHECK_THROWS_AS(spectrogram(tiny), ConfigError);
}

TEST_CASE("pure 1 kHz tone peaks at bin 20 in every frame") {
  const FeatureMap fm = spectrogram(tone(1000.0, 16000));
  for (int64_t t = 0; t < fm.frames.dim(0); ++t) {
    int64_t arg = 0;
    for (int64_t k = 1; k < 161; ++k) {
      if (fm.frames.at(t, k) > fm.frames.at(t, arg)) arg = k;
    }
    REQUIRE(arg == 20);
  }
}

TEST_CASE("argmax bin matches for every bin-centered tone") {
  // one frame is enough per tone
  for (int k = 1; k <= 159; ++k) {
    const FeatureMap fm = spectrogram(tone(50.0 * k, 320));
    int64_t arg = 0;
    for (int64_t j = 1; j < 161; ++j) {
      if (fm.frames.at(0, j) > fm.frames.at(0, arg)) arg = j;
    }
    REQUIRE(arg == k);
  }
}

TEST_CASE("frame spectral energy obeys the DFT energy identity") {
  // sum over all 320 bins of |X|^2 equals 320 * windowed frame energy;
  // with conjugate symmetry that is X_0^2 + X_160^2 + 2*sum(1..159).
  Rng rng(6);
  Waveform w;
  w.samples.resize(320);
  for (auto& s : w.samples) s = rng.uniform(-1.0, 1.0);
  const FeatureMap fm = spectrogram(w);
  double spec = fm.frames.at(0, 0) * fm.frames.at(0, 0) +
                fm.frames.at(0, 160) * fm.frames.at(0, 160);
  for (int64_t k = 1; k <= 159; ++k) spec += 2.0 * fm.frames.at(0, k) * fm.frames.at(0, k);
  double time = 0.0;
  for (int64_t i = 0; i < 320; ++i) {
    const double hann = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / 320.0);
    time += (w.samples[static_cast<size_t>(i)] * hann) * (w.samples[static_cast<size_t>(i)] * hann);
  }
  CHECK(spec == doctest::Approx(320.0 * time).epsilon(1e-10));
}

TEST_CASE("normalization statistics") {
  Rng rng(8);
  Tensor a = oracles::random_tensor({30, 3}, rng, -2.0, 7.0);
  Tensor b = oracles::random_tensor({20, 3}, rng, -2.0, 7.0);
  // constant feature
  for (int64_t i = 0; i < 30; ++i) a.at(i, 2) = 4.0;
  for (int64_t i = 0; i < 20; ++i) b.at(i, 2) = 4.0;

  const NormStats stats = fit_norm_stats({&a, &b});
  const Tensor na = apply_norm(a, stats);
  const Tensor nb = apply_norm(b, stats);

  SUBCASE("per-feature corpus mean is zero") {
    for (int64_t j = 0; j < 3; ++j) {
      double mean = 0.0;
      for (int64_t i = 0; i < 30; ++i) mean += na.at(i, j);
      for (int64_t i = 0; i < 20; ++i) mean += nb.at(i, j);
      CHECK(std::abs(mean / 50.0) < 1e-9);
    }
  }
  SUBCASE("constant feature maps to zero, no NaN") {
    for (int64_t i = 0; i < 30; ++i) {
      CHECK(na.at(i, 2) == 0.0);
    }
    CHECK(na.all_finite());
  }
  SUBCASE("duplicated corpus gives identical stats") {
    const NormStats twice = fit_norm_stats({&a, &a});
    const NormStats once = fit_norm_stats({&a});
    for (int64_t j = 0; j < 3; ++j) {
      CHECK(twice.mean[j] == once.mean[j]);
      CHECK(twice.stddev[j] == once.stddev[j]);
    }
  }
  SUBCASE("empty corpus rejected") {
    CHECK_THROWS_AS(fit_norm_stats({}), ConfigError);
  }
}

TEST_CASE("mix_noise hits the requested SNR") {
  SUBCASE("equal power at 0 dB means unit gain") {
    Waveform sig, noise;
    sig.samples.assign(100, 0.5);
    noise.samples.assign(100, 0.0);
    for (size_t i = 0; i < 100; ++i) noise.samples[i] = (i % 2 == 0) ? 0.5 : -0.5;
    Rng rng(1);
    const Waveform mixed = mix_noise(sig, noise, 0.0, rng);
    for (size_t i = 0; i < 100; ++i) {
      CHECK(mixed.samples[i] == doctest::Approx(sig.samples[i] + noise.samples[i]).epsilon(1e-12));
    }
  }
  SUBCASE("equal power at 10 dB means gain 10^-0.5") {
    Waveform sig, noise;
    sig.samples.assign(64, 0.5);
    noise.samples.assign(64, 0.0);
    for (size_t i = 0; i < 64; ++i) noise.samples[i] = (i % 2 == 0) ? 0.5 : -0.5;
    Rng rng(1);
    const Waveform mixed = mix_noise(sig, noise, 10.0, rng);
    // recover the scaled noise component and measure it
    const double g_measured = (mixed.samples[0] - sig.samples[0]) / noise.samples[0];
    CHECK(g_measured == doctest::Approx(std::pow(10.0, -0.5)).epsilon(1e-12));
  }
  SUBCASE("measured SNR within 1e-9 dB") {
    Rng gen(77);
    Waveform sig = white_noise(4000, gen);
    Waveform noise = white_noise(9000, gen);
    for (double snr : {0.0, 5.0, 10.0, 15.0}) {
      Rng rng(3);
      const Waveform mixed = mix_noise(sig, noise, snr, rng);
      double p_sig = 0.0, p_noise = 0.0;
      for (int64_t i = 0; i < sig.size(); ++i) {
        const double n_i = mixed.samples[static_cast<size_t>(i)] - sig.samples[static_cast<size_t>(i)];
        p_sig += sig.samples[static_cast<size_t>(i)] * sig.samples[static_cast<size_t>(i)];
        p_noise += n_i * n_i;
      }
      const double measured = 10.0 * std::log10(p_sig / p_noise);
      CHECK(std::abs(measured - snr) < 1e-9);
    }
  }
  SUBCASE("silent inputs rejected") {
    Waveform sig, silence;
    sig.samples.assign(10, 0.5);
    silence.samples.assign(10, 0.0);
    Rng rng(1);
    CHECK_THROWS_WITH_AS(mix_noise(sig, silence, 0.0, rng), doctest::Contains("zero-power"),
                         ConfigError);
    CHECK_THROWS_AS(mix_noise(silence, sig, 0.0, rng), ConfigError);
  }
  SUBCASE("noise shorter than signal rejected") {
    Waveform sig, noise;
    sig.samples.assign(20, 0.5);
    noise.samples.assign(10, 0.5);
    Rng rng(1);
    CHECK_THROWS_AS(mix_noise(sig, noise, 0.0, rng), ConfigError);
  }
}

TEST_CASE("synth_corpus determinism and duration law") {
  SynthConfig cfg;
  cfg.n_utts = 6;
  cfg.alphabet_size = 4;
  cfg.min_chars = 2;
  cfg.max_chars = 5;
  cfg.seed = 1001;
  const Corpus a = synth_corpus(cfg);
  const Corpus b = synth_corpus(cfg);
  REQUIRE(a.utterances.size() == 6);
  for (size_t i = 0; i < 6; ++i) {
    CHECK(a.utterances[i].transcript == b.utterances[i].transcript);
    CHECK(a.utterances[i].waveform.samples == b.utterances[i].waveform.samples);  // bit-identical
    // 120 ms tone + 30 ms gap per character = 2400 samples
    CHECK(a.utterances[i].waveform.size() ==
          2400 * static_cast<int64_t>(a.utterances[i].transcript.size()));
    const size_t n = a.utterances[i].transcript.size();
    CHECK(n >= 2);
    CHECK(n <= 5);
  }
  cfg.seed = 1002;
  const Corpus c = synth_corpus(cfg);
  bool any_differs = false;
  for (size_t i = 0; i < 6; ++i) {
    if (c.utterances[i].transcript != a.utterances[i].transcript) any_differs = true;
  }
  CHECK(any_differs);

  SynthConfig bad = cfg;
  bad.alphabet_size = 1;
  CHECK_THROWS_AS(synth_corpus(bad), ConfigError);
  bad = cfg;
  bad.min_chars = 5;
  bad.max_chars = 2;
  CHECK_THROWS_AS(synth_corpus(bad), ConfigError);
}

TEST_CASE("character tones land on their configured frequencies") {
  SynthConfig cfg;
  cfg.n_utts = 8;
  cfg.alphabet_size = 2;
  cfg.min_chars = 3;
  cfg.max_chars = 3;
  cfg.seed = 55;
  const Corpus corpus = synth_corpus(cfg);
  const Utterance* with_a = nullptr;
  for (const auto& u : corpus.utterances) {
    if (u.transcript[0] == 'a') with_a = &u;
  }
  REQUIRE(with_a != nullptr);
  // first 1920 samples are the first character's tone: f1=400, f2=1200
  Waveform seg;
  seg.samples.assign(with_a->waveform.samples.begin(), with_a->waveform.samples.begin() + 1920);
  const FeatureMap fm = spectrogram(seg);
  // strongest two bins of frame 0 must be 400/50=8 and 1200/50=24
  std::vector<std::pair<double, int64_t>> mags;
  for (int64_t k = 0; k < 161; ++k) mags.push_back({fm.frames.at(0, k), k});
  std::sort(mags.rbegin(), mags.rend());
  const int64_t top0 = mags[0].second, top1 = mags[1].second;
  CHECK(((top0 == 8 && top1 == 24) || (top0 == 24 && top1 == 8)));
}

TEST_CASE("sortagrad ordering") {
  Corpus corpus;
  auto add = [&](const std::string& id, int64_t len) {
    Utterance u;
    u.id = id;
    u.transcript = "a";
    u.waveform.samples.assign(static_cast<size_t>(len), 0.1);
    corpus.utterances.push_back(std::move(u));
  };
  SUBCASE("lengths [300,100,200] -> order [1,2,0]") {
    add("u0", 300);
    add("u1", 100);
    add("u2", 200);
    CHECK(sortagrad_order(corpus) == std::vector<size_t>{1, 2, 0});
  }
  SUBCASE("already sorted -> identity") {
    add("u0", 10);
    add("u1", 20);
    add("u2", 30);
    CHECK(sortagrad_order(corpus) == std::vector<size_t>{0, 1, 2});
  }
  SUBCASE("equal lengths -> id-lexicographic") {
    add("zz", 10);
    add("aa", 10);
    add("mm", 10);
    CHECK(sortagrad_order(corpus) == std::vector<size_t>{1, 2, 0});
  }
  SUBCASE("empty corpus rejected") {
    Corpus empty;
    CHECK_THROWS_AS(sortagrad_order(empty), ConfigError);
  }
}

TEST_CASE("corpus round trips through manifest + wavs") {
  const fs::path dir = temp_dir();
  SynthConfig cfg;
  cfg.n_utts = 4;
  cfg.alphabet_size = 3;
  cfg.seed = 9;
  const Corpus corpus = synth_corpus(cfg);
  write_corpus(corpus, dir);
  const Corpus loaded = read_corpus(dir);
  REQUIRE(loaded.utterances.size() == corpus.utterances.size());
  for (size_t i = 0; i < corpus.utterances.size(); ++i) {
    CHECK(loaded.utterances[i].id == corpus.utterances[i].id);
    CHECK(loaded.utterances[i].transcript == corpus.utterances[i].transcript);
    REQUIRE(loaded.utterances[i].waveform.size() == corpus.utterances[i].waveform.size());
    for (int64_t k = 0; k < loaded.utterances[i].waveform.size(); ++k) {
      CHECK(std::abs(loaded.utterances[i].waveform.samples[static_cast<size_t>(k)] -
                     corpus.utterances[i].waveform.samples[static_cast<size_t>(k)]) <= 1.0 / 32768.0);
    }
  }
}
