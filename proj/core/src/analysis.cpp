#include "wavebank/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "wavebank/audio.hpp"
#include "wavebank/error.hpp"
#include "wavebank/frontend.hpp"

namespace wavebank {

namespace fs = std::filesystem;

double spectral_centroid(std::span<const double> taps, int dft_size) {
  if (dft_size < 2) throw ConfigError("spectral_centroid: dft_size too small");
  if (taps.empty() || static_cast<int>(taps.size()) > dft_size) {
    throw ConfigError("spectral_centroid: need 1..dft_size taps, got " +
                      std::to_string(taps.size()));
  }
  const int n_bins = dft_size / 2 + 1;
  // Angle tables over (k*i mod dft_size) keep large-angle error out.
  std::vector<double> cos_tab(static_cast<size_t>(dft_size)), sin_tab(static_cast<size_t>(dft_size));
  for (int i = 0; i < dft_size; ++i) {
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(dft_size);
    cos_tab[static_cast<size_t>(i)] = std::cos(ang);
    sin_tab[static_cast<size_t>(i)] = std::sin(ang);
  }
  double weighted = 0.0, total = 0.0;
  for (int k = 0; k < n_bins; ++k) {
    double re = 0.0, im = 0.0;
    int idx = 0;
    // zero-padding: only the given taps contribute
    for (size_t i = 0; i < taps.size(); ++i) {
      re += taps[i] * cos_tab[static_cast<size_t>(idx)];
      im -= taps[i] * sin_tab[static_cast<size_t>(idx)];
      idx += k;
      if (idx >= dft_size) idx -= dft_size;
    }
    // sqrt(re^2+im^2) rather than hypot: scaling the taps by a power of two
    // then scales the magnitude exactly, making the centroid bit-invariant.
    const double mag = std::sqrt(re * re + im * im);
    const double f_k = static_cast<double>(k) * kSampleRate / static_cast<double>(dft_size);
    weighted += f_k * mag;
    total += mag;
  }
  if (total == 0.0) {
    throw ConfigError("spectral_centroid: all-zero filter has an undefined centroid");
  }
  return weighted / total;
}

SpectralSummary summarize_bank(const Tensor& filters, const std::string& bank_name, int dft_size) {
  if (filters.rank() != 3 || filters.dim(1) != 1) {
    throw ShapeError("summarize_bank: filters must be [K,1,N], got " + filters.shape_str());
  }
  const int64_t K = filters.dim(0);
  const int64_t N = filters.dim(2);
  SpectralSummary summary;
  summary.bank_name = bank_name;
  summary.n_filters = static_cast<int>(N);
  summary.centroids_hz.reserve(static_cast<size_t>(N));
  std::vector<double> taps(static_cast<size_t>(K));
  for (int64_t f = 0; f < N; ++f) {
    for (int64_t k = 0; k < K; ++k) taps[static_cast<size_t>(k)] = filters.at(k, 0, f);
    summary.centroids_hz.push_back(spectral_centroid(taps, dft_size));
  }
  std::sort(summary.centroids_hz.begin(), summary.centroids_hz.end());
  double sum = 0.0;
  for (double c : summary.centroids_hz) sum += c;
  summary.bank_mean_hz = sum / static_cast<double>(N);
  return summary;
}

std::vector<SpectralSummary> summarize_frontend(const FrontEnd& frontend, int dft_size) {
  if (frontend.config().fft) throw ConfigError("fft front end has no learned filters");
  std::vector<SpectralSummary> out;
  for (int i = 0; i < frontend.n_scales(); ++i) {
    out.push_back(summarize_bank(frontend.filters(i),
                                 frontend.config().scales[static_cast<size_t>(i)].name, dft_size));
  }
  return out;
}

namespace {

// Full precision so re-imports reproduce values bit-exactly.
void print_full(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

}  // namespace

void export_centroids(const std::vector<SpectralSummary>& summaries, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot create centroid CSV: " + file.string());
  out << "bank,filter_index_sorted,centroid_hz\n";
  for (const auto& s : summaries) {
    for (size_t i = 0; i < s.centroids_hz.size(); ++i) {
      out << s.bank_name << ',' << i << ',';
      print_full(out, s.centroids_hz[i]);
      out << '\n';
    }
    out << s.bank_name << ",MEAN,";
    print_full(out, s.bank_mean_hz);
    out << '\n';
  }
  if (!out) throw IoError("failed writing centroid CSV: " + file.string());
}

std::vector<fs::path> export_filters(const FrontEnd& frontend, const fs::path& dir) {
  if (frontend.config().fft) throw ConfigError("fft front end has no learned filters");
  if (!fs::exists(dir)) throw IoError("output directory does not exist: " + dir.string());
  std::vector<fs::path> written;
  for (int i = 0; i < frontend.n_scales(); ++i) {
    const auto& scale = frontend.config().scales[static_cast<size_t>(i)];
    const Tensor& filters = frontend.filters(i);
    const int64_t K = filters.dim(0);
    const int64_t N = filters.dim(2);
    const fs::path file = dir / ("filters_" + scale.name + ".csv");
    std::ofstream out(file);
    if (!out) throw IoError("cannot create filter CSV: " + file.string());
    out << "bank,filter_index";
    for (int64_t k = 0; k < K; ++k) out << ",tap_" << k;
    out << '\n';
    for (int64_t f = 0; f < N; ++f) {
      out << scale.name << ',' << f;
      for (int64_t k = 0; k < K; ++k) {
        out << ',';
        print_full(out, filters.at(k, 0, f));
      }
      out << '\n';
    }
    if (!out) throw IoError("failed writing filter CSV: " + file.string());
    written.push_back(file);
  }
  return written;
}

Tensor import_filter_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open filter CSV: " + file.string());
  std::string header;
  if (!std::getline(in, header)) throw FormatError(file.string() + ": empty file");
  int64_t n_taps = 0;
  {
    std::stringstream ss(header);
    std::string field;
    int col = 0;
    while (std::getline(ss, field, ',')) {
      if (col >= 2 && field.rfind("tap_", 0) == 0) ++n_taps;
      ++col;
    }
  }
  if (n_taps == 0) throw FormatError(file.string() + ": header has no tap columns");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');  // bank
    std::getline(ss, field, ',');  // index
    std::vector<double> taps;
    while (std::getline(ss, field, ',')) taps.push_back(std::stod(field));
    if (static_cast<int64_t>(taps.size()) != n_taps) {
      throw FormatError(file.string() + ": row has " + std::to_string(taps.size()) +
                        " taps, header says " + std::to_string(n_taps));
    }
    rows.push_back(std::move(taps));
  }
  if (rows.empty()) throw FormatError(file.string() + ": no filter rows");
  Tensor filters({n_taps, 1, static_cast<int64_t>(rows.size())});
  for (size_t f = 0; f < rows.size(); ++f) {
    for (int64_t k = 0; k < n_taps; ++k) {
      filters.at(k, 0, static_cast<int64_t>(f)) = rows[f][static_cast<size_t>(k)];
    }
  }
  return filters;
}

}  // namespace wavebank
