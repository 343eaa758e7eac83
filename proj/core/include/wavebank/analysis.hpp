#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wavebank/tensor.hpp"

namespace wavebank {

struct Pipeline;
class FrontEnd;

// Magnitude-weighted mean frequency of the zero-padded DFT of the taps,
// over bins 0..dft_size/2 at 16 kHz: sum(f_k*|H_k|) / sum(|H_k|).
double spectral_centroid(std::span<const double> taps, int dft_size = 1024);

struct SpectralSummary {
  std::string bank_name;
  std::vector<double> centroids_hz;  // sorted ascending
  double bank_mean_hz = 0.0;
  int n_filters = 0;
};

// filters is [K,1,N]: one centroid per filter column.
SpectralSummary summarize_bank(const Tensor& filters, const std::string& bank_name,
                               int dft_size = 1024);

std::vector<SpectralSummary> summarize_frontend(const FrontEnd& frontend, int dft_size = 1024);

// centroids.csv: "bank,filter_index_sorted,centroid_hz" rows plus one
// "bank,MEAN,mean_hz" summary row per bank.
void export_centroids(const std::vector<SpectralSummary>& summaries,
                      const std::filesystem::path& file);

// One CSV per bank under dir ("filters_<bank>.csv"), header
// "bank,filter_index,tap_0..tap_{K-1}", one filter per row. Returns the
// paths written.
std::vector<std::filesystem::path> export_filters(const FrontEnd& frontend,
                                                   const std::filesystem::path& dir);

// Reads a filter CSV back into [K,1,N] (tests use this for round-trips).
Tensor import_filter_csv(const std::filesystem::path& file);

}  // namespace wavebank
