#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "beamkit/types.hpp"

namespace beamkit {

enum class DatasetKind : std::uint8_t { TRAIN, TEST, BOTH };

const char* dataset_kind_name(DatasetKind k);
DatasetKind dataset_kind_from_name(const std::string& name);

// Parameters of one generated dataset. `gamma` is the average inverse SNR:
// channels are unit-power Rayleigh (E|h_kj|^2 = 1, path loss absorbed by
// per-user normalization) and every noise power is set to gamma, so
// mean(sigma^2 / E||h_k||^2 * N_T) == gamma exactly. `raw_pathloss` disables
// the normalization and bakes the drawn path-loss gains into the channels,
// with the physical noise power (-162 dBm/Hz over 10 MHz) instead of gamma.
struct DatasetSpec {
  int n_antennas = 0;
  std::vector<int> k_users_list;  // >1 entry = various-K dataset
  double gamma = 0.5;
  double xi = 1.0;
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
  DatasetKind kind = DatasetKind::BOTH;
  bool raw_pathloss = false;

  bool various() const { return k_users_list.size() > 1; }
  void validate() const;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<ChannelSet> samples;
  std::vector<double> labels;  // empty or per-sample max EE

  bool has_labels() const { return !labels.empty(); }
};

// Physical constants recorded in the manifest (provenance only; the
// normalized pipeline does not use them).
inline constexpr double kBandwidthHz = 10e6;
inline constexpr double kNoiseDbmPerHz = -162.0;
inline constexpr double kPathlossDistMinKm = 0.05;
inline constexpr double kPathlossDistMaxKm = 0.30;

// Path-loss gain at distance d (km): 10^(-(140.7 + 36.7 log10 d)/10).
double pathloss_gain(double d_km);

// Deterministic generation: sample i is a pure function of (seed, i).
Dataset generate(const DatasetSpec& spec);

// Binary dataset + sidecar JSON manifest (path + ".manifest.json").
void save(const Dataset& ds, const std::string& path,
          const std::string& run_id = "");
Dataset load(const std::string& path);

// Returns a copy with labels set; length must equal sample count.
Dataset attach_labels(const Dataset& ds, const std::vector<double>& labels);

// System constants matching a dataset sample (paper defaults P_max = 1 W,
// P_C = 0.5 W).
SystemConfig make_config(const DatasetSpec& spec, int k_users,
                         double p_max = 1.0, double p_circuit = 0.5);

}  // namespace beamkit
