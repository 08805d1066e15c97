#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "beamkit/dataset.hpp"
#include "beamkit/gnn.hpp"

namespace beamkit {

enum class TrainScheme : std::uint8_t { MMSE, HZM, Both };
enum class TrainStrategy : std::uint8_t { Constant, Various };

const char* train_scheme_name(TrainScheme s);
TrainScheme train_scheme_from_name(const std::string& name);
const char* train_strategy_name(TrainStrategy s);
TrainStrategy train_strategy_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 400;
  int batch_size = 25;
  double lr = 1e-3;
  double lambda = 10.0;  // QoS penalty factor
  TrainStrategy strategy = TrainStrategy::Constant;
  TrainScheme scheme = TrainScheme::MMSE;
  std::uint64_t seed = 0;
  int eval_every = 1;  // validation cadence in epochs
  double p_max = 1.0;
  double p_circuit = 0.5;
  std::string dataset_tag;  // provenance recorded into the checkpoint

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  GnnParams best;               // checkpoint with the best validation loss
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool aborted = false;         // non-finite loss/gradient encountered
  std::string abort_reason;
};

// Penalty loss over one homogeneous-K batch: mean over samples of
// (-EE + sum_k lambda * relu(xi_k - R_k)), through the differentiable path.
// scheme Both sums the two single-scheme losses (shared trunk gradients).
double loss(const std::vector<const ChannelSet*>& batch, GnnParams& params,
            const SystemConfig& cfg, double lambda, TrainScheme scheme);

// Unsupervised training. Deterministic for a fixed seed (single-threaded).
TrainResult train(const Dataset& data, const TrainConfig& cfg,
                  const ArchSpec& arch);

// Per-epoch JSONL log and a (epoch, loss) CSV convergence curve.
void write_epoch_log(const std::vector<EpochRecord>& history,
                     const std::string& path);
void write_loss_csv(const std::vector<EpochRecord>& history,
                    const std::string& path);

struct SchemeBreakdown {
  int selected_count = 0;
  int feasible_count = 0;
  double ee_ratio_mean = 0.0;  // over feasible outputs with labels
};

struct EvalReport {
  int sample_count = 0;
  int feasible_count = 0;
  double feasibility_rate = 0.0;
  // Mean EE ratio vs labels over feasible outputs; absent without labels
  // or when nothing is feasible.
  std::optional<double> ee_ratio_mean;
  std::optional<double> inference_mean_s;
  std::optional<double> inference_median_s;
  SchemeBreakdown mmse, hzm;
  std::string mode;

  std::string to_json() const;
};

// Metrics a-d. `timing_warmup < 0` disables the timing pass.
EvalReport evaluate(const Dataset& data, const GnnParams& params,
                    ForwardMode mode, double p_max = 1.0,
                    double p_circuit = 0.5, int timing_warmup = -1);

}  // namespace beamkit
