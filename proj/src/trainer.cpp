#include "beamkit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

#include "beamkit/adam.hpp"
#include "beamkit/crc64.hpp"
#include "beamkit/io_util.hpp"
#include "beamkit/rng.hpp"

namespace beamkit {

using nlohmann::json;

namespace {

// Stream indices for the trainer's derived RNG streams.
constexpr std::uint64_t kValSplitStream = 0x76616c73ull;  // "vals"
constexpr std::uint64_t kInitStream = 0x696e6974ull;      // "init"
constexpr std::uint64_t kEpochStreamBase = 0x65700000ull; // "ep.."

void shuffle_indices(std::vector<std::size_t>& idx, Philox& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.next_below(i)]);
}

Scheme to_scheme(TrainScheme s) {
  return s == TrainScheme::HZM ? Scheme::HZM : Scheme::MMSE;
}

}  // namespace

const char* train_scheme_name(TrainScheme s) {
  switch (s) {
    case TrainScheme::MMSE: return "mmse";
    case TrainScheme::HZM: return "hzm";
    case TrainScheme::Both: return "both";
  }
  return "?";
}

TrainScheme train_scheme_from_name(const std::string& name) {
  if (name == "mmse") return TrainScheme::MMSE;
  if (name == "hzm") return TrainScheme::HZM;
  if (name == "both") return TrainScheme::Both;
  throw ConfigError("unknown scheme: " + name);
}

const char* train_strategy_name(TrainStrategy s) {
  return s == TrainStrategy::Constant ? "constant" : "various";
}

TrainStrategy train_strategy_from_name(const std::string& name) {
  if (name == "constant") return TrainStrategy::Constant;
  if (name == "various") return TrainStrategy::Various;
  throw ConfigError("unknown strategy: " + name);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0)) throw ConfigError("lr must be > 0");
  if (!(lambda >= 0)) throw ConfigError("lambda must be >= 0");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (!(p_max > 0) || p_circuit < 0) throw ConfigError("bad power constants");
}

namespace {

void check_scheme_supported(const ArchSpec& arch, TrainScheme scheme) {
  if ((scheme == TrainScheme::MMSE || scheme == TrainScheme::Both) &&
      !arch.has_mmse_head())
    throw ConfigError("architecture has no MMSE head (schemes=" +
                      arch.schemes + ")");
  if ((scheme == TrainScheme::HZM || scheme == TrainScheme::Both) &&
      !arch.has_hzm_head())
    throw ConfigError("architecture has no HZM head (schemes=" +
                      arch.schemes + ")");
}

// Loss graph for one homogeneous-K batch; returns the scalar node.
ad::Var build_loss(ad::Tape& tape, GnnGraph& graph,
                   const std::vector<const ChannelSet*>& batch,
                   const SystemConfig& cfg, double lambda,
                   TrainScheme scheme) {
  ad::Var total{};
  auto add_scheme = [&](Scheme s) {
    const auto vars = graph.scheme_forward_batch(batch, cfg, s);
    ad::Mat xi(cfg.rate_floors.size(), 1);
    for (Eigen::Index k = 0; k < cfg.rate_floors.size(); ++k)
      xi(k, 0) = cfg.rate_floors[k];
    ad::Var sum{};
    for (const auto& v : vars) {
      ad::Var shortfall =
          tape.relu(tape.sub(tape.constant_real(xi), v.rates));
      ad::Var penalty = tape.axpb(tape.reduce_sum(shortfall), lambda, 0.0);
      ad::Var l = tape.add(tape.axpb(v.ee, -1.0, 0.0), penalty);
      sum = sum.valid() ? tape.add(sum, l) : l;
    }
    ad::Var mean = tape.axpb(sum, 1.0 / static_cast<double>(batch.size()), 0.0);
    total = total.valid() ? tape.add(total, mean) : mean;
  };
  if (scheme == TrainScheme::MMSE || scheme == TrainScheme::Both)
    add_scheme(Scheme::MMSE);
  if (scheme == TrainScheme::HZM || scheme == TrainScheme::Both)
    add_scheme(Scheme::HZM);
  return total;
}

}  // namespace

double loss(const std::vector<const ChannelSet*>& batch, GnnParams& params,
            const SystemConfig& cfg, double lambda, TrainScheme scheme) {
  if (batch.empty()) throw InvalidInputError("loss: empty batch");
  check_scheme_supported(params.arch, scheme);
  ad::Tape tape;
  GnnGraph graph(tape, params, /*training=*/false);
  const ad::Var l = build_loss(tape, graph, batch, cfg, lambda, scheme);
  return tape.value(l);
}

TrainResult train(const Dataset& data, const TrainConfig& cfg,
                  const ArchSpec& arch) {
  cfg.validate();
  arch.validate();
  check_scheme_supported(arch, cfg.scheme);
  if (data.spec.kind == DatasetKind::TEST)
    throw ConfigError("dataset kind is test-only; cannot train on it");
  if (data.samples.empty()) throw ConfigError("dataset is empty");

  // Distinct user counts present in the data.
  std::map<int, std::vector<std::size_t>> by_k;
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    by_k[data.samples[i].k_users()].push_back(i);
  const bool various_data = by_k.size() > 1;
  if (cfg.strategy == TrainStrategy::Various && !various_data)
    throw ConfigError("various-input strategy needs a various-K dataset");
  if (cfg.strategy == TrainStrategy::Constant && various_data)
    throw ConfigError("constant-input strategy needs a single-K dataset");
  if (arch.trunk == TrunkKind::MLP) {
    if (various_data)
      throw ConfigError("MLP trunk cannot train on a various-K dataset");
    if (by_k.begin()->first != arch.mlp_k)
      throw ConfigError("MLP trunk K does not match the dataset");
  }

  // Held-out validation split: 10% of the samples, fixed by the seed.
  std::vector<std::size_t> perm(data.samples.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Philox split_rng(Philox::split(cfg.seed, kValSplitStream));
  shuffle_indices(perm, split_rng);
  const std::size_t n_val = std::max<std::size_t>(1, perm.size() / 10);
  const std::size_t n_train = perm.size() - n_val;
  if (n_train == 0) throw ConfigError("dataset too small to split");
  std::vector<std::size_t> val_idx(perm.begin() + n_train, perm.end());
  std::vector<std::size_t> train_idx(perm.begin(), perm.begin() + n_train);

  GnnParams params = init_params(arch, Philox::split(cfg.seed, kInitStream));
  Adam adam(AdamOptions{cfg.lr, 0.9, 0.999, 1e-8});

  auto config_for = [&](int k) {
    return make_config(data.spec, k, cfg.p_max, cfg.p_circuit);
  };

  auto eval_loss_on = [&](const std::vector<std::size_t>& idx) {
    double acc = 0.0;
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i : idx) groups[data.samples[i].k_users()].push_back(i);
    for (auto& [k, ids] : groups) {
      const SystemConfig sys = config_for(k);
      for (std::size_t at = 0; at < ids.size();
           at += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t n =
            std::min<std::size_t>(cfg.batch_size, ids.size() - at);
        std::vector<const ChannelSet*> batch;
        for (std::size_t j = 0; j < n; ++j)
          batch.push_back(&data.samples[ids[at + j]]);
        ad::Tape tape;
        GnnGraph graph(tape, params, /*training=*/false);
        acc += tape.value(
                   build_loss(tape, graph, batch, sys, cfg.lambda,
                              cfg.scheme)) *
               static_cast<double>(n);
      }
    }
    return acc / static_cast<double>(idx.size());
  };

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  result.best = params;
  result.best_epoch = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Per-K queues, reshuffled every epoch; batches stay homogeneous in K
    // and cycle through the available user counts.
    Philox epoch_rng(Philox::split(cfg.seed, kEpochStreamBase + epoch));
    std::map<int, std::vector<std::size_t>> queues;
    for (std::size_t i : train_idx)
      queues[data.samples[i].k_users()].push_back(i);
    for (auto& [k, q] : queues) shuffle_indices(q, epoch_rng);
    std::map<int, std::size_t> heads;
    for (auto& [k, q] : queues) heads[k] = 0;

    double epoch_loss_sum = 0.0;
    bool all_drained = false;
    while (!all_drained) {
      all_drained = true;
      for (auto& [k, q] : queues) {
        std::size_t& head = heads[k];
        if (head >= q.size()) continue;
        all_drained = false;
        const std::size_t n =
            std::min<std::size_t>(cfg.batch_size, q.size() - head);
        std::vector<const ChannelSet*> batch;
        for (std::size_t j = 0; j < n; ++j)
          batch.push_back(&data.samples[q[head + j]]);
        head += n;

        const SystemConfig sys = config_for(k);
        ad::Tape tape;
        GnnGraph graph(tape, params, /*training=*/true);
        const ad::Var loss_var =
            build_loss(tape, graph, batch, sys, cfg.lambda, cfg.scheme);
        const double loss_value = tape.value(loss_var);
        if (!std::isfinite(loss_value)) {
          result.aborted = true;
          result.abort_reason = "non-finite loss at epoch " +
                                std::to_string(epoch);
          return result;
        }
        try {
          tape.backward(loss_var);
          adam.step(graph.param_views(), graph.grad_views());
        } catch (const NumericError& e) {
          result.aborted = true;
          result.abort_reason = e.what();
          return result;
        }
        epoch_loss_sum += loss_value * static_cast<double>(n);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss_sum / static_cast<double>(n_train);
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      rec.val_loss = eval_loss_on(val_idx);
      if (rec.val_loss < best_val) {
        best_val = rec.val_loss;
        result.best = params;
        result.best_epoch = epoch;
      }
    } else {
      rec.val_loss = std::numeric_limits<double>::quiet_NaN();
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    result.history.push_back(rec);
  }

  // Provenance into the checkpoint.
  std::vector<double> losses;
  for (const auto& r : result.history) {
    losses.push_back(r.train_loss);
    losses.push_back(r.val_loss);
  }
  char digest[17];
  std::snprintf(digest, sizeof(digest), "%016llx",
                static_cast<unsigned long long>(crc64(
                    losses.data(), losses.size() * sizeof(double))));
  json meta{{"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"lr", cfg.lr},
            {"lambda", cfg.lambda},
            {"scheme", train_scheme_name(cfg.scheme)},
            {"strategy", train_strategy_name(cfg.strategy)},
            {"seed", cfg.seed},
            {"dataset_tag", cfg.dataset_tag},
            {"best_epoch", result.best_epoch},
            {"history_digest", digest}};
  result.best.metadata_json = meta.dump();
  return result;
}

void write_epoch_log(const std::vector<EpochRecord>& history,
                     const std::string& path) {
  std::ostringstream out;
  for (const auto& r : history) {
    json line{{"epoch", r.epoch},
              {"train_loss", r.train_loss},
              {"wall_ms", r.wall_ms}};
    if (std::isfinite(r.val_loss)) line["val_loss"] = r.val_loss;
    out << line.dump() << "\n";
  }
  write_text_atomic(path, out.str());
}

void write_loss_csv(const std::vector<EpochRecord>& history,
                    const std::string& path) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n";
  out.precision(17);
  for (const auto& r : history) {
    out << r.epoch << "," << r.train_loss << ",";
    if (std::isfinite(r.val_loss)) out << r.val_loss;
    out << "\n";
  }
  write_text_atomic(path, out.str());
}

std::string EvalReport::to_json() const {
  auto breakdown = [](const SchemeBreakdown& b) {
    return json{{"selected_count", b.selected_count},
                {"feasible_count", b.feasible_count},
                {"ee_ratio_mean", b.ee_ratio_mean}};
  };
  json j{{"mode", mode},
         {"sample_count", sample_count},
         {"feasible_count", feasible_count},
         {"feasibility_rate", feasibility_rate},
         {"per_scheme", {{"mmse", breakdown(mmse)}, {"hzm", breakdown(hzm)}}}};
  if (ee_ratio_mean)
    j["ee_ratio_mean"] = *ee_ratio_mean;
  else
    j["ee_ratio_mean"] = nullptr;  // unavailable, not zero
  if (inference_mean_s) {
    j["inference_mean_s"] = *inference_mean_s;
    j["inference_median_s"] = *inference_median_s;
  }
  return j.dump(2);
}

EvalReport evaluate(const Dataset& data, const GnnParams& params,
                    ForwardMode mode, double p_max, double p_circuit,
                    int timing_warmup) {
  if (data.samples.empty()) throw InvalidInputError("evaluate: empty dataset");
  if ((mode == ForwardMode::MmseOnly || mode == ForwardMode::Select) &&
      !params.arch.has_mmse_head())
    throw ConfigError("architecture has no MMSE head");
  if ((mode == ForwardMode::HzmOnly || mode == ForwardMode::Select) &&
      !params.arch.has_hzm_head())
    throw ConfigError("architecture has no HZM head");

  EvalReport report;
  report.mode = mode == ForwardMode::MmseOnly
                    ? "mmse"
                    : (mode == ForwardMode::HzmOnly ? "hzm" : "select");
  report.sample_count = static_cast<int>(data.samples.size());

  double ratio_sum = 0.0;
  int ratio_count = 0;
  double mmse_ratio_sum = 0.0, hzm_ratio_sum = 0.0;
  int mmse_ratio_count = 0, hzm_ratio_count = 0;

  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const ChannelSet& sample = data.samples[i];
    const SystemConfig cfg =
        make_config(data.spec, sample.k_users(), p_max, p_circuit);
    const ForwardOutput out =
        params.arch.trunk == TrunkKind::MLP
            ? mlp_forward(sample, cfg, params)
            : full_forward(sample, cfg, params, mode);
    const SchemeOutput& sel = out.selected_output();
    SchemeBreakdown& bucket =
        out.selected == Scheme::MMSE ? report.mmse : report.hzm;
    bucket.selected_count += 1;
    if (out.selected_feasible) {
      report.feasible_count += 1;
      bucket.feasible_count += 1;
      if (data.has_labels() && data.labels[i] > 0) {
        const double ratio = sel.perf.ee / data.labels[i];
        ratio_sum += ratio;
        ratio_count += 1;
        if (out.selected == Scheme::MMSE) {
          mmse_ratio_sum += ratio;
          mmse_ratio_count += 1;
        } else {
          hzm_ratio_sum += ratio;
          hzm_ratio_count += 1;
        }
      }
    }
  }
  report.feasibility_rate =
      static_cast<double>(report.feasible_count) / report.sample_count;
  if (ratio_count > 0) report.ee_ratio_mean = ratio_sum / ratio_count;
  if (mmse_ratio_count > 0)
    report.mmse.ee_ratio_mean = mmse_ratio_sum / mmse_ratio_count;
  if (hzm_ratio_count > 0)
    report.hzm.ee_ratio_mean = hzm_ratio_sum / hzm_ratio_count;

  if (timing_warmup >= 0) {
    const int n = report.sample_count;
    auto run_one = [&](std::size_t i) {
      const ChannelSet& sample = data.samples[i];
      const SystemConfig cfg =
          make_config(data.spec, sample.k_users(), p_max, p_circuit);
      if (params.arch.trunk == TrunkKind::MLP)
        (void)mlp_forward(sample, cfg, params);
      else
        (void)full_forward(sample, cfg, params, mode);
    };
    for (int i = 0; i < std::min(timing_warmup, n); ++i)
      run_one(static_cast<std::size_t>(i));
    std::vector<double> times;
    times.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      run_one(static_cast<std::size_t>(i));
      times.push_back(std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count());
    }
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    report.inference_mean_s =
        std::accumulate(times.begin(), times.end(), 0.0) / times.size();
    report.inference_median_s = sorted[sorted.size() / 2];
  }
  return report;
}

}  // namespace beamkit
