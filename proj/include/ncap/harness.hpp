// SPDX-License-Identifier: Apache-2.0
//
// Model-selection experiment: pre-train a pool of MLP backbones on a source
// task, put a frozen random probe head on each, fine-tune on the target task
// while logging beta_eff and validation accuracy, then rank the candidates by
// the predicted accuracy at beta_eff = 0 and by the LSV/BSV heuristics.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ncap/capacitance.hpp"
#include "ncap/config.hpp"
#include "ncap/mlp.hpp"
#include "ncap/predictor.hpp"

namespace ncap {

struct CandidateModel {
  std::string model_id;
  Architecture arch;
  MlpModel pretrained;  // full source net, output layer included
  MlpModel backbone;    // pretrained minus its output layer
  Evaluation source_train;
  Evaluation source_val;
};

// Per-candidate seed derived from the run seed and candidate index.
std::uint64_t candidate_seed(std::uint64_t run_seed, std::size_t index);

// Drops the output layer. Throws std::invalid_argument when L < 2.
MlpModel remove_output_layer(const MlpModel& model);

CandidateModel make_candidate(std::string model_id, const Architecture& arch, MlpModel pretrained,
                              const DataSplits& source);

// Pre-trains one source net per architecture. Deterministic per seed; runs up
// to `threads` candidates at once.
std::vector<CandidateModel> build_pool(const RunConfig& config, const DataSplits& source, std::uint64_t seed,
                                       std::size_t threads = 1);

// Backbone layers (trainable) followed by Kaiming-initialized, frozen probe
// layers ending in n_classes outputs. The first probe layer takes the
// backbone's last width, so a mismatch cannot arise; an empty backbone throws.
MlpModel attach_ncp(const MlpModel& backbone, const NcpSpec& ncp, std::size_t n_classes, std::uint64_t seed);

struct FinetuneOptions {
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  std::size_t probe_size = 256;
  std::uint64_t probe_seed = 0;
};

struct FinetuneResult {
  ObservationSeries series;
  MlpModel model;
};

// Trains the composite on target.train; after every epoch (and before the
// first) records beta_eff of the layers above `probe_first_layer` on a fixed
// probe batch drawn from target.train, plus train/val metrics.
FinetuneResult finetune_and_observe(const MlpModel& composite, std::size_t probe_first_layer,
                                    const DataSplits& target, const FinetuneOptions& options,
                                    const std::string& model_id, SeriesMeta meta = {});

struct ModelRanking {
  std::string model_id;
  double true_final = 0.0;
  double ours = 0.0;
  double ours_std = 0.0;
  std::size_t t0 = 0;
  double lsv = 0.0;
  double bsv = 0.0;
};

struct RankingReport {
  std::size_t llc = 0;
  std::size_t epochs = 0;  // T
  std::vector<ModelRanking> models;
  RankCorrelation rho_ours;
  RankCorrelation rho_lsv;
  RankCorrelation rho_bsv;
  std::uint64_t seed = 0;
  std::string config_digest;
};

// Truncates each series to epochs 1..llc, predicts with BIC-selected windows
// and the baselines, and correlates each method with true_finals. Throws
// std::invalid_argument with fewer than two series or llc beyond the data.
RankingReport rank_models(std::span<const ObservationSeries> series, std::span<const double> true_finals,
                          std::size_t llc);

nlohmann::json to_json(const RankingReport& report);

struct ExperimentResult {
  std::vector<CandidateModel> pool;
  std::vector<ObservationSeries> series;
  std::vector<double> true_finals;  // val accuracy at epoch T
  std::vector<RankingReport> reports;  // one per config.llc entry
};

FinetuneOptions finetune_options(const RunConfig& config, std::size_t index);

// Fine-tunes every candidate of the pool on the target task.
std::vector<FinetuneResult> observe_pool(const RunConfig& config, std::span<const CandidateModel> pool,
                                         const DataSplits& target, std::size_t threads = 1);

std::vector<double> true_finals(std::span<const ObservationSeries> series, std::size_t epochs);

// Whole pipeline in memory. Reports carry config_digest(config).
ExperimentResult run_experiment(const RunConfig& config, std::size_t threads = 1);

// NC_THREADS if set to a positive integer, otherwise 1.
std::size_t threads_from_env();

// Runs job(i) for i in [0, n) on up to `threads` workers. The first exception
// is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job);

}  // namespace ncap
