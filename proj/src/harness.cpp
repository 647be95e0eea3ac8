// SPDX-License-Identifier: Apache-2.0

#include "ncap/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace ncap {

std::uint64_t candidate_seed(std::uint64_t run_seed, std::size_t index) {
  // splitmix64 step, so neighbouring indices get unrelated streams
  std::uint64_t z = run_seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

std::size_t threads_from_env() {
  const char* v = std::getenv("NC_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) return 1;
  return static_cast<std::size_t>(n);
}

MlpModel remove_output_layer(const MlpModel& model) {
  model.validate();
  if (model.depth() < 2) throw std::invalid_argument("remove_output_layer: need L >= 2");
  MlpModel out;
  out.spec.layer_sizes.assign(model.spec.layer_sizes.begin(), model.spec.layer_sizes.end() - 1);
  out.spec.frozen.assign(model.spec.frozen.begin(), model.spec.frozen.end() - 1);
  out.weights.assign(model.weights.begin(), model.weights.end() - 1);
  return out;
}

CandidateModel make_candidate(std::string model_id, const Architecture& arch, MlpModel pretrained,
                              const DataSplits& source) {
  CandidateModel c;
  c.model_id = std::move(model_id);
  c.arch = arch;
  c.source_train = evaluate(pretrained, source.train);
  c.source_val = evaluate(pretrained, source.val);
  c.backbone = remove_output_layer(pretrained);
  c.pretrained = std::move(pretrained);
  return c;
}

std::vector<CandidateModel> build_pool(const RunConfig& config, const DataSplits& source, std::uint64_t seed,
                                       std::size_t threads) {
  const auto& archs = config.pool.architectures;
  std::vector<CandidateModel> pool(archs.size());
  parallel_for(archs.size(), threads, [&](std::size_t i) {
    const auto& arch = archs[i];
    if (arch.hidden.empty()) throw std::invalid_argument("build_pool: architecture with L < 2");
    std::vector<std::size_t> sizes{source.train.n_features()};
    sizes.insert(sizes.end(), arch.hidden.begin(), arch.hidden.end());
    sizes.push_back(source.train.n_classes);
    const std::uint64_t s = candidate_seed(seed, i);
    MlpModel init = init_kaiming_normal(MlpSpec::trainable(sizes), s);
    TrainOptions opt;
    opt.learning_rate = config.pool.pretrain_learning_rate;
    opt.batch_size = config.batch_size;
    opt.epochs = config.pool.pretrain_epochs;
    opt.seed = s ^ 0x5eedULL;
    TrainResult r = train(std::move(init), source.train, source.val, opt);
    pool[i] = make_candidate("m" + std::to_string(i) + "-" + arch.id(), arch, std::move(r.model), source);
  });
  return pool;
}

MlpModel attach_ncp(const MlpModel& backbone, const NcpSpec& ncp, std::size_t n_classes, std::uint64_t seed) {
  backbone.validate();
  if (ncp.hidden.empty()) throw std::invalid_argument("attach_ncp: empty probe");
  if (n_classes < 2) throw std::invalid_argument("attach_ncp: need at least two classes");
  std::vector<std::size_t> head_sizes{backbone.spec.layer_sizes.back()};
  head_sizes.insert(head_sizes.end(), ncp.hidden.begin(), ncp.hidden.end());
  head_sizes.push_back(n_classes);
  const MlpModel head = init_kaiming_normal(MlpSpec::trainable(head_sizes), seed);

  MlpModel out;
  out.spec.layer_sizes = backbone.spec.layer_sizes;
  out.spec.layer_sizes.insert(out.spec.layer_sizes.end(), head_sizes.begin() + 1, head_sizes.end());
  out.spec.frozen.assign(backbone.depth(), false);
  out.spec.frozen.resize(out.spec.layer_sizes.size() - 1, true);
  out.weights = backbone.weights;
  out.weights.insert(out.weights.end(), head.weights.begin(), head.weights.end());
  out.validate();
  return out;
}

FinetuneResult finetune_and_observe(const MlpModel& composite, std::size_t probe_first_layer,
                                    const DataSplits& target, const FinetuneOptions& options,
                                    const std::string& model_id, SeriesMeta meta) {
  const ProbeBatch batch = make_probe_batch(target.train, options.probe_size, options.probe_seed);
  TrainOptions opt;
  opt.learning_rate = options.learning_rate;
  opt.batch_size = options.batch_size;
  opt.epochs = options.epochs;
  opt.seed = options.seed;
  opt.probe = [&](const MlpModel& m, std::size_t) { return beta_probe(m, batch, probe_first_layer).beta_eff; };
  TrainResult r = train(composite, target.train, target.val, opt);

  meta.learning_rate = options.learning_rate;
  meta.seed = options.seed;
  FinetuneResult out{ObservationSeries(model_id, std::move(meta)), std::move(r.model)};
  for (const auto& rec : r.curve.records()) {
    out.series.append({rec.epoch, rec.beta_eff.value_or(0.0), rec.train_loss, rec.train_accuracy, rec.val_accuracy});
  }
  return out;
}

RankingReport rank_models(std::span<const ObservationSeries> series, std::span<const double> finals,
                          std::size_t llc) {
  if (series.size() < 2) throw std::invalid_argument("rank_models: need at least two candidates");
  if (finals.size() != series.size()) throw std::invalid_argument("rank_models: one true final per series");
  RankingReport report;
  report.llc = llc;
  std::vector<double> ours, lsv, bsv;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const FitReport fit = fit_and_predict(series[i], llc);
    std::vector<double> prefix;
    for (const auto& r : series[i].window(1, llc)) prefix.push_back(r.val_accuracy);
    ModelRanking m;
    m.model_id = series[i].model_id();
    m.true_final = finals[i];
    m.ours = fit.prediction.I_star;
    m.ours_std = fit.prediction.std;
    m.t0 = fit.selection.t0;
    m.lsv = baseline_lsv(prefix);
    m.bsv = baseline_bsv(prefix);
    ours.push_back(m.ours);
    lsv.push_back(m.lsv);
    bsv.push_back(m.bsv);
    report.models.push_back(std::move(m));
  }
  report.rho_ours = spearman(ours, finals);
  report.rho_lsv = spearman(lsv, finals);
  report.rho_bsv = spearman(bsv, finals);
  return report;
}

nlohmann::json to_json(const RankingReport& report) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : report.models) {
    models.push_back({{"model_id", m.model_id},
                      {"true_final", m.true_final},
                      {"I_star", m.ours},
                      {"I_star_std", m.ours_std},
                      {"t0", m.t0},
                      {"lsv", m.lsv},
                      {"bsv", m.bsv}});
  }
  const auto rho = [](const RankCorrelation& r) { return nlohmann::json{{"rho", r.rho}, {"degenerate", r.degenerate}}; };
  return {{"llc", report.llc},
          {"epochs", report.epochs},
          {"models", models},
          {"spearman", {{"ours", rho(report.rho_ours)}, {"lsv", rho(report.rho_lsv)}, {"bsv", rho(report.rho_bsv)}}},
          {"seed", report.seed},
          {"config_digest", report.config_digest}};
}

FinetuneOptions finetune_options(const RunConfig& config, std::size_t index) {
  FinetuneOptions o;
  o.learning_rate = config.learning_rate;
  o.batch_size = config.batch_size;
  o.epochs = config.epochs;
  o.seed = candidate_seed(config.seed ^ 0xf1e7ULL, index);
  o.probe_size = config.probe_size;
  // Same probe rows for every candidate.
  o.probe_seed = config.seed ^ 0x9806ULL;
  return o;
}

std::vector<FinetuneResult> observe_pool(const RunConfig& config, std::span<const CandidateModel> pool,
                                         const DataSplits& target, std::size_t threads) {
  std::vector<FinetuneResult> out(pool.size());
  parallel_for(pool.size(), threads, [&](std::size_t i) {
    const auto& c = pool[i];
    const MlpModel composite =
        attach_ncp(c.backbone, config.ncp, target.train.n_classes, candidate_seed(config.ncp.seed, i));
    SeriesMeta meta;
    meta.dataset = config.target.source;
    out[i] = finetune_and_observe(composite, c.backbone.depth(), target, finetune_options(config, i), c.model_id,
                                  std::move(meta));
  });
  return out;
}

std::vector<double> true_finals(std::span<const ObservationSeries> series, std::size_t epochs) {
  std::vector<double> out;
  for (const auto& s : series) out.push_back(s.val_accuracy_at(epochs));
  return out;
}

ExperimentResult run_experiment(const RunConfig& config, std::size_t threads) {
  config.validate();
  const DataSplits source = load_dataset(config.source);
  const DataSplits target = load_dataset(config.target);
  if (source.train.n_features() != target.train.n_features()) {
    throw std::invalid_argument("run_experiment: source and target feature counts differ");
  }
  ExperimentResult r;
  r.pool = build_pool(config, source, config.seed, threads);
  for (auto& f : observe_pool(config, r.pool, target, threads)) r.series.push_back(std::move(f.series));
  r.true_finals = true_finals(r.series, config.epochs);
  const std::string digest = config_digest(config);
  for (std::size_t llc : config.llc) {
    RankingReport rep = rank_models(r.series, r.true_finals, llc);
    rep.epochs = config.epochs;
    rep.seed = config.seed;
    rep.config_digest = digest;
    r.reports.push_back(std::move(rep));
  }
  return r;
}

}  // namespace ncap
