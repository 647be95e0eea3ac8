// SPDX-License-Identifier: Apache-2.0
//
// ncap: command-line front end for the model-selection pipeline.
//
//   gen-data    write source/target splits as CSV
//   pretrain    train the candidate pool, write checkpoints + pool.json
//   finetune    attach probes, fine-tune, write observations.csv
//   beta        capacitance of one checkpoint on the target probe batch
//   fit-predict per-model fit reports from observations.csv
//   rank        ranking reports (runs pretrain/finetune when needed)
//   simulate    integrate a networked system and its mean-field reduction
//   report      plot-ready CSVs from observations and rankings
//
// Failures print {"error": {...}} on stderr and exit nonzero.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ncap/capacitance.hpp"
#include "ncap/config.hpp"
#include "ncap/errors.hpp"
#include "ncap/harness.hpp"
#include "ncap/mean_field.hpp"
#include "ncap/mlp.hpp"
#include "ncap/predictor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ncap;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::size_t> llc;
  std::string checkpoint;
  std::string observations;
  std::size_t first_layer = 0;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("missing input " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

struct Context {
  RunConfig config;
  std::string digest;
  fs::path out;
};

Context load_context(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  Context c;
  c.config = load_run_config(o.config);
  if (o.seed) c.config.seed = *o.seed;
  c.config.validate();
  c.digest = config_digest(c.config);
  // --llc changes only the analysis, not the artifacts, so it stays out of the digest
  if (!o.llc.empty()) {
    c.config.llc = o.llc;
    c.config.validate();
  }
  c.out = o.out.empty() ? c.config.output_dir : fs::path(o.out);
  return c;
}

fs::path manifest_path(const Context& c) { return c.out / "manifest.json"; }

void verify_output(const Context& c) {
  if (!fs::exists(manifest_path(c))) return;
  const json m = read_json(manifest_path(c));
  if (m.value("config_digest", std::string()) != c.digest) {
    throw DataError("config digest mismatch in " + c.out.string() + ": artifacts were made by " +
                    m.value("config_digest", std::string("?")) + ", current config is " + c.digest);
  }
}

// Records a finished stage, creating the manifest if needed.
void claim_output(const Context& c, const std::string& stage) {
  json m;
  if (fs::exists(manifest_path(c))) {
    m = read_json(manifest_path(c));
    if (m.value("config_digest", std::string()) != c.digest) {
      throw DataError("config digest mismatch in " + c.out.string() + ": artifacts were made by " +
                      m.value("config_digest", std::string("?")) + ", current config is " + c.digest);
    }
  } else {
    m = {{"config_digest", c.digest}, {"config", to_json(c.config)}, {"stages", json::array()}};
  }
  auto& stages = m["stages"];
  if (std::find(stages.begin(), stages.end(), stage) == stages.end()) stages.push_back(stage);
  write_json(manifest_path(c), m);
}

void require_stage(const Context& c, const std::string& stage) {
  if (!fs::exists(manifest_path(c))) throw DataError("missing " + manifest_path(c).string() + "; run " + stage + " first");
  const json m = read_json(manifest_path(c));
  if (m.value("config_digest", std::string()) != c.digest) {
    throw DataError("config digest mismatch in " + c.out.string() + ": artifacts were made by " +
                    m.value("config_digest", std::string("?")) + ", current config is " + c.digest);
  }
  const auto& stages = m.at("stages");
  if (std::find(stages.begin(), stages.end(), stage) == stages.end()) {
    throw DataError(c.out.string() + " has no " + stage + " output; run " + stage + " first");
  }
}

void cmd_gen_data(const Options& o) {
  const Context c = load_context(o);
  verify_output(c);
  const DataSplits src = load_dataset(c.config.source);
  const DataSplits tgt = load_dataset(c.config.target);
  const fs::path dir = c.out / "data";
  fs::create_directories(dir);
  write_csv(dir / "source_train.csv", src.train);
  write_csv(dir / "source_val.csv", src.val);
  write_csv(dir / "source_test.csv", src.test);
  write_csv(dir / "target_train.csv", tgt.train);
  write_csv(dir / "target_val.csv", tgt.val);
  write_csv(dir / "target_test.csv", tgt.test);
  claim_output(c, "gen-data");
  std::cout << json{{"command", "gen-data"}, {"out", dir.string()}, {"config_digest", c.digest}}.dump() << "\n";
}

std::vector<CandidateModel> pretrain_pool(const Context& c) {
  verify_output(c);
  const DataSplits src = load_dataset(c.config.source);
  fs::create_directories(c.out / "checkpoints");
  auto pool = build_pool(c.config, src, c.config.seed, threads_from_env());
  json models = json::array();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& m = pool[i];
    const fs::path ckpt = fs::path("checkpoints") / (m.model_id + ".json");
    save_checkpoint(c.out / ckpt, {m.pretrained, candidate_seed(c.config.seed, i), c.config.pool.pretrain_epochs});
    models.push_back({{"model_id", m.model_id},
                      {"hidden", m.arch.hidden},
                      {"checkpoint", ckpt.string()},
                      {"source_train_accuracy", m.source_train.accuracy},
                      {"source_val_accuracy", m.source_val.accuracy},
                      {"source_val_loss", m.source_val.loss}});
  }
  write_json(c.out / "pool.json", {{"config_digest", c.digest}, {"models", models}});
  claim_output(c, "pretrain");
  return pool;
}

std::vector<CandidateModel> load_pool(const Context& c) {
  require_stage(c, "pretrain");
  const json j = read_json(c.out / "pool.json");
  if (j.value("config_digest", std::string()) != c.digest) throw DataError("pool.json: config digest mismatch");
  const DataSplits src = load_dataset(c.config.source);
  std::vector<CandidateModel> pool;
  for (const auto& m : j.at("models")) {
    Checkpoint ck = load_checkpoint(c.out / m.at("checkpoint").get<std::string>());
    pool.push_back(make_candidate(m.at("model_id").get<std::string>(),
                                  {m.at("hidden").get<std::vector<std::size_t>>()}, std::move(ck.model), src));
  }
  return pool;
}

std::vector<ObservationSeries> finetune_pool(const Context& c, const std::vector<CandidateModel>& pool) {
  verify_output(c);
  const DataSplits tgt = load_dataset(c.config.target);
  std::vector<ObservationSeries> series;
  auto results = observe_pool(c.config, pool, tgt, threads_from_env());
  fs::create_directories(c.out / "checkpoints");
  for (std::size_t i = 0; i < results.size(); ++i) {
    save_checkpoint(c.out / "checkpoints" / (pool[i].model_id + ".finetuned.json"),
                    {results[i].model, finetune_options(c.config, i).seed, c.config.epochs});
    series.push_back(std::move(results[i].series));
  }
  std::ostringstream os;
  write_observations(os, series);
  write_text(c.out / "observations.csv", os.str());
  claim_output(c, "finetune");
  return series;
}

std::vector<ObservationSeries> load_observation_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("missing input " + path.string());
  return read_observations(f);
}

void cmd_pretrain(const Options& o) {
  const Context c = load_context(o);
  const auto pool = pretrain_pool(c);
  std::cout << json{{"command", "pretrain"}, {"models", pool.size()}, {"config_digest", c.digest}}.dump() << "\n";
}

void cmd_finetune(const Options& o) {
  const Context c = load_context(o);
  const auto series = finetune_pool(c, load_pool(c));
  std::cout << json{{"command", "finetune"}, {"series", series.size()}, {"config_digest", c.digest}}.dump() << "\n";
}

void cmd_beta(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  const Context c = load_context(o);
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  // Probe rows come from the task whose label count matches the checkpoint:
  // fine-tuned composites use the target, pre-trained source nets the source.
  const std::size_t n_out = ck.model.spec.layer_sizes.back();
  DataSplits data = load_dataset(c.config.target);
  std::string task = "target";
  if (data.train.n_classes != n_out) {
    data = load_dataset(c.config.source);
    task = "source";
  }
  if (data.train.n_classes != n_out || data.train.n_features() != ck.model.spec.layer_sizes.front()) {
    throw DataError("checkpoint shape matches neither the source nor the target task");
  }
  const ProbeBatch batch = make_probe_batch(data.train, c.config.probe_size, finetune_options(c.config, 0).probe_seed);
  const std::size_t sub_depth = ck.model.depth() > o.first_layer ? ck.model.depth() - o.first_layer : 0;
  json warnings = json::array();
  BetaResult b;
  if (sub_depth < kMinProbeDepth) {
    const std::string w = "probed network has L=" + std::to_string(sub_depth) +
                          " < 4; beta_eff is identically 0 below three hidden layers";
    warnings.push_back(w);
    std::cerr << json{{"warning", w}}.dump() << "\n";
    b = sub_depth >= 2 ? beta_batch(ck.model, batch, o.first_layer) : make_beta({}, batch.size());
  } else {
    b = beta_probe(ck.model, batch, o.first_layer);
  }
  const json j = {{"command", "beta"},
                  {"checkpoint", o.checkpoint},
                  {"depth", ck.model.depth()},
                  {"first_layer", o.first_layer},
                  {"task", task},
                  {"beta_eff", b.beta_eff},
                  {"numerator", b.numerator},
                  {"denominator", b.denominator},
                  {"n_samples", b.n_samples},
                  {"warnings", warnings},
                  {"config_digest", c.digest}};
  if (!o.out.empty()) write_json(fs::path(o.out) / "beta.json", j);
  std::cout << j.dump() << "\n";
}

void cmd_fit_predict(const Options& o) {
  const Context c = load_context(o);
  fs::path obs_path = o.observations;
  if (obs_path.empty()) {
    require_stage(c, "finetune");
    obs_path = c.out / "observations.csv";
  }
  const auto series = load_observation_file(obs_path);
  json summary = json::array();
  for (std::size_t llc : c.config.llc) {
    json fits = json::array();
    for (const auto& s : series) fits.push_back(to_json(fit_and_predict(s, llc)));
    write_json(c.out / ("fit_llc" + std::to_string(llc) + ".json"), {{"config_digest", c.digest}, {"llc", llc}, {"fits", fits}});
    summary.push_back({{"llc", llc}, {"fits", fits.size()}});
  }
  std::cout << json{{"command", "fit-predict"}, {"reports", summary}, {"config_digest", c.digest}}.dump() << "\n";
}

std::vector<ObservationSeries> series_for_ranking(const Context& c) {
  if (fs::exists(manifest_path(c))) {
    const json m = read_json(manifest_path(c));
    const auto& stages = m.value("stages", json::array());
    if (std::find(stages.begin(), stages.end(), "finetune") != stages.end()) {
      require_stage(c, "finetune");
      return load_observation_file(c.out / "observations.csv");
    }
    if (std::find(stages.begin(), stages.end(), "pretrain") != stages.end()) return finetune_pool(c, load_pool(c));
  }
  return finetune_pool(c, pretrain_pool(c));
}

json rank_json(const Context& c, std::span<const ObservationSeries> series, std::span<const double> finals,
               std::size_t llc) {
  RankingReport rep = rank_models(series, finals, llc);
  rep.epochs = c.config.epochs;
  rep.seed = c.config.seed;
  rep.config_digest = c.digest;
  return to_json(rep);
}

void cmd_rank(const Options& o) {
  const Context c = load_context(o);
  const auto series = series_for_ranking(c);
  const auto finals = true_finals(series, c.config.epochs);
  json reports = json::array();
  for (std::size_t llc : c.config.llc) {
    json r = rank_json(c, series, finals, llc);
    write_json(c.out / ("ranking_llc" + std::to_string(llc) + ".json"), r);
    reports.push_back(std::move(r));
  }
  const json full = rank_json(c, series, finals, c.config.epochs);
  write_json(c.out / "ranking_full.json", full);
  const json all = {{"config_digest", c.digest}, {"reports", reports}, {"full_curve", full}};
  write_json(c.out / "ranking.json", all);
  claim_output(c, "rank");
  std::cout << all.dump() << "\n";
}

void cmd_simulate(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  const json j = read_json(o.config);
  const SystemConfig sys = parse_system_config(j);
  const std::string digest = sha256_hex(j.dump());
  const Trajectory full = simulate(sys.system, sys.x0, sys.options);
  double mean_final = 0.0;
  for (double v : full.x_final) mean_final += v;
  mean_final /= static_cast<double>(full.x_final.size());
  double mean_x0 = 0.0;
  for (double v : sys.x0) mean_x0 += v;
  mean_x0 /= static_cast<double>(sys.x0.size());

  json report = {{"command", "simulate"},
                 {"n", sys.system.size()},
                 {"beta_eff", beta_eff(sys.system)},
                 {"status", full.status == SimulationStatus::kConverged ? "converged"
                            : full.status == SimulationStatus::kDiverged ? "diverged"
                                                                         : "time_limit"},
                 {"t_final", full.times.back()},
                 {"mean_x_final", mean_final},
                 {"config_digest", digest}};
  const fs::path out = o.out.empty() ? fs::path("out/simulate") : fs::path(o.out);
  std::ostringstream traj;
  write_trajectory_csv(traj, full);
  write_text(out / "trajectory.csv", traj.str());
  if (sys.system.self.homogeneous && sys.system.coupling.homogeneous) {
    const MeanFieldReduction red = reduce_mean_field(sys.system, mean_x0, sys.options);
    std::ostringstream rcsv;
    write_reduced_csv(rcsv, red.reduced);
    write_text(out / "reduced.csv", rcsv.str());
    report["x_eff"] = red.x_eff;
    report["relative_error"] = std::abs(red.x_eff - mean_final) / std::max(std::abs(mean_final), 1e-300);
  } else {
    report["x_eff"] = nullptr;
    report["warnings"] = {"per-node dynamics: mean-field reduction skipped"};
  }
  write_json(out / "simulation.json", report);
  std::cout << report.dump() << "\n";
}

void cmd_report(const Options& o) {
  const Context c = load_context(o);
  require_stage(c, "finetune");
  const auto series = load_observation_file(c.out / "observations.csv");
  const fs::path dir = c.out / "report";
  std::ostringstream acc, beta;
  acc << "model_id,epoch,train_acc,val_acc\n" << std::setprecision(17);
  beta << "model_id,epoch,beta_eff\n" << std::setprecision(17);
  for (const auto& s : series) {
    for (const auto& r : s.records()) {
      acc << s.model_id() << ',' << r.epoch << ',' << r.train_accuracy << ',' << r.val_accuracy << '\n';
      beta << s.model_id() << ',' << r.epoch << ',' << r.beta_eff << '\n';
    }
  }
  write_text(dir / "accuracy_curves.csv", acc.str());
  write_text(dir / "beta_curves.csv", beta.str());
  const auto finals = true_finals(series, c.config.epochs);
  json files = {"accuracy_curves.csv", "beta_curves.csv"};
  std::vector<std::size_t> llcs = c.config.llc;
  llcs.push_back(c.config.epochs);
  for (std::size_t llc : llcs) {
    const RankingReport rep = rank_models(series, finals, llc);
    std::ostringstream sc;
    sc << "model_id,true_final,ours,ours_std,lsv,bsv,t0\n" << std::setprecision(17);
    for (const auto& m : rep.models) {
      sc << m.model_id << ',' << m.true_final << ',' << m.ours << ',' << m.ours_std << ',' << m.lsv << ',' << m.bsv
         << ',' << m.t0 << '\n';
    }
    const std::string name = "scatter_llc" + std::to_string(llc) + ".csv";
    write_text(dir / name, sc.str());
    files.push_back(name);
  }
  claim_output(c, "report");
  std::cout << json{{"command", "report"}, {"out", dir.string()}, {"files", files}, {"config_digest", c.digest}}.dump()
            << "\n";
}

int fail(const std::string& type, const std::string& message, int code) {
  std::cerr << json{{"error", {{"type", type}, {"message", message}}}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural capacitance model-selection toolkit"};
  app.require_subcommand(1);
  Options o;
  const auto common = [&](CLI::App* sub, bool needs_config = true) {
    auto* cfg = sub->add_option("--config", o.config, "run config JSON (system JSON for simulate)");
    if (needs_config) cfg->required();
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--out", o.out, "output directory");
  };
  auto* gen = app.add_subcommand("gen-data", "write dataset splits as CSV");
  common(gen);
  auto* pre = app.add_subcommand("pretrain", "train the candidate pool");
  common(pre);
  auto* fine = app.add_subcommand("finetune", "fine-tune with frozen probes and log beta_eff");
  common(fine);
  auto* beta = app.add_subcommand("beta", "beta_eff of a checkpoint");
  common(beta);
  beta->add_option("--checkpoint", o.checkpoint, "checkpoint JSON")->required();
  beta->add_option("--first-layer", o.first_layer, "probe the layers above this one");
  auto* fit = app.add_subcommand("fit-predict", "fit reports from observations");
  common(fit);
  fit->add_option("--observations", o.observations, "observations CSV");
  fit->add_option("--llc", o.llc, "observed prefix lengths")->delimiter(',');
  auto* rank = app.add_subcommand("rank", "rank the pool");
  common(rank);
  rank->add_option("--llc", o.llc, "observed prefix lengths")->delimiter(',');
  auto* sim = app.add_subcommand("simulate", "networked dynamics and mean-field reduction");
  common(sim);
  auto* rep = app.add_subcommand("report", "plot-ready CSVs");
  common(rep);
  rep->add_option("--llc", o.llc, "observed prefix lengths")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*gen) cmd_gen_data(o);
    else if (*pre) cmd_pretrain(o);
    else if (*fine) cmd_finetune(o);
    else if (*beta) cmd_beta(o);
    else if (*fit) cmd_fit_predict(o);
    else if (*rank) cmd_rank(o);
    else if (*sim) cmd_simulate(o);
    else if (*rep) cmd_report(o);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const DataError& e) {
    return fail("data", e.what(), 3);
  } catch (const DepthError& e) {
    return fail("depth", e.what(), 4);
  } catch (const DivergenceError& e) {
    return fail("divergence", e.what(), 5);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
