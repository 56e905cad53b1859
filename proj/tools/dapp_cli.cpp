// Apache License, Version 2.0, refer to LICENSE.txt
//
// Command-line front end: simulate synthetic dual-stimulus datasets, fit the
// admixture model, draw posterior-predictive summaries and report recovery
// against ground truth.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "dapp/dapp.hpp"

namespace fs = std::filesystem;
using namespace dapp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
  return buf;
}

// Written with status "running" before the work starts and finalized with
// timings afterwards.
class Manifest {
 public:
  Manifest(fs::path dir, const std::string& command, json config, json inputs)
      : path_(std::move(dir)), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(path_);
    j_["command"] = command;
    j_["version"] = kVersion;
    j_["config"] = std::move(config);
    j_["inputs"] = std::move(inputs);
    j_["status"] = "running";
    j_["started_at"] = iso_now();
    write();
  }

  void add_output(const std::string& key, const std::string& value) {
    j_["outputs"][key] = value;
  }

  void finish() {
    const auto wall = std::chrono::steady_clock::now() - start_;
    j_["status"] = "complete";
    j_["finished_at"] = iso_now();
    j_["wall_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(wall).count();
    write();
  }

 private:
  void write() const {
    write_text_file(path_ / "manifest.json", j_.dump(2) + "\n");
  }

  fs::path path_;
  json j_;
  std::chrono::steady_clock::time_point start_;
};

int pool_size(int wanted) {
  int pool = static_cast<int>(std::thread::hardware_concurrency());
  if (pool < 1) pool = 1;
  if (const char* env = std::getenv("DAPP_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) pool = std::min(pool, cap);
  }
  return std::min(pool, std::max(wanted, 1));
}

// ---- simulate ----

struct SimulateArgs {
  int experiment = 1;
  std::uint64_t seed = 1;
  std::string out;
  int n_a = 20, n_b = 20, n_ab = 20;
  double horizon = 1000.0;
  double lambda_a_hz = 400.0;
  double lambda_b_hz = 100.0;
  double bin_width = 50.0;
  std::vector<int> exact_counts;
};

int run_simulate(const SimulateArgs& args) {
  ExperimentSpec spec;
  spec.experiment = args.experiment;
  spec.seed = args.seed;
  spec.n_a = args.n_a;
  spec.n_b = args.n_b;
  spec.n_ab = args.n_ab;
  spec.horizon = args.horizon;
  spec.lambda_a = hz_to_per_ms(args.lambda_a_hz);
  spec.lambda_b = hz_to_per_ms(args.lambda_b_hz);
  if (!args.exact_counts.empty()) {
    if (args.exact_counts.size() != 2) {
      throw config_error("--exact-counts expects two comma-separated integers");
    }
    spec.exact_flat = args.exact_counts[0];
    spec.exact_sinusoid = args.exact_counts[1];
  }
  spec.validate();
  const TimeGrid grid = TimeGrid::from_bin_width(spec.horizon, args.bin_width);

  const fs::path out(args.out);
  json cfg{{"experiment", spec.experiment}, {"seed", spec.seed},
           {"n_a", spec.n_a},              {"n_b", spec.n_b},
           {"n_ab", spec.n_ab},            {"horizon_ms", spec.horizon},
           {"lambda_a_hz", args.lambda_a_hz}, {"lambda_b_hz", args.lambda_b_hz},
           {"bin_width_ms", args.bin_width}};
  Manifest manifest(out, "simulate", cfg, json::object());

  SimulatedDataset sim = simulate_dataset(spec);
  write_trains(out / "trains.txt", sim.trains);
  write_binned_csv(out / "binned.csv", bin_dataset(sim.trains, grid));
  write_text_file(out / "truth.json", truth_to_json(sim).dump(2) + "\n");
  manifest.add_output("trains", "trains.txt");
  manifest.add_output("binned", "binned.csv");
  manifest.add_output("truth", "truth.json");
  manifest.finish();
  std::cout << "simulate: wrote " << sim.trains.size() << " trains to " << out.string()
            << "\n";
  return kExitOk;
}

// ---- fit ----

struct FitArgs {
  std::string data;
  std::string out;
  int iters = 10000;
  int burn_in = 1000;
  int save = 1000;
  int chains = 1;
  std::uint64_t seed = 1;
  double bin_width = 50.0;
  double horizon = 0.0;  // 0: take from truth.json, else 1000
  std::string variant = "dapp";
  std::string prior_table;
  double sigma0 = 1.87;
  int aux_size = 5;
};

double resolve_horizon(const FitArgs& args, const fs::path& data_dir) {
  if (args.horizon > 0.0) return args.horizon;
  const fs::path truth = data_dir / "truth.json";
  if (fs::exists(truth)) {
    return json::parse(read_text_file(truth)).value("horizon_ms", 1000.0);
  }
  return 1000.0;
}

int run_fit(const FitArgs& args) {
  const fs::path data_dir(args.data);
  const fs::path out(args.out);
  const double horizon = resolve_horizon(args, data_dir);
  const TimeGrid grid = TimeGrid::from_bin_width(horizon, args.bin_width);

  const std::vector<SpikeTrain> trains = read_trains(data_dir / "trains.txt");
  const BinnedDataset binned = bin_dataset(trains, grid);
  if (binned.n_ab() < 1) throw data_error("fit: the dataset has no AB trials");

  GammaPriorTable priors;
  if (!args.prior_table.empty()) {
    priors = parse_prior_table(read_text_file(args.prior_table));
    if (priors.bins() != grid.bins()) {
      throw config_error("fit: prior table has " + std::to_string(priors.bins()) +
                         " bins but the grid has " + std::to_string(grid.bins()));
    }
  } else {
    priors = estimate_prior_table(binned);
  }

  ChainConfig base;
  base.iterations = args.iters;
  base.burn_in = args.burn_in;
  base.saved = args.save;
  base.variant = (args.variant == "alt-dp") ? PriorVariant::alt_dp : PriorVariant::dapp;
  base.hyper.sigma0 = args.sigma0;
  base.hyper.aux_size = args.aux_size;
  base.validate();

  json cfg{{"iters", args.iters},        {"burnin", args.burn_in},
           {"save", args.save},          {"chains", args.chains},
           {"seed", args.seed},          {"bin_width_ms", args.bin_width},
           {"horizon_ms", horizon},      {"variant", args.variant},
           {"sigma0", args.sigma0},      {"aux_size", args.aux_size},
           {"prior_table", args.prior_table}};
  Manifest manifest(out, "fit", cfg, json{{"data", args.data}});
  write_text_file(out / "prior_table.csv", format_prior_table(priors));
  manifest.add_output("prior_table", "prior_table.csv");

  auto run_one = [&](int index) {
    ChainConfig cc = base;
    cc.seed = mix_seed(args.seed, static_cast<std::uint64_t>(index));
    GibbsChain chain(binned.xab, grid, priors, cc);
    ChainOutput result = chain.run();
    char name[32];
    std::snprintf(name, sizeof(name), "chain_%02d", index);
    write_chain_output(out / name, result);
    return std::string(name);
  };

  const int pool = pool_size(args.chains);
  std::vector<std::string> chain_dirs(args.chains);
  for (int begin = 0; begin < args.chains; begin += pool) {
    const int end = std::min(begin + pool, args.chains);
    std::vector<std::future<std::string>> batch;
    for (int i = begin; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, run_one, i + 1));
    }
    for (int i = begin; i < end; ++i) chain_dirs[i] = batch[i - begin].get();
  }
  for (const std::string& name : chain_dirs) manifest.add_output(name, name);
  manifest.finish();
  std::cout << "fit: " << args.chains << " chain(s) written to " << out.string() << "\n";
  return kExitOk;
}

// ---- predict ----

struct PredictArgs {
  std::string chain;
  std::string out;
  int draws = 1000;
  std::uint64_t seed = 1;
  bool prior_only = false;
  bool printed_urn = false;
};

std::vector<fs::path> discover_chains(const fs::path& root) {
  if (fs::exists(root / "draws.jsonl")) return {root};
  std::vector<fs::path> dirs;
  if (fs::exists(root)) {
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_directory() && entry.path().filename().string().rfind("chain_", 0) == 0) {
        dirs.push_back(entry.path());
      }
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw data_error("predict: no chain output found in " + root.string());
  return dirs;
}

struct ChainEnv {
  TimeGrid grid{1.0, 1};
  LengthScaleGrid ells;
  DPHyper hyper;
  bool hard_coupled = false;
};

ChainEnv env_from_config(const json& config) {
  ChainEnv env;
  env.grid = TimeGrid(config.at("horizon_ms").get<double>(), config.at("bins").get<int>());
  env.ells = LengthScaleGrid(config.at("length_scales").get<std::vector<double>>());
  env.hyper.sigma0 = config.at("sigma0").get<double>();
  env.hyper.dirichlet_shapes = vector_from_json(config.at("dirichlet_shapes"));
  env.hyper.aux_size = config.at("aux_size").get<int>();
  env.hard_coupled = config.at("variant").get<std::string>() == "alt-dp";
  return env;
}

double sample_mean(const std::vector<double>& xs) {
  double total = 0.0;
  for (double x : xs) total += x;
  return xs.empty() ? 0.0 : total / static_cast<double>(xs.size());
}

void write_histogram_csv(const fs::path& path, const Eigen::VectorXd& hist,
                         double total) {
  std::ostringstream out;
  out << "lo,hi,count,frequency\n";
  const int cells = static_cast<int>(hist.size());
  for (int c = 0; c < cells; ++c) {
    out << fmt_double(static_cast<double>(c) / cells) << ','
        << fmt_double(static_cast<double>(c + 1) / cells) << ','
        << static_cast<long>(hist[c]) << ',' << fmt_double(hist[c] / total) << '\n';
  }
  write_text_file(path, out.str());
}

int run_predict(const PredictArgs& args) {
  const fs::path root(args.chain);
  const std::vector<fs::path> chain_dirs = discover_chains(root);
  const fs::path out(args.out);

  json cfg{{"chain", args.chain},   {"draws", args.draws},
           {"seed", args.seed},     {"prior_only", args.prior_only},
           {"printed_urn", args.printed_urn}};
  Manifest manifest(out, "predict", cfg, json{{"chains", chain_dirs.size()}});

  const UrnWeighting urn =
      args.printed_urn ? UrnWeighting::equal_atom : UrnWeighting::occupancy;

  std::vector<PredictiveDraw> pooled;
  std::vector<Eigen::VectorXd> per_chain_pmf;
  ChainEnv env;
  for (std::size_t c = 0; c < chain_dirs.size(); ++c) {
    StoredChain stored = read_chain_output(chain_dirs[c]);
    if (stored.draws.empty()) {
      throw data_error("predict: chain " + chain_dirs[c].string() + " has no draws");
    }
    env = env_from_config(stored.config);
    LengthScaleCache cache(env.ells, env.grid);
    Rng rng(mix_seed(args.seed, 1000 + c));
    std::vector<PredictiveDraw> draws;
    if (args.prior_only) {
      for (int i = 0; i < args.draws; ++i) {
        SavedDraw empty;
        empty.kappa = rng.gamma(env.hyper.kappa_prior_shape, env.hyper.kappa_prior_rate);
        draws.push_back(
            draw_alpha_star(empty, env.hyper, cache, rng, urn, env.hard_coupled));
      }
    } else {
      for (int i = 0; i < args.draws; ++i) {
        const SavedDraw& saved = stored.draws[i % stored.draws.size()];
        draws.push_back(
            draw_alpha_star(saved, env.hyper, cache, rng, urn, env.hard_coupled));
      }
    }
    PredictiveSummary chain_summary =
        summarize_predictive(draws, env.grid.horizon(), env.ells);
    per_chain_pmf.push_back(chain_summary.upcross_pmf);
    pooled.insert(pooled.end(), draws.begin(), draws.end());
  }

  const PredictiveSummary summary =
      summarize_predictive(pooled, env.grid.horizon(), env.ells);
  const double total = static_cast<double>(pooled.size());

  json j;
  j["draws"] = pooled.size();
  j["chains"] = chain_dirs.size();
  j["prior_only"] = args.prior_only;
  j["urn"] = args.printed_urn ? "equal-atom" : "occupancy";
  j["range"] = {{"mean", sample_mean(summary.range_samples)},
                {"hist_cells", summary.hist_cells}};
  j["avg"] = {{"mean", sample_mean(summary.avg_samples)},
              {"hist_cells", summary.hist_cells}};
  j["upcross"] = {{"support", summary.upcross_support},
                  {"pmf", std::vector<double>(summary.upcross_pmf.data(),
                                              summary.upcross_pmf.data() +
                                                  summary.upcross_pmf.size())}};
  if (per_chain_pmf.size() > 1) {
    j["mc_error"] = mc_error(per_chain_pmf);
    std::cout << "predict: mc_error across " << per_chain_pmf.size()
              << " chains = " << mc_error(per_chain_pmf) << "\n";
  }
  write_text_file(out / "summary.json", j.dump(2) + "\n");
  write_histogram_csv(out / "range_hist.csv", summary.range_hist, total);
  write_histogram_csv(out / "abar_hist.csv", summary.avg_hist, total);
  {
    std::ostringstream pmf;
    pmf << "ell,upcrossings,probability\n";
    for (int i = 0; i < env.ells.size(); ++i) {
      pmf << fmt_double(env.ells.values[i]) << ','
          << fmt_double(summary.upcross_support[i]) << ','
          << fmt_double(summary.upcross_pmf[i]) << '\n';
    }
    write_text_file(out / "upcross_pmf.csv", pmf.str());
  }
  manifest.add_output("summary", "summary.json");
  manifest.add_output("range_hist", "range_hist.csv");
  manifest.add_output("abar_hist", "abar_hist.csv");
  manifest.add_output("upcross_pmf", "upcross_pmf.csv");
  manifest.finish();
  std::cout << "predict: " << pooled.size() << " draws summarized in " << out.string()
            << "\n";
  return kExitOk;
}

// ---- report ----

struct ReportArgs {
  std::string chain;
  std::string data;
  std::string out;
  int draws = 1000;
  std::uint64_t seed = 1;
};

int run_report(const ReportArgs& args) {
  const fs::path root(args.chain);
  const std::vector<fs::path> chain_dirs = discover_chains(root);
  const fs::path out(args.out);

  json cfg{{"chain", args.chain}, {"data", args.data}, {"draws", args.draws},
           {"seed", args.seed}};
  Manifest manifest(out, "report", cfg, json{{"chains", chain_dirs.size()}});

  json report;
  report["schema_version"] = 1;

  // posterior mean weight curves per trial, pooled over chains
  std::vector<Eigen::VectorXd> mean_alpha;
  long draw_count = 0;
  ChainEnv env;
  std::vector<PredictiveDraw> predictive;
  for (std::size_t c = 0; c < chain_dirs.size(); ++c) {
    StoredChain stored = read_chain_output(chain_dirs[c]);
    if (stored.draws.empty()) {
      throw data_error("report: chain " + chain_dirs[c].string() + " has no draws");
    }
    env = env_from_config(stored.config);
    LengthScaleCache cache(env.ells, env.grid);
    Rng rng(mix_seed(args.seed, 2000 + c));
    for (const SavedDraw& d : stored.draws) {
      if (mean_alpha.empty()) {
        mean_alpha.assign(d.eta.size(), Eigen::VectorXd::Zero(env.grid.bins()));
      }
      for (std::size_t j = 0; j < d.eta.size(); ++j) {
        mean_alpha[j] += logistic_transform(d.eta[j]);
      }
      ++draw_count;
    }
    for (int i = 0; i < args.draws; ++i) {
      const SavedDraw& saved = stored.draws[i % stored.draws.size()];
      predictive.push_back(
          draw_alpha_star(saved, env.hyper, cache, rng, UrnWeighting::occupancy,
                          env.hard_coupled));
    }
  }
  for (auto& m : mean_alpha) m /= static_cast<double>(draw_count);

  const fs::path truth_path = fs::path(args.data) / "truth.json";
  if (fs::exists(truth_path)) {
    const TruthFile truth = truth_from_json(json::parse(read_text_file(truth_path)));
    const Eigen::VectorXd mids = env.grid.midpoints();
    json trials = json::array();
    double rmse_total = 0.0;
    const std::size_t n = std::min(truth.curves.size(), mean_alpha.size());
    for (std::size_t j = 0; j < n; ++j) {
      const Eigen::VectorXd target = truth.curves[j].at(mids);
      const double rmse =
          std::sqrt((mean_alpha[j] - target).squaredNorm() / env.grid.bins());
      trials.push_back({{"trial_id", static_cast<int>(j)}, {"rmse", rmse}});
      rmse_total += rmse;
    }
    report["trials"] = std::move(trials);
    report["mean_rmse"] = rmse_total / static_cast<double>(n);
    report["experiment"] = truth.experiment;

    const PredictiveSummary summary =
        summarize_predictive(predictive, env.grid.horizon(), env.ells);
    json criteria = json::object();
    bool all_pass = true;
    for (const CriterionResult& c :
         evaluate_experiment_criteria(summary, truth.experiment)) {
      criteria[c.name] = {{"pass", c.pass}, {"value", c.value},
                         {"threshold", c.threshold}};
      all_pass = all_pass && c.pass;
    }
    report["criteria"] = std::move(criteria);
    report["criteria_pass"] = all_pass;
  } else {
    std::cerr << "report: warning: " << truth_path.string()
              << " not found; skipping truth-dependent rows\n";
    report["trials"] = json::array();
    report["experiment"] = nullptr;
  }

  write_text_file(out / "report.json", report.dump(2) + "\n");
  manifest.add_output("report", "report.json");
  manifest.finish();
  std::cout << "report: written to " << (out / "report.json").string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic admixture analysis of dual-stimulus spike trains"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  c_sim->add_option("--experiment", sim.experiment, "experiment id (1, 2 or 3)")
      ->check(CLI::Range(1, 3));
  c_sim->add_option("--seed", sim.seed, "random seed");
  c_sim->add_option("--out", sim.out, "output directory")->required();
  c_sim->add_option("--n-a", sim.n_a, "number of A trials");
  c_sim->add_option("--n-b", sim.n_b, "number of B trials");
  c_sim->add_option("--n-ab", sim.n_ab, "number of AB trials");
  c_sim->add_option("--horizon", sim.horizon, "response window length in ms");
  c_sim->add_option("--lambda-a-hz", sim.lambda_a_hz, "A-condition rate in Hz");
  c_sim->add_option("--lambda-b-hz", sim.lambda_b_hz, "B-condition rate in Hz");
  c_sim->add_option("--bin-width", sim.bin_width, "bin width in ms for binned.csv");
  c_sim->add_option("--exact-counts", sim.exact_counts,
                    "experiment 3: exact flat,sinusoid trial split")
      ->delimiter(',');

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "run the Gibbs sampler on a dataset");
  c_fit->add_option("--data", fit.data, "dataset directory")->required();
  c_fit->add_option("--out", fit.out, "output directory")->required();
  c_fit->add_option("--iters", fit.iters, "total iterations");
  c_fit->add_option("--burnin", fit.burn_in, "burn-in iterations");
  c_fit->add_option("--save", fit.save, "saved draws after thinning");
  c_fit->add_option("--chains", fit.chains, "independent chains")->check(CLI::Range(1, 64));
  c_fit->add_option("--seed", fit.seed, "random seed");
  c_fit->add_option("--bin-width", fit.bin_width, "bin width in ms");
  c_fit->add_option("--horizon", fit.horizon, "response window in ms (default: truth.json)");
  c_fit->add_option("--variant", fit.variant, "prior variant")
      ->check(CLI::IsMember({"dapp", "alt-dp"}));
  c_fit->add_option("--prior-table", fit.prior_table, "gamma prior table CSV");
  c_fit->add_option("--sigma0", fit.sigma0, "latent marginal scale");
  c_fit->add_option("--aux-size", fit.aux_size, "auxiliary atoms per reassignment");

  PredictArgs pred;
  auto* c_pred = app.add_subcommand("predict", "posterior-predictive summaries");
  c_pred->add_option("--chain", pred.chain, "chain output directory")->required();
  c_pred->add_option("--out", pred.out, "output directory")->required();
  c_pred->add_option("--draws", pred.draws, "predictive draws per chain");
  c_pred->add_option("--seed", pred.seed, "random seed");
  c_pred->add_flag("--prior-only", pred.prior_only, "draw from the prior instead");
  c_pred->add_flag("--printed-urn", pred.printed_urn,
                   "equal-atom urn weighting instead of occupancy");

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "recovery evaluation against truth");
  c_rep->add_option("--chain", rep.chain, "chain output directory")->required();
  c_rep->add_option("--data", rep.data, "dataset directory with truth.json")->required();
  c_rep->add_option("--out", rep.out, "output directory")->required();
  c_rep->add_option("--draws", rep.draws, "predictive draws per chain");
  c_rep->add_option("--seed", rep.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (c_sim->parsed()) return run_simulate(sim);
    if (c_fit->parsed()) return run_fit(fit);
    if (c_pred->parsed()) return run_predict(pred);
    if (c_rep->parsed()) return run_report(rep);
  } catch (const numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
