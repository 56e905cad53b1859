// Apache License, Version 2.0, refer to LICENSE.txt
//
// End-to-end checks of the command-line surface: exit codes, determinism,
// file formats and the report schema.
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "dapp/io.hpp"
#include "dapp/sampler.hpp"

using namespace dapp;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

const std::string kCli = DAPP_CLI_PATH;

int run_cli(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path work_dir() {
  static fs::path dir = [] {
    auto d = fs::temp_directory_path() / "dapp_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) { return read_text_file(p); }

}  // namespace

TEST_CASE("simulate writes a deterministic dataset", "[cli]") {
  const fs::path a = work_dir() / "sim_a";
  const fs::path b = work_dir() / "sim_b";
  const fs::path c = work_dir() / "sim_c";
  REQUIRE(run_cli("simulate --experiment 1 --seed 7 --out " + a.string()) == 0);
  REQUIRE(run_cli("simulate --experiment 1 --seed 7 --out " + b.string()) == 0);
  REQUIRE(run_cli("simulate --experiment 1 --seed 8 --out " + c.string()) == 0);

  auto trains = read_trains(a / "trains.txt");
  REQUIRE(trains.size() == 60);

  for (const char* file : {"trains.txt", "truth.json", "binned.csv"}) {
    REQUIRE(slurp(a / file) == slurp(b / file));
  }
  REQUIRE(slurp(a / "trains.txt") != slurp(c / "trains.txt"));

  const json manifest = json::parse(slurp(a / "manifest.json"));
  REQUIRE(manifest.at("status") == "complete");
  REQUIRE(manifest.at("command") == "simulate");
  REQUIRE(manifest.contains("wall_ms"));
}

TEST_CASE("usage errors exit with code 2", "[cli]") {
  REQUIRE(run_cli("simulate --experiment 1") == 2);  // missing --out
  REQUIRE(run_cli("simulate --experiment 9 --out /tmp/x") == 2);
  REQUIRE(run_cli("no-such-command") == 2);
}

TEST_CASE("fit handles thin data and bad grids", "[cli]") {
  const fs::path data = work_dir() / "thin";
  REQUIRE(run_cli("simulate --experiment 1 --seed 3 --n-a 1 --n-b 5 --out " +
                  data.string()) == 0);
  SECTION("one A trial without a prior table is a data error") {
    REQUIRE(run_cli("fit --data " + data.string() + " --out " +
                    (work_dir() / "thin_fit").string() + " --iters 10 --burnin 2 --save 2") == 3);
  }
  SECTION("a supplied prior table unblocks the fit") {
    GammaPriorTable table;
    table.shape_a = Eigen::VectorXd::Constant(20, 4.0);
    table.rate_a = Eigen::VectorXd::Constant(20, 0.2);
    table.shape_b = table.shape_a;
    table.rate_b = Eigen::VectorXd::Constant(20, 0.8);
    const fs::path csv = work_dir() / "prior.csv";
    write_text_file(csv, format_prior_table(table));
    REQUIRE(run_cli("fit --data " + data.string() + " --out " +
                    (work_dir() / "thin_fit2").string() +
                    " --iters 10 --burnin 2 --save 2 --prior-table " + csv.string()) == 0);
  }
  SECTION("bin width that does not divide the horizon exits 2") {
    REQUIRE(run_cli("fit --data " + data.string() + " --out " +
                    (work_dir() / "thin_fit3").string() + " --bin-width 33") == 2);
  }
}

TEST_CASE("fit, predict and report round trip", "[cli][slow]") {
  const fs::path data = work_dir() / "pipe_data";
  const fs::path fit = work_dir() / "pipe_fit";
  const fs::path pred = work_dir() / "pipe_pred";
  const fs::path rep = work_dir() / "pipe_rep";
  REQUIRE(run_cli("simulate --experiment 1 --seed 5 --n-a 6 --n-b 6 --n-ab 5 --out " +
                  data.string()) == 0);
  REQUIRE(run_cli("fit --data " + data.string() + " --out " + fit.string() +
                  " --iters 60 --burnin 20 --save 20 --chains 2 --seed 9") == 0);
  REQUIRE(fs::exists(fit / "chain_01" / "draws.jsonl"));
  REQUIRE(fs::exists(fit / "chain_02" / "draws.jsonl"));
  REQUIRE(fs::exists(fit / "prior_table.csv"));

  StoredChain stored = read_chain_output(fit / "chain_01");
  REQUIRE(stored.draws.size() == 20);

  REQUIRE(run_cli("predict --chain " + fit.string() + " --out " + pred.string() +
                  " --draws 100 --seed 2") == 0);
  const json summary = json::parse(slurp(pred / "summary.json"));
  REQUIRE(summary.at("draws") == 200);  // two chains, 100 each
  REQUIRE(summary.at("chains") == 2);
  REQUIRE(summary.contains("mc_error"));
  REQUIRE(fs::exists(pred / "range_hist.csv"));
  REQUIRE(fs::exists(pred / "abar_hist.csv"));
  REQUIRE(fs::exists(pred / "upcross_pmf.csv"));

  SECTION("prior-only predictions") {
    const fs::path prior = work_dir() / "pipe_prior";
    REQUIRE(run_cli("predict --chain " + fit.string() + " --out " + prior.string() +
                    " --draws 150 --prior-only") == 0);
    const json ps = json::parse(slurp(prior / "summary.json"));
    REQUIRE(ps.at("prior_only") == true);
    REQUIRE(ps.at("draws") == 300);
  }

  SECTION("report schema is stable") {
    REQUIRE(run_cli("report --chain " + fit.string() + " --data " + data.string() +
                    " --out " + rep.string()) == 0);
    const json report = json::parse(slurp(rep / "report.json"));
    for (const char* key :
         {"schema_version", "trials", "mean_rmse", "experiment", "criteria",
          "criteria_pass"}) {
      REQUIRE(report.contains(key));
    }
    REQUIRE(report.at("experiment") == 1);
    REQUIRE(report.at("trials").size() == 5);
    for (const auto& row : report.at("trials")) {
      REQUIRE(row.contains("trial_id"));
      REQUIRE(row.contains("rmse"));
    }
  }
}

TEST_CASE("predict on an empty chain directory exits 3", "[cli]") {
  const fs::path empty = work_dir() / "empty_chain";
  fs::create_directories(empty);
  write_text_file(empty / "draws.jsonl", "");
  ChainConfig cfg;
  write_text_file(empty / "config.json",
                  chain_config_to_json(cfg, TimeGrid(1000.0, 20)).dump());
  REQUIRE(run_cli("predict --chain " + empty.string() + " --out " +
                  (work_dir() / "empty_pred").string()) == 3);
}

TEST_CASE("report recovers truth exactly when the posterior is the truth",
          "[cli]") {
  const fs::path data = work_dir() / "perfect_data";
  REQUIRE(run_cli("simulate --experiment 1 --seed 11 --n-a 3 --n-b 3 --n-ab 4 --out " +
                  data.string()) == 0);
  const TruthFile truth =
      truth_from_json(json::parse(slurp(data / "truth.json")));
  const TimeGrid grid(truth.horizon, 20);

  // fabricate a chain whose latent curves sit exactly at the true weights
  ChainOutput out;
  out.grid = grid;
  out.config.iterations = 1;
  out.config.burn_in = 0;
  out.config.saved = 1;
  out.config.hyper.dirichlet_shapes = default_dirichlet_shapes(6);
  SavedDraw d;
  d.iteration = 1;
  d.kappa = 1.0;
  d.lambda_a = Eigen::VectorXd::Constant(20, 0.4);
  d.lambda_b = Eigen::VectorXd::Constant(20, 0.1);
  Atom atom;
  atom.phi = 0.0;
  atom.set_psi(0.5);
  atom.pi = default_dp_hyper(6).normalized_shapes();
  const Eigen::VectorXd mids = grid.midpoints();
  for (std::size_t j = 0; j < truth.curves.size(); ++j) {
    Eigen::VectorXd alpha = truth.curves[j].at(mids);
    Eigen::VectorXd eta(alpha.size());
    for (Eigen::Index m = 0; m < alpha.size(); ++m) eta[m] = logit(alpha[m]);
    d.eta.push_back(eta);
    d.phi.push_back(0.0);
    d.psi.push_back(0.5);
    d.pi.push_back(atom.pi);
    d.ell_index.push_back(5);
    d.label.push_back(0);
  }
  d.atoms = {atom};
  d.atom_counts = {static_cast<int>(truth.curves.size())};
  out.draws.push_back(d);
  const fs::path chain = work_dir() / "perfect_chain";
  write_chain_output(chain, out);

  const fs::path rep = work_dir() / "perfect_rep";
  REQUIRE(run_cli("report --chain " + chain.string() + " --data " + data.string() +
                  " --out " + rep.string() + " --draws 10") == 0);
  const json report = json::parse(slurp(rep / "report.json"));
  REQUIRE(report.at("mean_rmse").get<double>() == Approx(0.0).margin(1e-12));
}

TEST_CASE("report without truth warns and skips recovery rows", "[cli]") {
  const fs::path data = work_dir() / "no_truth";
  const fs::path fit = work_dir() / "no_truth_fit";
  REQUIRE(run_cli("simulate --experiment 1 --seed 4 --n-a 4 --n-b 4 --n-ab 3 --out " +
                  data.string()) == 0);
  REQUIRE(run_cli("fit --data " + data.string() + " --out " + fit.string() +
                  " --iters 20 --burnin 5 --save 5") == 0);
  fs::remove(data / "truth.json");
  const fs::path rep = work_dir() / "no_truth_rep";
  REQUIRE(run_cli("report --chain " + fit.string() + " --data " + data.string() +
                  " --out " + rep.string()) == 0);
  const json report = json::parse(slurp(rep / "report.json"));
  REQUIRE(report.at("trials").empty());
  REQUIRE_FALSE(report.contains("criteria"));
}
