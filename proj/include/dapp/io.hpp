// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef DAPP_IO_HPP
#define DAPP_IO_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dapp/core.hpp"
#include "dapp/errors.hpp"
#include "dapp/first_stage.hpp"
#include "dapp/sampler.hpp"
#include "dapp/simulator.hpp"

namespace dapp {

using nlohmann::json;

// All tabular text output carries doubles at 17 significant digits so that
// write/read round-trips are exact.
inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write " + path.string());
  out << text;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- spike-train text format: one trial per line,
//      condition,trial_id,t1 t2 t3 ...  (times in ms) ----

inline std::string format_trains(const std::vector<SpikeTrain>& trains) {
  std::ostringstream out;
  for (const SpikeTrain& tr : trains) {
    out << to_string(tr.condition) << ',' << tr.trial_id << ',';
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      if (i > 0) out << ' ';
      out << fmt_double(tr.times[i]);
    }
    out << '\n';
  }
  return out.str();
}

inline std::vector<SpikeTrain> parse_trains(const std::string& text) {
  std::vector<SpikeTrain> trains;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw data_error("trains line " + std::to_string(line_no) +
                       ": expected 'condition,trial_id,times'");
    }
    const Condition cond = condition_from_string(line.substr(0, c1));
    int trial_id = 0;
    try {
      trial_id = std::stoi(line.substr(c1 + 1, c2 - c1 - 1));
    } catch (const std::exception&) {
      throw data_error("trains line " + std::to_string(line_no) + ": bad trial id");
    }
    std::vector<double> times;
    std::istringstream ts(line.substr(c2 + 1));
    double t;
    while (ts >> t) times.push_back(t);
    std::sort(times.begin(), times.end());
    trains.emplace_back(std::move(times), trial_id, cond);
  }
  return trains;
}

inline void write_trains(const std::filesystem::path& path,
                         const std::vector<SpikeTrain>& trains) {
  write_text_file(path, format_trains(trains));
}

inline std::vector<SpikeTrain> read_trains(const std::filesystem::path& path) {
  return parse_trains(read_text_file(path));
}

// ---- binned counts CSV ----

inline void write_binned_csv(const std::filesystem::path& path, const BinnedDataset& data) {
  std::ostringstream out;
  out << "condition,trial_id";
  for (int m = 0; m < data.grid.bins(); ++m) out << ",b" << (m + 1);
  out << '\n';
  const auto dump = [&](const Eigen::MatrixXi& x, const char* tag) {
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      out << tag << ',' << j;
      for (Eigen::Index m = 0; m < x.cols(); ++m) out << ',' << x(j, m);
      out << '\n';
    }
  };
  dump(data.xa, "A");
  dump(data.xb, "B");
  dump(data.xab, "AB");
  write_text_file(path, out.str());
}

// ---- ground-truth weight curves ----

inline json truth_to_json(const SimulatedDataset& sim) {
  json j;
  j["experiment"] = sim.spec.experiment;
  j["horizon_ms"] = sim.spec.horizon;
  j["seed"] = sim.spec.seed;
  j["lambda_a_per_ms"] = sim.spec.lambda_a;
  j["lambda_b_per_ms"] = sim.spec.lambda_b;
  j["trials"] = json::array();
  for (std::size_t i = 0; i < sim.truth.size(); ++i) {
    const WeightCurve& c = sim.truth[i];
    json t;
    t["trial_id"] = static_cast<int>(i);
    t["type"] = (c.kind == WeightCurve::Kind::flat) ? "flat" : "sinusoid";
    if (c.kind == WeightCurve::Kind::flat) {
      t["value"] = c.value;
    } else {
      t["period_ms"] = c.period;
      t["shift_ms"] = c.shift;
    }
    j["trials"].push_back(std::move(t));
  }
  return j;
}

struct TruthFile {
  int experiment = 0;
  double horizon = 0.0;
  std::vector<WeightCurve> curves;
};

inline TruthFile truth_from_json(const json& j) {
  TruthFile out;
  out.experiment = j.value("experiment", 0);
  out.horizon = j.value("horizon_ms", 0.0);
  for (const auto& t : j.at("trials")) {
    WeightCurve c;
    if (t.at("type") == "flat") {
      c.kind = WeightCurve::Kind::flat;
      c.value = t.at("value").get<double>();
    } else {
      c.kind = WeightCurve::Kind::sinusoid;
      c.period = t.at("period_ms").get<double>();
      c.shift = t.at("shift_ms").get<double>();
    }
    out.curves.push_back(c);
  }
  return out;
}

// ---- gamma prior table CSV: condition,bin,shape,rate (bin-mean scale) ----

inline std::string format_prior_table(const GammaPriorTable& table) {
  std::ostringstream out;
  out << "condition,bin,shape,rate\n";
  for (int m = 0; m < table.bins(); ++m) {
    out << "A," << (m + 1) << ',' << fmt_double(table.shape_a[m]) << ','
        << fmt_double(table.rate_a[m]) << '\n';
  }
  for (int m = 0; m < table.bins(); ++m) {
    out << "B," << (m + 1) << ',' << fmt_double(table.shape_b[m]) << ','
        << fmt_double(table.rate_b[m]) << '\n';
  }
  return out.str();
}

inline GammaPriorTable parse_prior_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<double> sa, ra, sb, rb;
  bool header = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ls(line);
    std::string cond, bin, shape, rate;
    if (!std::getline(ls, cond, ',') || !std::getline(ls, bin, ',') ||
        !std::getline(ls, shape, ',') || !std::getline(ls, rate, ',')) {
      throw data_error("prior table line " + std::to_string(line_no) + ": malformed");
    }
    const double a = std::stod(shape), b = std::stod(rate);
    if (cond == "A") {
      sa.push_back(a);
      ra.push_back(b);
    } else if (cond == "B") {
      sb.push_back(a);
      rb.push_back(b);
    } else {
      throw data_error("prior table line " + std::to_string(line_no) +
                       ": condition must be A or B");
    }
  }
  GammaPriorTable table;
  table.shape_a = Eigen::Map<Eigen::VectorXd>(sa.data(), sa.size());
  table.rate_a = Eigen::Map<Eigen::VectorXd>(ra.data(), ra.size());
  table.shape_b = Eigen::Map<Eigen::VectorXd>(sb.data(), sb.size());
  table.rate_b = Eigen::Map<Eigen::VectorXd>(rb.data(), rb.size());
  table.validate();
  return table;
}

// ---- chain output: draws.jsonl, diagnostics.csv, config.json ----

inline json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i];
  return v;
}

inline json draw_to_json(const SavedDraw& d) {
  json j;
  j["iteration"] = d.iteration;
  j["kappa"] = d.kappa;
  j["lambda_a"] = vector_to_json(d.lambda_a);
  j["lambda_b"] = vector_to_json(d.lambda_b);
  json trials = json::array();
  for (std::size_t t = 0; t < d.eta.size(); ++t) {
    json tr;
    tr["eta"] = vector_to_json(d.eta[t]);
    tr["phi"] = d.phi[t];
    tr["psi"] = d.psi[t];
    tr["pi"] = vector_to_json(d.pi[t]);
    tr["ell_index"] = d.ell_index[t];
    tr["label"] = d.label[t];
    trials.push_back(std::move(tr));
  }
  j["trials"] = std::move(trials);
  json atoms = json::array();
  for (const Atom& a : d.atoms) {
    json aj;
    aj["phi"] = a.phi;
    aj["psi"] = a.psi;
    aj["pi"] = vector_to_json(a.pi);
    aj["ell_index"] = a.ell_index;
    atoms.push_back(std::move(aj));
  }
  j["atoms"] = std::move(atoms);
  j["atom_counts"] = d.atom_counts;
  return j;
}

inline SavedDraw draw_from_json(const json& j) {
  SavedDraw d;
  d.iteration = j.at("iteration");
  d.kappa = j.at("kappa");
  d.lambda_a = vector_from_json(j.at("lambda_a"));
  d.lambda_b = vector_from_json(j.at("lambda_b"));
  for (const auto& tr : j.at("trials")) {
    d.eta.push_back(vector_from_json(tr.at("eta")));
    d.phi.push_back(tr.at("phi"));
    d.psi.push_back(tr.at("psi"));
    d.pi.push_back(vector_from_json(tr.at("pi")));
    d.ell_index.push_back(tr.at("ell_index"));
    d.label.push_back(tr.at("label"));
  }
  for (const auto& aj : j.at("atoms")) {
    Atom a;
    a.phi = aj.at("phi");
    a.psi = aj.at("psi");
    a.pi = vector_from_json(aj.at("pi"));
    a.ell_index = aj.at("ell_index");
    d.atoms.push_back(std::move(a));
  }
  d.atom_counts = j.at("atom_counts").get<std::vector<int>>();
  return d;
}

inline json chain_config_to_json(const ChainConfig& cfg, const TimeGrid& grid) {
  json j;
  j["iterations"] = cfg.iterations;
  j["burn_in"] = cfg.burn_in;
  j["saved"] = cfg.saved;
  j["seed"] = cfg.seed;
  j["variant"] = to_string(cfg.variant);
  j["sample_lambda"] = cfg.sample_lambda;
  j["sigma0"] = cfg.hyper.sigma0;
  j["dirichlet_shapes"] = vector_to_json(cfg.hyper.dirichlet_shapes);
  j["aux_size"] = cfg.hyper.aux_size;
  j["length_scales"] = cfg.length_scales;
  j["horizon_ms"] = grid.horizon();
  j["bins"] = grid.bins();
  return j;
}

inline void write_chain_output(const std::filesystem::path& dir, const ChainOutput& out) {
  std::filesystem::create_directories(dir);
  {
    std::ostringstream draws;
    for (const SavedDraw& d : out.draws) draws << draw_to_json(d).dump() << '\n';
    write_text_file(dir / "draws.jsonl", draws.str());
  }
  {
    std::ostringstream diag;
    diag << "iteration,clusters,kappa,psi_accept_rate,log_lik\n";
    for (const DiagnosticsRow& r : out.diagnostics) {
      diag << r.iteration << ',' << r.n_clusters << ',' << fmt_double(r.kappa) << ','
           << fmt_double(r.psi_accept_rate) << ',' << fmt_double(r.log_lik) << '\n';
    }
    write_text_file(dir / "diagnostics.csv", diag.str());
  }
  ChainConfig cfg = out.config;
  if (cfg.length_scales.empty()) {
    cfg.length_scales = default_lengthscale_grid(out.grid.horizon()).values;
  }
  write_text_file(dir / "config.json", chain_config_to_json(cfg, out.grid).dump(2) + "\n");
}

struct StoredChain {
  std::vector<SavedDraw> draws;
  json config;
};

inline StoredChain read_chain_output(const std::filesystem::path& dir) {
  StoredChain out;
  out.config = json::parse(read_text_file(dir / "config.json"));
  std::istringstream lines(read_text_file(dir / "draws.jsonl"));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    out.draws.push_back(draw_from_json(json::parse(line)));
  }
  return out;
}

}  // namespace dapp

#endif
