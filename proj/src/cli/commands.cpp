#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "sviplus/cli.hpp"
#include "sviplus/diagnostics.hpp"
#include "sviplus/error.hpp"
#include "sviplus/kernels.hpp"
#include "sviplus/models/gmm.hpp"
#include "sviplus/text.hpp"

namespace sviplus::cli {
namespace {

struct Flags {
  std::vector<std::string> configs;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;  // key -> raw flag value
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    options.emplace_back(key, app->add_option(flag, values[key], help));
  }

  ConfigMap overrides() const {
    ConfigMap out;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      out[std::string(text::trim(std::string_view(s).substr(0, eq)))] =
          std::string(text::trim(std::string_view(s).substr(eq + 1)));
    }
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) out[key] = values.at(key);
    return out;
  }
};

void add_data_flags(CLI::App* app, Flags& f) {
  f.add(app, "--data", "data", "input file (CSV matrix, MovieLens ratings or UCI docword)");
  f.add(app, "--generate", "generate", "synthetic generator: gmm4 | ratings | lda, optionally name:key=value,...");
  f.add(app, "--vocab", "vocab", "vocabulary file for --data with LDA");
  f.add(app, "--format", "format", "auto | dat | csv (ratings)");
  f.add(app, "--data-seed", "data_seed", "seed of the synthetic generator");
  f.add(app, "--k", "k", "mixture components or topics");
  f.add(app, "--rank", "rank", "PMF factor dimension");
  f.add(app, "--dp-mass", "dp_mass", "DP-GMM concentration mass");
  f.add(app, "--heldout", "heldout", "LDA documents held out for evaluation");
}

void add_run_flags(CLI::App* app, Flags& f) {
  f.add(app, "--algo", "algo", "batch | svi | svi+");
  f.add(app, "--batch-size", "batch_size", "actual batch size |S| (integer or all)");
  f.add(app, "--m", "m", "effective batch size: <int> | all | ramp:<c>[:<cap>]");
  f.add(app, "--rho", "rho", "step size: const:<v> | power:<tau0>,<kappa>");
  f.add(app, "--iters", "iters", "iterations");
  f.add(app, "--seed", "seed", "master seed");
  f.add(app, "--eval-every", "eval_every", "objective evaluation cadence");
  f.add(app, "--threads", "threads", "worker threads for local steps");
  f.add(app, "--kernel", "kernel", "force a kernel variant: scalar | avx2 | neon");
  f.add(app, "--name", "name", "label in comparison output");
}

void add_common(CLI::App* app, Flags& f, bool many_configs) {
  if (many_configs)
    app->add_option("--config", f.configs, "key=value config file (repeat for each compared run)")->required();
  else
    app->add_option("--config", f.configs, "key=value config file")->expected(0, 1);
  app->add_option("--set", f.sets, "override any setting: key=value (repeatable)");
  f.add(app, "--out", "out", "output directory");
}

ConfigMap build_config(const Flags& f, std::size_t which, const std::string& forced_model) {
  ConfigMap base;
  if (which < f.configs.size()) base = load_config_file(f.configs[which]);
  ConfigMap c = merge_config(base, f.overrides());
  if (!forced_model.empty()) {
    if (base.contains("model") && !base.at("model").empty() && base.at("model") != forced_model &&
        !f.overrides().contains("model"))
      throw ConfigError("model=" + base.at("model") + " in the config file contradicts the subcommand (model " +
                        forced_model + ")");
    if (!f.overrides().contains("model")) c["model"] = forced_model;
  }
  return c;
}

void apply_kernel(const ConfigMap& c) {
  const auto it = c.find("kernel");
  if (it == c.end() || it->second.empty()) return;
  try {
    kernels::set_active_isa(kernels::parse_isa(it->second));
  } catch (const ContractError& e) {
    throw ConfigError("kernel=" + it->second + ": " + e.what());
  }
}

void echo_config(const std::filesystem::path& dir, const ConfigMap& c, const std::string& file = "config.txt") {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / file);
  if (!out) throw std::runtime_error((dir / file).string() + ": cannot open for writing");
  write_config(out, c);
}

int cmd_fit(const Flags& f, const std::string& model) {
  const ConfigMap c = build_config(f, 0, model);
  const Problem problem = load_problem(c);
  const RunConfig rc = resolve_run(c, problem.n());
  apply_kernel(rc.resolved);
  const RunResult r = run(rc, problem);
  std::cout << rc.name << ": N=" << problem.n() << " |S|=" << rc.batch_size << " M=" << format_m(rc.m)
            << " rho=" << format_rho(rc.rho) << " iters=" << rc.iters << " seed=" << rc.seed << "\n";
  for (const auto& [k, v] : r.summary) std::cout << "  " << k << " = " << text::format_double(v) << "\n";
  if (!rc.out.empty()) std::cout << "  wrote " << rc.out.string() << "\n";
  return kOk;
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& raw) {
  std::vector<std::size_t> out;
  for (auto item : text::split(raw, ",")) {
    const auto v = text::parse_int(item);
    if (!v || *v < 1) throw ConfigError(key + "=" + raw + " must be a comma-separated list of positive integers");
    out.push_back(static_cast<std::size_t>(*v));
  }
  return out;
}

std::size_t positive(const ConfigMap& c, const std::string& key) {
  const auto v = text::parse_int(c.at(key));
  if (!v || *v < 1) throw ConfigError(key + "=" + c.at(key) + " must be a positive integer");
  return static_cast<std::size_t>(*v);
}

int cmd_diagnose(const Flags& f) {
  ConfigMap c = build_config(f, 0, "");
  if (c["model"].empty()) c["model"] = "gmm";
  if (c["generate"].empty() && c["data"].empty()) c["generate"] = c["model"] == "pmf" ? "ratings" : c["model"] == "lda" ? "lda" : "gmm4";
  const Problem problem = load_problem(c);
  // algo, batch and rho are not used here; only seed and threads matter
  c["algo"] = "batch";
  c["batch_size"] = "all";
  c["rho"] = "";
  const std::string m_raw = c["m"];
  c["m"] = "";
  const RunConfig rc = resolve_run(c, problem.n());
  apply_kernel(rc.resolved);

  diag::TrendOptions t;
  t.m = 25;
  if (!m_raw.empty()) {
    const auto m = text::parse_int(m_raw);
    if (!m || *m < 1) throw ConfigError("m=" + m_raw + " must be a positive integer for diagnose-noise");
    t.m = static_cast<std::size_t>(*m);
  }
  t.taus = parse_size_list("taus", c["taus"]);
  t.replicates = positive(c, "replicates");
  if (t.replicates < 2) throw ConfigError("replicates must be >= 2");
  t.repeats = positive(c, "repeats");
  t.seed = rc.seed;
  t.threads = rc.threads;
  for (std::size_t tau : t.taus)
    if (tau * t.m > problem.n())
      throw ConfigError("taus contains " + std::to_string(tau) + " but tau*m = " + std::to_string(tau * t.m) +
                        " exceeds N=" + std::to_string(problem.n()));
  const auto warm = text::parse_int(c["warm_sweeps"]);
  if (!warm || *warm < 0) throw ConfigError("warm_sweeps=" + c["warm_sweeps"] + " must be a non-negative integer");
  const auto sweeps = static_cast<std::size_t>(*warm);

  const ModelState state = diag::warm_state(*problem.model, rc.seed, sweeps);
  const Eigen::VectorXd full = diag::per_datum_stats(*problem.model, state).colwise().mean().transpose();
  const auto rows = diag::theorem1_trend(*problem.model, state, t);

  std::vector<std::vector<std::string>> out;
  std::cout << "tau,batch_size,M,mean_max_ks,mean_energy\n";
  for (const auto& r : rows) {
    auto add = [&](const std::string& metric, double v) {
      out.push_back({std::to_string(r.tau), std::to_string(r.batch_size), std::to_string(t.m), metric,
                     text::format_double(v)});
    };
    add("mean_max_ks", r.mean_max_ks);
    add("mean_energy", r.mean_energy);
    add("cov_frobenius", r.covariance.norm());
    std::cout << r.tau << "," << r.batch_size << "," << t.m << "," << text::format_double(r.mean_max_ks) << ","
              << text::format_double(r.mean_energy) << "\n";
  }
  // unbiasedness at the first tau: largest relative error of the replicate mean
  diag::CollectOptions co;
  co.batch_size = t.taus.front() * t.m;
  co.m = t.m;
  co.replicates = t.replicates;
  co.seed = rc.seed;
  co.threads = t.threads;
  const auto sample = diag::collect_gradients(*problem.model, state, co);
  const Eigen::VectorXd mean = diag::column_mean(sample.values);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < full.size(); ++i)
    if (std::abs(full[i]) > 1e-12) worst = std::max(worst, std::abs(mean[i] - full[i]) / std::abs(full[i]));
  out.push_back({std::to_string(t.taus.front()), std::to_string(co.batch_size), std::to_string(t.m),
                 "mean_max_rel_error", text::format_double(worst)});

  if (!rc.out.empty()) {
    c["m"] = std::to_string(t.m);
    echo_config(rc.out, c);
    emit_csv(rc.out / "trend.csv", {"tau", "batch_size", "M", "metric", "value"}, out);
    std::cout << "wrote " << rc.out.string() << "\n";
  }
  return kOk;
}

int cmd_occupancy(const Flags& f) {
  ConfigMap c = build_config(f, 0, "");
  if (c["model"].empty()) c["model"] = "dpgmm";
  if (c["model"] != "gmm" && c["model"] != "dpgmm") throw ConfigError("occupancy needs model=gmm or model=dpgmm");
  const Problem problem = load_problem(c);
  const auto* gmm = dynamic_cast<const models::GmmModel*>(problem.model.get());
  const auto seeds = parse_seeds(c["seeds"]);
  const auto threshold = text::parse_double(c["threshold"]);
  if (!threshold || *threshold < 0.0 || *threshold >= 1.0) throw ConfigError("threshold=" + c["threshold"] + " must lie in [0, 1)");

  std::vector<ModelState> finals;
  RunConfig first;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    ConfigMap one = c;
    one["seed"] = std::to_string(seeds[i]);
    one["out"] = "";
    RunConfig rc = resolve_run(one, problem.n());
    if (i == 0) {
      apply_kernel(rc.resolved);
      first = rc;
    }
    finals.push_back(run(rc, problem).final_state);
  }
  const auto rep = diag::cluster_occupancy(*gmm, finals, *threshold);

  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < rep.mean_shares.size(); ++i) {
    const auto& q = rep.cumulative[i];
    rows.push_back({std::to_string(i + 1), text::format_double(rep.mean_shares[i]), text::format_double(q.min),
                    text::format_double(q.q1), text::format_double(q.median), text::format_double(q.q3),
                    text::format_double(q.max)});
  }
  std::vector<std::vector<std::string>> counts;
  for (std::size_t i = 0; i < seeds.size(); ++i)
    counts.push_back({std::to_string(seeds[i]), std::to_string(rep.effective_counts[i])});
  std::vector<double> eff(rep.effective_counts.begin(), rep.effective_counts.end());
  std::cout << first.name << ": effective clusters per seed:";
  for (auto e : rep.effective_counts) std::cout << ' ' << e;
  std::cout << "  (median " << text::format_double(diag::quantile(eff, 0.5)) << ")\n";
  const std::filesystem::path out = c["out"];
  if (!out.empty()) {
    ConfigMap echo = first.resolved;
    echo["seeds"] = c["seeds"];
    echo["out"] = c["out"];
    echo_config(out, echo);
    emit_csv(out / "occupancy.csv", {"rank", "mean_share", "cum_min", "cum_q1", "cum_median", "cum_q3", "cum_max"}, rows);
    emit_csv(out / "counts.csv", {"seed", "effective_clusters"}, counts);
    std::cout << "wrote " << out.string() << "\n";
  }
  return kOk;
}

int cmd_compare(const Flags& f) {
  if (f.configs.size() < 2) throw ConfigError("compare needs at least two --config files");
  std::vector<ConfigMap> configs;
  for (std::size_t i = 0; i < f.configs.size(); ++i) {
    ConfigMap c = build_config(f, i, "");
    if (c["name"].empty()) c["name"] = std::filesystem::path(f.configs[i]).stem().string();
    configs.push_back(std::move(c));
  }
  apply_kernel(configs.front());
  const ConfigMap& head = configs.front();
  const auto seeds = parse_seeds(head.at("seeds"));
  const CompareResult r = compare(configs, seeds);
  for (std::size_t c = 0; c < r.names.size(); ++c)
    std::cout << r.names[c] << ": final mean " << text::format_double(r.final_mean[c]) << " sd "
              << text::format_double(r.final_sd[c]) << " wins " << r.wins[c] << "/" << seeds.size() << "\n";
  const std::filesystem::path out = head.at("out");
  if (!out.empty()) {
    write_compare(out, r);
    for (std::size_t i = 0; i < configs.size(); ++i) {
      const Problem p = load_problem(configs[i]);
      echo_config(out, resolve_run(configs[i], p.n()).resolved, "config_" + std::to_string(i + 1) + ".txt");
    }
    std::cout << "wrote " << out.string() << "\n";
  }
  return kOk;
}

}  // namespace

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  if (s.find(',') == std::string::npos) {
    const auto n = text::parse_int(s);
    if (!n || *n < 1) throw ConfigError("seeds=" + s + " must be a count or a comma-separated list");
    for (long long i = 0; i < *n; ++i) out.push_back(static_cast<std::uint64_t>(i));
    return out;
  }
  for (auto item : text::split(s, ",")) {
    item = text::trim(item);
    if (item.empty()) continue;
    const auto v = text::parse_int(item);
    if (!v || *v < 0) throw ConfigError("seeds=" + s + ": bad seed '" + std::string(item) + "'");
    out.push_back(static_cast<std::uint64_t>(*v));
  }
  if (out.empty()) throw ConfigError("seeds=" + s + " lists no seeds");
  return out;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"sviplus: batch VI, SVI and SVI+ for conjugate exponential-family models"};
  app.require_subcommand(1);

  struct Sub {
    std::string name;
    std::string model;
    Flags flags;
    CLI::App* app = nullptr;
  };
  std::vector<std::unique_ptr<Sub>> subs;
  auto make = [&](const std::string& name, const std::string& model, const std::string& help) -> Sub& {
    auto s = std::make_unique<Sub>();
    s->name = name;
    s->model = model;
    s->app = app.add_subcommand(name, help);
    subs.push_back(std::move(s));
    return *subs.back();
  };
  for (const auto& [name, model, help] : std::vector<std::tuple<std::string, std::string, std::string>>{
           {"fit-gmm", "gmm", "fit a Bayesian Gaussian mixture"},
           {"fit-dpgmm", "dpgmm", "fit a truncated Dirichlet-process Gaussian mixture"},
           {"fit-pmf", "pmf", "fit probabilistic matrix factorization to ratings"},
           {"fit-lda", "lda", "fit latent Dirichlet allocation to a bag-of-words corpus"}}) {
    Sub& s = make(name, model, help);
    add_common(s.app, s.flags, false);
    add_data_flags(s.app, s.flags);
    add_run_flags(s.app, s.flags);
  }
  {
    Sub& s = make("diagnose-noise", "", "gradient-noise diagnostics at a warmed-up state");
    add_common(s.app, s.flags, false);
    add_data_flags(s.app, s.flags);
    s.flags.add(s.app, "--model", "model", "gmm | dpgmm | pmf | lda (default gmm)");
    s.flags.add(s.app, "--m", "m", "effective batch size M (default 25)");
    s.flags.add(s.app, "--taus", "taus", "comma-separated batch ratios tau, |S| = tau M");
    s.flags.add(s.app, "--replicates", "replicates", "gradient replicates per tau");
    s.flags.add(s.app, "--repeats", "repeats", "independent repeats averaged per tau");
    s.flags.add(s.app, "--warm-sweeps", "warm_sweeps", "batch sweeps before freezing the state");
    s.flags.add(s.app, "--seed", "seed", "master seed");
    s.flags.add(s.app, "--threads", "threads", "worker threads");
    s.flags.add(s.app, "--kernel", "kernel", "force a kernel variant");
  }
  {
    Sub& s = make("occupancy", "", "cluster occupancy across seeded mixture fits");
    add_common(s.app, s.flags, false);
    add_data_flags(s.app, s.flags);
    add_run_flags(s.app, s.flags);
    s.flags.add(s.app, "--model", "model", "gmm | dpgmm (default dpgmm)");
    s.flags.add(s.app, "--seeds", "seeds", "seed count N (0..N-1) or comma list");
    s.flags.add(s.app, "--threshold", "threshold", "share above which a cluster counts as occupied");
  }
  {
    Sub& s = make("compare", "", "run several configs over shared seeds and summarize");
    add_common(s.app, s.flags, true);
    s.flags.add(s.app, "--seeds", "seeds", "seed count N (0..N-1) or comma list");
    s.flags.add(s.app, "--iters", "iters", "iterations for every config");
    s.flags.add(s.app, "--threads", "threads", "worker threads");
    s.flags.add(s.app, "--kernel", "kernel", "force a kernel variant");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    for (const auto& s : subs) {
      if (!s->app->parsed()) continue;
      if (s->name == "diagnose-noise") return cmd_diagnose(s->flags);
      if (s->name == "occupancy") return cmd_occupancy(s->flags);
      if (s->name == "compare") return cmd_compare(s->flags);
      return cmd_fit(s->flags, s->model);
    }
  } catch (const ConfigError& e) {
    std::cerr << "sviplus: config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "sviplus: data error: " << e.what() << "\n";
    return kDataError;
  } catch (const sviplus::ParseError& e) {
    std::cerr << "sviplus: data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericalError& e) {
    std::cerr << "sviplus: numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const InvalidParameter& e) {
    std::cerr << "sviplus: numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const ContractError& e) {
    std::cerr << "sviplus: config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "sviplus: error: " << e.what() << "\n";
    return 1;
  }
  return kConfigError;
}

}  // namespace sviplus::cli
