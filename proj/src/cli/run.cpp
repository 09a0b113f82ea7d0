#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "sviplus/cli.hpp"
#include "sviplus/diagnostics.hpp"
#include "sviplus/error.hpp"
#include "sviplus/models/gmm.hpp"
#include "sviplus/models/lda.hpp"
#include "sviplus/models/pmf.hpp"
#include "sviplus/text.hpp"

namespace sviplus::cli {

double evaluate(const Problem& problem, const ModelState& state) {
  if (problem.heldout) {
    if (const auto* lda = dynamic_cast<const models::LdaModel*>(problem.model.get()))
      return lda->heldout_elbo(state, *problem.heldout);
  }
  return problem.model->elbo(state);
}

RunResult run(const RunConfig& config, const Problem& problem) {
  const Model& model = *problem.model;
  std::unique_ptr<CsvWriter> trace_out;
  if (!config.out.empty()) {
    std::filesystem::create_directories(config.out);
    std::ofstream cfg(config.out / "config.txt");
    if (!cfg) throw std::runtime_error((config.out / "config.txt").string() + ": cannot open for writing");
    write_config(cfg, config.resolved);
    trace_out = std::make_unique<CsvWriter>(config.out / "trace.csv");
    trace_out->row(kTraceHeader);
    trace_out->flush();
  }

  svi::EngineOptions opts;
  opts.batch_size = config.batch_size;
  opts.step = config.rho;
  opts.effective = config.m;
  opts.seed = config.seed;
  opts.threads = config.threads;
  svi::Engine engine(model, model.init_globals(config.seed), opts);

  RunResult result;
  using clock = std::chrono::steady_clock;
  clock::duration training{};
  for (std::size_t t = 1; t <= config.iters; ++t) {
    const auto start = clock::now();
    const svi::IterationInfo info = engine.step();
    training += clock::now() - start;
    if (t % config.eval_every != 0 && t != config.iters) continue;
    TraceRow row;
    row.iteration = t;
    row.wall_ms = std::chrono::duration<double, std::milli>(training).count();
    row.elbo = evaluate(problem, engine.state());
    if (!std::isfinite(row.elbo)) throw NumericalError("objective is not finite at iteration " + std::to_string(t));
    row.batch_size = info.batch_size;
    row.m = info.m;
    row.rho = info.rho;
    row.seed = config.seed;
    result.trace.push_back(row);
    if (trace_out) {
      trace_out->row(trace_fields(row));
      trace_out->flush();
    }
  }
  result.final_state = engine.state();

  const std::string threshold = config.resolved.contains("threshold") ? config.resolved.at("threshold") : "0.01";
  result.summary.emplace_back("final_objective", result.trace.back().elbo);
  if (const auto* gmm = dynamic_cast<const models::GmmModel*>(&model)) {
    const auto shares = diag::sorted_shares(gmm->hard_assignments(result.final_state), gmm->k());
    result.summary.emplace_back("effective_clusters",
                                static_cast<double>(diag::effective_cluster_count(shares, text::parse_double(threshold).value_or(0.01))));
  } else if (const auto* pmf = dynamic_cast<const models::PmfModel*>(&model)) {
    result.summary.emplace_back("train_rmse", pmf->rmse(result.final_state));
  } else if (const auto* lda = dynamic_cast<const models::LdaModel*>(&model)) {
    if (problem.heldout) result.summary.emplace_back("heldout_per_token", lda->heldout_per_token(result.final_state, *problem.heldout));
  }

  if (!config.out.empty()) {
    save_snapshot(config.out / "snapshot.txt", std::string(model.id()), result.final_state);
    std::vector<std::vector<std::string>> rows;
    for (const auto& [k, v] : result.summary) rows.push_back({k, text::format_double(v)});
    emit_csv(config.out / "summary.csv", {"metric", "value"}, rows);
  }
  return result;
}

std::pair<double, double> mean_sd(const std::vector<double>& x) {
  if (x.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  if (x.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(x.size() - 1))};
}

CompareResult compare(const std::vector<ConfigMap>& configs, const std::vector<std::uint64_t>& seeds) {
  if (configs.size() < 2) throw ConfigError("compare needs at least two configs");
  if (seeds.empty()) throw ConfigError("compare needs at least one seed");
  CompareResult out;
  out.seeds = seeds;
  std::set<std::string> used;
  for (const ConfigMap& base : configs) {
    const Problem problem = load_problem(base);
    std::vector<std::vector<TraceRow>> per_seed;
    std::string name;
    for (std::uint64_t seed : seeds) {
      ConfigMap c = base;
      c["seed"] = std::to_string(seed);
      c["out"] = "";
      RunConfig rc = resolve_run(c, problem.n());
      if (name.empty()) name = rc.name;
      per_seed.push_back(run(rc, problem).trace);
    }
    std::string unique = name;
    for (int i = 2; used.contains(unique); ++i) unique = name + "#" + std::to_string(i);
    used.insert(unique);
    out.names.push_back(unique);
    out.runs.push_back(std::move(per_seed));
  }

  out.wins.assign(configs.size(), 0);
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    std::size_t best = 0;
    bool strict = true;
    for (std::size_t c = 1; c < configs.size(); ++c) {
      const double v = out.runs[c][s].back().elbo;
      const double b = out.runs[best][s].back().elbo;
      if (v > b) {
        best = c;
        strict = true;
      } else if (v == b) {
        strict = false;
      }
    }
    if (strict) ++out.wins[best];
  }
  for (std::size_t c = 0; c < configs.size(); ++c) {
    std::vector<double> finals;
    for (const auto& trace : out.runs[c]) finals.push_back(trace.back().elbo);
    const auto [m, sd] = mean_sd(finals);
    out.final_mean.push_back(m);
    out.final_sd.push_back(sd);
  }
  return out;
}

void write_compare(const std::filesystem::path& dir, const CompareResult& r) {
  std::filesystem::create_directories(dir);

  // wide summary: one mean and sd column per config
  std::set<std::size_t> iterations;
  for (const auto& per_seed : r.runs)
    for (const auto& trace : per_seed)
      for (const auto& row : trace) iterations.insert(row.iteration);
  std::vector<std::string> header{"iteration"};
  for (const auto& n : r.names) {
    header.push_back(n + "_mean");
    header.push_back(n + "_sd");
  }
  std::vector<std::vector<std::string>> rows;
  for (std::size_t it : iterations) {
    std::vector<std::string> row{std::to_string(it)};
    for (const auto& per_seed : r.runs) {
      std::vector<double> vals;
      for (const auto& trace : per_seed)
        for (const auto& tr : trace)
          if (tr.iteration == it) vals.push_back(tr.elbo);
      if (vals.size() == per_seed.size()) {
        const auto [m, sd] = mean_sd(vals);
        row.push_back(text::format_double(m));
        row.push_back(text::format_double(sd));
      } else {
        row.push_back("");
        row.push_back("");
      }
    }
    rows.push_back(std::move(row));
  }
  emit_csv(dir / "summary.csv", header, rows);

  std::vector<std::string> long_header{"config"};
  long_header.insert(long_header.end(), kTraceHeader.begin(), kTraceHeader.end());
  std::vector<std::vector<std::string>> long_rows;
  for (std::size_t c = 0; c < r.names.size(); ++c)
    for (const auto& trace : r.runs[c])
      for (const auto& tr : trace) {
        std::vector<std::string> row{r.names[c]};
        const auto f = trace_fields(tr);
        row.insert(row.end(), f.begin(), f.end());
        long_rows.push_back(std::move(row));
      }
  emit_csv(dir / "runs.csv", long_header, long_rows);

  std::vector<std::vector<std::string>> win_rows;
  for (std::size_t c = 0; c < r.names.size(); ++c)
    win_rows.push_back({r.names[c], std::to_string(r.wins[c]), std::to_string(r.seeds.size()),
                        text::format_double(r.final_mean[c]), text::format_double(r.final_sd[c])});
  emit_csv(dir / "wins.csv", {"config", "wins", "runs", "final_mean", "final_sd"}, win_rows);
}

}  // namespace sviplus::cli
