#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "sviplus/cli.hpp"
#include "sviplus/error.hpp"
#include "sviplus/expfam.hpp"
#include "sviplus/text.hpp"

using namespace sviplus;
using namespace sviplus::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sviplus_test_" + name + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ConfigMap gmm_config() {
  return {{"model", "gmm"}, {"generate", "gmm4"}, {"gen_n", "120"}, {"iters", "15"}, {"batch_size", "30"},
          {"m", "6"},       {"rho", "power:1,0.7"}, {"seed", "3"}};
}

std::vector<double> elbos(const std::vector<TraceRow>& t) {
  std::vector<double> out;
  for (const auto& r : t) out.push_back(r.elbo);
  return out;
}

int call(std::vector<std::string> args) {
  args.insert(args.begin(), "sviplus");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

// ---------------------------------------------------------------- config

TEST(Config, ParsesCommentsAndWhitespace) {
  std::istringstream in("# header\nmodel = gmm\n\n  iters=5   # inline\nrho = const:0.5\r\n");
  const auto c = parse_config(in);
  EXPECT_EQ(c.at("model"), "gmm");
  EXPECT_EQ(c.at("iters"), "5");
  EXPECT_EQ(c.at("rho"), "const:0.5");
}

TEST(Config, RejectsUnknownDuplicateAndMalformed) {
  std::istringstream unknown("model = gmm\nbogus = 1\n");
  try {
    parse_config(unknown, "f.txt");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
  std::istringstream dup("iters = 1\niters = 2\n");
  EXPECT_THROW(parse_config(dup), ConfigError);
  std::istringstream bare("iters\n");
  EXPECT_THROW(parse_config(bare), ConfigError);
}

TEST(Config, OverridesWinAndDefaultsFill) {
  const auto c = merge_config({{"iters", "5"}, {"seed", "1"}}, {{"iters", "9"}});
  EXPECT_EQ(c.at("iters"), "9");
  EXPECT_EQ(c.at("seed"), "1");
  EXPECT_EQ(c.at("algo"), "svi+");
  EXPECT_EQ(c.size(), config_defaults().size());
  EXPECT_THROW(merge_config({}, {{"nope", "1"}}), ConfigError);
}

TEST(Config, GenerateParametersExpand) {
  const auto c = merge_config({{"generate", "ratings:users=40,items=30,density=0.2"}}, {});
  EXPECT_EQ(c.at("generate"), "ratings");
  EXPECT_EQ(c.at("gen_users"), "40");
  EXPECT_EQ(c.at("gen_density"), "0.2");
  EXPECT_THROW(merge_config({{"generate", "ratings:colour=blue"}}, {}), ConfigError);
}

TEST(Config, WriteParseRoundTrip) {
  const auto c = merge_config(gmm_config(), {});
  std::ostringstream out;
  write_config(out, c);
  std::istringstream in(out.str());
  EXPECT_EQ(parse_config(in), c);
}

TEST(Schedules, ParseM) {
  EXPECT_FALSE(parse_m("all").has_value());
  EXPECT_FALSE(parse_m("").has_value());
  EXPECT_EQ(std::get<svi::ConstantM>(*parse_m("10")).m, 10u);
  const auto r = std::get<svi::LinearRampM>(*parse_m("ramp:50"));
  EXPECT_EQ(r.slope, 50u);
  EXPECT_EQ(r.cap, SIZE_MAX);
  EXPECT_EQ(std::get<svi::LinearRampM>(*parse_m("ramp:5:100")).cap, 100u);
  EXPECT_EQ(format_m(*parse_m("ramp:5:100")), "ramp:5:100");
  for (const char* bad : {"0", "-3", "x", "ramp:", "ramp:0", "ramp:1:2:3"}) EXPECT_THROW(parse_m(bad), ConfigError) << bad;
}

TEST(Schedules, ParseRho) {
  EXPECT_EQ(std::get<svi::ConstantStep>(parse_rho("const:0.85")).rho, 0.85);
  const auto p = std::get<svi::PowerDecayStep>(parse_rho("power:1,0.7"));
  EXPECT_EQ(p.tau0, 1.0);
  EXPECT_EQ(p.kappa, 0.7);
  EXPECT_EQ(format_rho(parse_rho("power:1,0.7")), "power:1,0.7");
  for (const char* bad : {"0.5", "const:0", "const:1.5", "power:1", "power:1,0.2", "power:a,b"})
    EXPECT_THROW(parse_rho(bad), ConfigError) << bad;
}

TEST(Schedules, BatchSize) {
  EXPECT_FALSE(parse_batch_size("all").has_value());
  EXPECT_EQ(*parse_batch_size("50"), 50u);
  EXPECT_THROW(parse_batch_size("0"), ConfigError);
  EXPECT_THROW(parse_batch_size("ten"), ConfigError);
}

// --------------------------------------------------------------- resolve

TEST(Resolve, BatchForcesFullData) {
  const auto rc = resolve_run({{"model", "gmm"}, {"algo", "batch"}}, 250);
  EXPECT_EQ(rc.batch_size, 250u);
  EXPECT_EQ(std::get<svi::ConstantM>(rc.m).m, 250u);
  EXPECT_EQ(std::get<svi::ConstantStep>(rc.rho).rho, 1.0);
  EXPECT_EQ(rc.resolved.at("batch_size"), "250");
  EXPECT_THROW(resolve_run({{"model", "gmm"}, {"algo", "batch"}, {"batch_size", "50"}}, 250), ConfigError);
  EXPECT_THROW(resolve_run({{"model", "gmm"}, {"algo", "batch"}, {"rho", "const:0.5"}}, 250), ConfigError);
  EXPECT_THROW(resolve_run({{"model", "gmm"}, {"algo", "batch"}, {"m", "10"}}, 250), ConfigError);
}

TEST(Resolve, SviForcesMEqualBatch) {
  const auto rc = resolve_run({{"model", "gmm"}, {"algo", "svi"}, {"batch_size", "50"}}, 250);
  EXPECT_EQ(std::get<svi::ConstantM>(rc.m).m, 50u);
  try {
    resolve_run({{"model", "gmm"}, {"algo", "svi"}, {"batch_size", "50"}, {"m", "10"}}, 250);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("m="), std::string::npos);
    EXPECT_NE(msg.find("batch_size"), std::string::npos);
  }
}

TEST(Resolve, SviPlusChecks) {
  try {
    resolve_run({{"model", "gmm"}, {"batch_size", "50"}, {"m", "60"}}, 250);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("m=60"), std::string::npos);
    EXPECT_NE(msg.find("batch_size=50"), std::string::npos);
  }
  EXPECT_THROW(resolve_run({{"model", "gmm"}, {"batch_size", "50"}}, 250), ConfigError);
  EXPECT_THROW(resolve_run({{"model", "gmm"}, {"batch_size", "300"}, {"m", "10"}}, 250), ConfigError);
  EXPECT_THROW(resolve_run({{"model", "tree"}, {"m", "10"}}, 250), ConfigError);
  EXPECT_THROW(resolve_run({{"model", "gmm"}, {"m", "10"}, {"iters", "0"}}, 250), ConfigError);
  const auto rc = resolve_run({{"model", "pmf"}, {"m", "ramp:50"}, {"rho", "const:0.85"}}, 7500);
  EXPECT_EQ(rc.batch_size, 7500u);
  EXPECT_EQ(std::get<svi::LinearRampM>(rc.m).slope, 50u);
}

TEST(Resolve, EvalCadenceDefault) {
  EXPECT_EQ(resolve_run({{"model", "gmm"}, {"algo", "batch"}, {"iters", "1000"}}, 10).eval_every, 1u);
  EXPECT_EQ(resolve_run({{"model", "gmm"}, {"algo", "batch"}, {"iters", "1001"}}, 10).eval_every, 10u);
  EXPECT_EQ(resolve_run({{"model", "gmm"}, {"algo", "batch"}, {"eval_every", "7"}}, 10).eval_every, 7u);
}

TEST(Problem, LoadErrors) {
  EXPECT_THROW(load_problem({{"model", "gmm"}}), ConfigError);
  EXPECT_THROW(load_problem({{"model", "gmm"}, {"generate", "gmm4"}, {"data", "x.csv"}}), ConfigError);
  EXPECT_THROW(load_problem({{"model", "gmm"}, {"generate", "lda"}}), ConfigError);
  EXPECT_THROW(load_problem({{"model", "gmm"}, {"data", "/nonexistent/x.csv"}}), DataError);
  EXPECT_THROW(load_problem({{"model", "lda"}, {"generate", "lda"}, {"gen_docs", "5"}, {"heldout", "5"}}), ConfigError);
  const auto p = load_problem({{"model", "lda"}, {"generate", "lda"}, {"gen_docs", "30"}, {"gen_vocab", "40"},
                               {"heldout", "4"}});
  EXPECT_EQ(p.n(), 26u);
  ASSERT_TRUE(p.heldout.has_value());
  EXPECT_EQ(p.heldout->docs.size(), 4u);
}

// ------------------------------------------------------------------- csv

TEST(Csv, QuotingAndParsing) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_field("two\nlines"), "\"two\nlines\"");
  std::ostringstream out;
  CsvWriter w(out);
  const std::vector<std::string> row{"a,b", "say \"hi\"", "two\nlines", ""};
  w.row(row);
  w.row({"1", "2", "3", "4"});
  w.flush();
  std::istringstream in(out.str());
  const auto rows = parse_csv(in);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], row);
}

TEST(Csv, EmptyTraceIsHeaderOnly) {
  const fs::path dir = scratch("csv_empty");
  emit_csv(dir / "t.csv", std::vector<TraceRow>{});
  std::ifstream in(dir / "t.csv");
  const auto rows = parse_csv(in);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0], kTraceHeader);
  EXPECT_TRUE(read_trace(dir / "t.csv").empty());
  fs::remove_all(dir);
}

TEST(Csv, TraceRoundTripsExactly) {
  const fs::path dir = scratch("csv_round");
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1e4);
  std::vector<TraceRow> t;
  double wall = 0.0;
  for (std::size_t i = 1; i <= 50; ++i) {
    wall += std::abs(nd(rng)) / 7.0;
    t.push_back({i, wall, nd(rng) / 3.0, 50, 10 * i, 1.0 / static_cast<double>(i + 2), 18446744073709551615ULL});
  }
  emit_csv(dir / "t.csv", t);
  const auto back = read_trace(dir / "t.csv");
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(back[i].iteration, t[i].iteration);
    EXPECT_EQ(back[i].wall_ms, t[i].wall_ms);
    EXPECT_EQ(back[i].elbo, t[i].elbo);
    EXPECT_EQ(back[i].m, t[i].m);
    EXPECT_EQ(back[i].rho, t[i].rho);
    EXPECT_EQ(back[i].seed, t[i].seed);
  }
  EXPECT_THROW(emit_csv(fs::path("/nonexistent/dir/t.csv"), t), std::exception);
  fs::remove_all(dir);
}

TEST(Csv, ShortestFloatFormat) {
  EXPECT_EQ(text::format_double(0.1), "0.1");
  EXPECT_EQ(text::format_double(1.0), "1");
  EXPECT_EQ(*text::parse_double(text::format_double(1.0 / 3.0)), 1.0 / 3.0);
}

// --------------------------------------------------------------- snapshot

TEST(Snapshot, RoundTrip) {
  ModelState s;
  Eigen::Matrix2d prec;
  prec << 2.0, 0.3, 0.3, 1.0 / 3.0;
  s.globals.push_back({expfam::mvn_from_mean_precision(Eigen::Vector2d(0.1, -7.25), prec),
                       expfam::mvn_from_mean_precision(Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity())});
  const auto d = expfam::dirichlet_from_concentration(Eigen::Vector3d(0.5, 1e-6, 3.0));
  s.globals.push_back({d, d});
  std::ostringstream out;
  save_snapshot(out, "gmm", s);
  EXPECT_EQ(out.str().rfind("sviplus-snapshot 1\n", 0), 0u);
  std::istringstream in(out.str());
  const auto back = load_snapshot(in);
  EXPECT_EQ(back.model_id, "gmm");
  ASSERT_EQ(back.state.globals.size(), 2u);
  for (std::size_t g = 0; g < 2; ++g) {
    EXPECT_EQ(back.state.globals[g].lambda.family, s.globals[g].lambda.family);
    EXPECT_EQ(back.state.globals[g].lambda.values, s.globals[g].lambda.values);
    EXPECT_EQ(back.state.globals[g].prior.values, s.globals[g].prior.values);
  }
}

TEST(Snapshot, VersionMismatchFails) {
  ModelState s;
  const auto d = expfam::dirichlet_from_concentration(Eigen::Vector2d(1, 2));
  s.globals.push_back({d, d});
  std::ostringstream out;
  save_snapshot(out, "lda", s);
  std::string text = out.str();
  text.replace(0, std::string("sviplus-snapshot 1").size(), "sviplus-snapshot 2");
  std::istringstream in(text);
  EXPECT_THROW(load_snapshot(in), ParseError);
  std::istringstream junk("hello\n");
  EXPECT_THROW(load_snapshot(junk), ParseError);
  std::string truncated = out.str();
  truncated.resize(truncated.size() / 2);
  std::istringstream cut(truncated);
  EXPECT_THROW(load_snapshot(cut), ParseError);
}

// -------------------------------------------------------------------- run

TEST(Run, SameTraceAcrossThreadCounts) {
  const auto problem = load_problem(gmm_config());
  auto c = gmm_config();
  const auto one = run(resolve_run(c, problem.n()), problem);
  c["threads"] = "4";
  const auto four = run(resolve_run(c, problem.n()), problem);
  EXPECT_EQ(elbos(one.trace), elbos(four.trace));
}

TEST(Run, SviPlusWithFullMIsSvi) {
  auto c = gmm_config();
  const auto problem = load_problem(c);
  c["m"] = "30";
  const auto plus = run(resolve_run(c, problem.n()), problem);
  c["algo"] = "svi";
  c.erase("m");
  const auto svi = run(resolve_run(c, problem.n()), problem);
  EXPECT_EQ(elbos(plus.trace), elbos(svi.trace));
}

TEST(Run, BatchTraceMonotoneAndWellFormed) {
  auto c = gmm_config();
  c["algo"] = "batch";
  c.erase("m");
  c.erase("rho");
  c.erase("batch_size");
  c["iters"] = "40";
  const auto problem = load_problem(c);
  const auto r = run(resolve_run(c, problem.n()), problem);
  ASSERT_EQ(r.trace.size(), 40u);
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    EXPECT_GT(r.trace[i].iteration, r.trace[i - 1].iteration);
    EXPECT_GE(r.trace[i].wall_ms, r.trace[i - 1].wall_ms);
    EXPECT_GE(r.trace[i].elbo, r.trace[i - 1].elbo - 1e-8);
    EXPECT_EQ(r.trace[i].batch_size, 120u);
    EXPECT_EQ(r.trace[i].rho, 1.0);
  }
}

TEST(Run, EvalCadence) {
  auto c = gmm_config();
  c["iters"] = "10";
  c["eval_every"] = "4";
  const auto problem = load_problem(c);
  const auto r = run(resolve_run(c, problem.n()), problem);
  std::vector<std::size_t> its;
  for (const auto& row : r.trace) its.push_back(row.iteration);
  // every 4th iteration plus the final one
  EXPECT_EQ(its, (std::vector<std::size_t>{4, 8, 10}));
}

TEST(Run, PmfBatchAnnealingFromConfigAlone) {
  ConfigMap c{{"model", "pmf"},     {"generate", "ratings"}, {"gen_users", "40"}, {"gen_items", "30"},
              {"gen_density", "0.2"}, {"m", "ramp:50"},      {"rho", "const:0.85"}, {"iters", "5"}};
  const auto problem = load_problem(c);
  const auto rc = resolve_run(c, problem.n());
  const auto r = run(rc, problem);
  ASSERT_EQ(r.trace.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(r.trace[i].batch_size, problem.n());
    EXPECT_EQ(r.trace[i].m, std::min<std::size_t>(50 * (i + 1), problem.n()));
    EXPECT_EQ(r.trace[i].rho, 0.85);
  }
}

TEST(Run, OutputDirectoryContents) {
  const fs::path dir = scratch("run_out");
  auto c = gmm_config();
  c["out"] = dir.string();
  const auto problem = load_problem(c);
  const auto rc = resolve_run(c, problem.n());
  const auto r = run(rc, problem);
  for (const char* f : {"config.txt", "trace.csv", "snapshot.txt", "summary.csv"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(elbos(read_trace(dir / "trace.csv")), elbos(r.trace));
  const auto echoed = load_config_file(dir / "config.txt");
  EXPECT_EQ(echoed.at("batch_size"), "30");
  EXPECT_EQ(echoed.at("m"), "6");
  const auto snap = load_snapshot(dir / "snapshot.txt");
  EXPECT_EQ(snap.model_id, "gmm");
  EXPECT_EQ(snap.state.globals.size(), r.final_state.globals.size());
  EXPECT_EQ(snap.state.globals[1].lambda.values, r.final_state.globals[1].lambda.values);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------- compare

TEST(Compare, SelfCompareHasZeroSpread) {
  auto a = gmm_config();
  a["name"] = "a";
  auto b = a;
  b["name"] = "b";
  const auto res = compare({a, b}, {0, 1, 2});
  ASSERT_EQ(res.names, (std::vector<std::string>{"a", "b"}));
  for (std::size_t s = 0; s < 3; ++s) EXPECT_EQ(elbos(res.runs[0][s]), elbos(res.runs[1][s]));
  EXPECT_EQ(res.final_mean[0], res.final_mean[1]);
  // ties are nobody's win
  EXPECT_EQ(res.wins, (std::vector<std::size_t>{0, 0}));
}

TEST(Compare, SharedSeedColumn) {
  auto a = gmm_config();
  a["name"] = "m6";
  auto b = a;
  b["name"] = "m15";
  b["m"] = "15";
  const auto res = compare({a, b}, {4, 9});
  EXPECT_EQ(res.seeds, (std::vector<std::uint64_t>{4, 9}));
  for (std::size_t s = 0; s < 2; ++s) {
    ASSERT_EQ(res.runs[0][s].size(), res.runs[1][s].size());
    for (std::size_t i = 0; i < res.runs[0][s].size(); ++i) {
      EXPECT_EQ(res.runs[0][s][i].seed, res.seeds[s]);
      EXPECT_EQ(res.runs[1][s][i].seed, res.seeds[s]);
      EXPECT_EQ(res.runs[0][s][i].iteration, res.runs[1][s][i].iteration);
    }
  }
  const fs::path dir = scratch("compare");
  write_compare(dir, res);
  EXPECT_FALSE(fs::is_empty(dir));
  fs::remove_all(dir);
}

TEST(Compare, Helpers) {
  EXPECT_EQ(parse_seeds("3"), (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(parse_seeds("5,7, 11"), (std::vector<std::uint64_t>{5, 7, 11}));
  EXPECT_THROW(parse_seeds(""), ConfigError);
  EXPECT_THROW(parse_seeds("a"), ConfigError);
  const auto [m, sd] = mean_sd({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(m, 2.0);
  EXPECT_DOUBLE_EQ(sd, 1.0);
  EXPECT_EQ(mean_sd({4.0}).second, 0.0);
}

// ---------------------------------------------------------------- frontend

TEST(Frontend, ExitCodes) {
  const fs::path dir = scratch("frontend");
  EXPECT_EQ(call({"fit-gmm", "--generate", "gmm4", "--algo", "svi+", "--batch-size", "50", "--m", "80"}), kConfigError);
  EXPECT_EQ(call({"fit-gmm", "--algo", "warp", "--generate", "gmm4"}), kConfigError);
  EXPECT_EQ(call({"fit-gmm", "--data", (dir / "missing.csv").string(), "--algo", "batch"}), kDataError);
  {
    std::ofstream bad(dir / "bad.csv");
    bad << "1,2\n3,x\n";
  }
  EXPECT_EQ(call({"fit-gmm", "--data", (dir / "bad.csv").string(), "--algo", "batch"}), kDataError);
  EXPECT_EQ(call({"no-such-command"}), kConfigError);
  fs::remove_all(dir);
}

TEST(Frontend, FitEchoesConfigAndFlagsWin) {
  const fs::path dir = scratch("frontend_fit");
  {
    std::ofstream cfg(dir / "run.txt");
    cfg << "generate = gmm4\niters = 50\nalgo = svi\nbatch_size = 40\n";
  }
  const fs::path out = dir / "out";
  EXPECT_EQ(call({"fit-gmm", "--config", (dir / "run.txt").string(), "--iters", "6", "--seed", "2", "--out",
                  out.string()}),
            kOk);
  const auto echoed = load_config_file(out / "config.txt");
  EXPECT_EQ(echoed.at("iters"), "6");
  EXPECT_EQ(echoed.at("model"), "gmm");
  EXPECT_EQ(echoed.at("m"), "40");
  EXPECT_EQ(read_trace(out / "trace.csv").size(), 6u);
  fs::remove_all(dir);
}

TEST(Frontend, CompareAndDiagnose) {
  const fs::path dir = scratch("frontend_cmp");
  {
    std::ofstream a(dir / "a.txt");
    a << "name = svi\nmodel = gmm\ngenerate = gmm4\nalgo = svi\nbatch_size = 25\n";
    std::ofstream b(dir / "b.txt");
    b << "name = plus\nmodel = gmm\ngenerate = gmm4\nalgo = svi+\nbatch_size = 25\nm = 5\n";
  }
  EXPECT_EQ(call({"compare", "--config", (dir / "a.txt").string(), "--config", (dir / "b.txt").string(), "--seeds",
                  "2", "--iters", "5", "--out", (dir / "cmp").string()}),
            kOk);
  EXPECT_FALSE(fs::is_empty(dir / "cmp"));
  EXPECT_EQ(call({"diagnose-noise", "--generate", "gmm4", "--m", "5", "--taus", "1,2", "--replicates", "200", "--out",
                  (dir / "diag").string()}),
            kOk);
  EXPECT_FALSE(fs::is_empty(dir / "diag"));
  EXPECT_EQ(call({"occupancy", "--generate", "gmm4", "--algo", "batch", "--iters", "5", "--seeds", "2", "--out",
                  (dir / "occ").string()}),
            kOk);
  EXPECT_FALSE(fs::is_empty(dir / "occ"));
  fs::remove_all(dir);
}
