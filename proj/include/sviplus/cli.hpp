#pragma once

// Experiment harness behind the sviplus command-line tool: flat key=value
// configuration, dataset loading, the fit loop with ELBO traces, snapshots,
// multi-config comparison, noise diagnostics and occupancy summaries.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sviplus/data.hpp"
#include "sviplus/model.hpp"
#include "sviplus/svi_engine.hpp"

namespace sviplus::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kNumericalFailure = 4 };

/// Input that could not be read or did not describe a usable dataset.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------------ config

/// Flat key -> value settings. Keys are validated against the known set.
using ConfigMap = std::map<std::string, std::string>;

/// Every recognised key with its default value ("" means unset).
const ConfigMap& config_defaults();

/// "key = value" per line; '#' starts a comment. Unknown or repeated keys
/// are rejected with the line number.
ConfigMap parse_config(std::istream& in, const std::string& source = "<config>");
ConfigMap load_config_file(const std::filesystem::path& path);
void write_config(std::ostream& out, const ConfigMap& config);

/// Applies the overrides on top of base (overrides win) after checking keys.
ConfigMap merge_config(ConfigMap base, const ConfigMap& overrides);

enum class Algo { Batch, Svi, SviPlus };
Algo parse_algo(const std::string& s);
std::string algo_name(Algo a);

/// "int" or "all"; nullopt means the whole dataset.
std::optional<std::size_t> parse_batch_size(const std::string& s);
/// "<int>", "all", "ramp:<c>" or "ramp:<c>:<cap>"; nullopt means M = |S|.
std::optional<svi::EffectiveBatchSchedule> parse_m(const std::string& s);
/// "const:<v>" or "power:<tau0>,<kappa>".
svi::StepSchedule parse_rho(const std::string& s);
std::string format_m(const svi::EffectiveBatchSchedule& m);
std::string format_rho(const svi::StepSchedule& rho);

struct RunConfig {
  std::string name;   // label used by compare
  std::string model;  // gmm | dpgmm | pmf | lda
  Algo algo = Algo::SviPlus;
  std::size_t batch_size = 0;  // resolved against N
  svi::EffectiveBatchSchedule m = svi::ConstantM{SIZE_MAX};
  svi::StepSchedule rho = svi::ConstantStep{1.0};
  std::size_t iters = 100;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  unsigned threads = 1;
  std::filesystem::path out;
  ConfigMap resolved;  // the full key set after defaults, echoed next to results
};

/// A loaded dataset bound to its model.
struct Problem {
  std::unique_ptr<Model> model;
  // Extra evaluation data for LDA (held-out documents); empty otherwise.
  std::optional<data::BowCorpus> heldout;
  std::size_t n() const { return model->num_data(); }
};

/// Builds the model and dataset described by config (data file or generator).
/// Throws DataError for unreadable or malformed input, ConfigError otherwise.
Problem load_problem(const ConfigMap& config);

/// Checks every setting against the dataset size and fixes what the algorithm
/// implies (batch: |S| = N, M = N, rho = 1; svi: M = |S|). Contradictions
/// throw ConfigError naming the fields involved.
RunConfig resolve_run(const ConfigMap& config, std::size_t n);

// ------------------------------------------------------------------- runs

struct TraceRow {
  std::size_t iteration = 0;
  double wall_ms = 0.0;
  double elbo = 0.0;
  std::size_t batch_size = 0;
  std::size_t m = 0;
  double rho = 0.0;
  std::uint64_t seed = 0;
};

inline const std::vector<std::string> kTraceHeader{"iteration", "wall_ms", "elbo", "batch_size", "M_t", "rho_t", "seed"};

struct RunResult {
  std::vector<TraceRow> trace;
  ModelState final_state;
  std::vector<std::pair<std::string, double>> summary;
};

/// The objective reported in traces: the training ELBO, or for LDA with
/// held-out documents the held-out objective.
double evaluate(const Problem& problem, const ModelState& state);

/// Runs the configured loop. With an output directory set, trace.csv is
/// written row by row and config.txt, snapshot.txt and summary.csv at the end.
RunResult run(const RunConfig& config, const Problem& problem);

// -------------------------------------------------------------------- csv

/// RFC 4180 quoting where needed; doubles in shortest round-trip form.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);
  explicit CsvWriter(std::ostream& out);
  void row(const std::vector<std::string>& fields);
  void flush();

 private:
  std::unique_ptr<std::ofstream> owned_;
  std::ostream* out_;
  std::filesystem::path path_;
};

std::string csv_field(const std::string& s);
std::vector<std::string> trace_fields(const TraceRow& r);
void emit_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace);
void emit_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
              const std::vector<std::vector<std::string>>& rows);
/// Parses one RFC 4180 record per row (quoted fields, doubled quotes, embedded newlines).
std::vector<std::vector<std::string>> parse_csv(std::istream& in);
std::vector<TraceRow> read_trace(const std::filesystem::path& path);

// --------------------------------------------------------------- snapshot

inline constexpr int kSnapshotVersion = 1;

void save_snapshot(std::ostream& out, const std::string& model_id, const ModelState& state);
void save_snapshot(const std::filesystem::path& path, const std::string& model_id, const ModelState& state);
struct Snapshot {
  std::string model_id;
  ModelState state;
};
/// Throws ParseError on a version or layout mismatch.
Snapshot load_snapshot(std::istream& in, const std::string& source = "<snapshot>");
Snapshot load_snapshot(const std::filesystem::path& path);

// ---------------------------------------------------------------- compare

struct CompareResult {
  std::vector<std::string> names;
  std::vector<std::uint64_t> seeds;
  // runs[c][s] is the trace of config c at seed s
  std::vector<std::vector<std::vector<TraceRow>>> runs;
  std::vector<std::size_t> wins;          // strictly best final objective, per config
  std::vector<double> final_mean;
  std::vector<double> final_sd;
};

/// Runs every (config, seed) pair. The seed replaces each config's own seed,
/// so every config at a given seed shares its batch and noise streams.
CompareResult compare(const std::vector<ConfigMap>& configs, const std::vector<std::uint64_t>& seeds);
void write_compare(const std::filesystem::path& dir, const CompareResult& result);

/// "N" means seeds 0..N-1; "a,b,c" lists seeds explicitly.
std::vector<std::uint64_t> parse_seeds(const std::string& s);

/// Mean and sample standard deviation; sd is 0 for fewer than two values.
std::pair<double, double> mean_sd(const std::vector<double>& x);

// --------------------------------------------------------------- frontend

/// Entry point of the command-line tool; returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace sviplus::cli
