#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <fstream>
#include <istream>
#include <ostream>

#include "sviplus/cli.hpp"
#include "sviplus/error.hpp"
#include "sviplus/kernels.hpp"
#include "sviplus/models/gmm.hpp"
#include "sviplus/models/lda.hpp"
#include "sviplus/models/pmf.hpp"
#include "sviplus/text.hpp"

namespace sviplus::cli {
namespace {

std::string str(std::string_view s) { return std::string(s); }

const std::string& get(const ConfigMap& c, const std::string& key) {
  static const std::string empty;
  auto it = c.find(key);
  return it == c.end() ? empty : it->second;
}

bool is_set(const ConfigMap& c, const std::string& key) { return !get(c, key).empty(); }

long long get_int(const ConfigMap& c, const std::string& key, long long lo, long long hi) {
  const auto v = text::parse_int(get(c, key));
  if (!v) throw ConfigError(key + "=" + get(c, key) + " is not an integer");
  if (*v < lo || *v > hi)
    throw ConfigError(key + "=" + get(c, key) + " must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return *v;
}

std::size_t get_size(const ConfigMap& c, const std::string& key, long long lo = 0) {
  return static_cast<std::size_t>(get_int(c, key, lo, std::numeric_limits<long long>::max()));
}

double get_double(const ConfigMap& c, const std::string& key) {
  const auto v = text::parse_double(get(c, key));
  if (!v || !std::isfinite(*v)) throw ConfigError(key + "=" + get(c, key) + " is not a finite number");
  return *v;
}

double get_positive(const ConfigMap& c, const std::string& key) {
  const double v = get_double(c, key);
  if (!(v > 0.0)) throw ConfigError(key + "=" + get(c, key) + " must be positive");
  return v;
}

bool get_bool(const ConfigMap& c, const std::string& key) {
  const std::string& v = get(c, key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + "=" + v + " is not a boolean (true/false)");
}

std::uint64_t get_seed(const ConfigMap& c, const std::string& key) {
  const std::string& v = get(c, key);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key + "=" + v + " is not a non-negative integer");
  return out;
}

void check_key(const std::string& key, const std::string& where) {
  if (!config_defaults().contains(key)) throw ConfigError(where + "unknown setting '" + key + "'");
}

// "name:key=v,key=v" -> generate=name plus gen_<key>=v
void expand_generate(ConfigMap& c) {
  std::string& g = c["generate"];
  const auto colon = g.find(':');
  if (colon == std::string::npos) return;
  const std::string params = g.substr(colon + 1);
  g.resize(colon);
  for (auto item : text::split(params, ",")) {
    item = text::trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw ConfigError("generate: expected key=value, got '" + str(item) + "'");
    const std::string key = "gen_" + str(text::trim(item.substr(0, eq)));
    check_key(key, "generate: ");
    c[key] = str(text::trim(item.substr(eq + 1)));
  }
}

}  // namespace

const ConfigMap& config_defaults() {
  static const ConfigMap defaults{
      // run
      {"name", ""},
      {"model", ""},
      {"algo", "svi+"},
      {"batch_size", "all"},
      {"m", ""},
      {"rho", ""},
      {"iters", "100"},
      {"seed", "0"},
      {"eval_every", ""},
      {"out", ""},
      {"threads", "1"},
      {"kernel", ""},
      // data
      {"data", ""},
      {"format", "auto"},
      {"vocab", ""},
      {"generate", ""},
      {"data_seed", "1"},
      {"skip_header", "false"},
      {"label_column", "-1"},
      {"standardize", "false"},
      {"heldout", "0"},
      // generators
      {"gen_n", "250"},
      {"gen_users", "500"},
      {"gen_items", "300"},
      {"gen_rank", "5"},
      {"gen_density", "0.05"},
      {"gen_noise", "0.25"},
      {"gen_offset", "3"},
      {"gen_round", "true"},
      {"gen_docs", "2000"},
      {"gen_vocab", "500"},
      {"gen_topics", "10"},
      {"gen_doc_len", "80"},
      // models
      {"k", ""},
      {"dirichlet", "1"},
      {"dp_mass", "1"},
      {"prior_beta", "1"},
      {"prior_dof", ""},
      {"rank", "5"},
      {"prior_var", "1"},
      {"noise_var", "0.5"},
      {"alternating", "true"},
      {"alpha", ""},
      {"eta", "0.01"},
      {"local_iters", "100"},
      {"local_tol", "0.001"},
      // diagnostics and occupancy
      {"taus", "1,2,4,8"},
      {"replicates", "2000"},
      {"repeats", "1"},
      {"warm_sweeps", "5"},
      {"seeds", "10"},
      {"threshold", "0.01"},
  };
  return defaults;
}

ConfigMap parse_config(std::istream& in, const std::string& source) {
  ConfigMap out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = text::trim(body);
    if (!body.empty() && body.back() == '\r') body = text::trim(body.substr(0, body.size() - 1));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = source + ": line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key=value");
    const std::string key = str(text::trim(body.substr(0, eq)));
    check_key(key, where);
    if (out.contains(key)) throw ConfigError(where + "'" + key + "' is set twice");
    out[key] = str(text::trim(body.substr(eq + 1)));
  }
  return out;
}

ConfigMap load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  return parse_config(in, path.string());
}

void write_config(std::ostream& out, const ConfigMap& config) {
  for (const auto& [k, v] : config) out << k << " = " << v << "\n";
}

ConfigMap merge_config(ConfigMap base, const ConfigMap& overrides) {
  for (const auto& [k, v] : base) check_key(k, "");
  for (const auto& [k, v] : overrides) {
    check_key(k, "");
    base[k] = v;
  }
  for (const auto& [k, v] : config_defaults())
    if (!base.contains(k)) base[k] = v;
  expand_generate(base);
  return base;
}

Algo parse_algo(const std::string& s) {
  if (s == "batch") return Algo::Batch;
  if (s == "svi") return Algo::Svi;
  if (s == "svi+") return Algo::SviPlus;
  throw ConfigError("algo=" + s + " must be one of batch, svi, svi+");
}

std::string algo_name(Algo a) {
  switch (a) {
    case Algo::Batch: return "batch";
    case Algo::Svi: return "svi";
    case Algo::SviPlus: return "svi+";
  }
  return "?";
}

std::optional<std::size_t> parse_batch_size(const std::string& s) {
  if (s.empty() || s == "all") return std::nullopt;
  const auto v = text::parse_int(s);
  if (!v || *v < 1) throw ConfigError("batch_size=" + s + " must be a positive integer or 'all'");
  return static_cast<std::size_t>(*v);
}

std::optional<svi::EffectiveBatchSchedule> parse_m(const std::string& s) {
  if (s.empty() || s == "all") return std::nullopt;
  if (s.starts_with("ramp:")) {
    const auto parts = text::split(std::string_view(s).substr(5), ":");
    if (parts.size() > 2) throw ConfigError("m=" + s + ": expected ramp:<c> or ramp:<c>:<cap>");
    const auto slope = text::parse_int(parts[0]);
    if (!slope || *slope < 1) throw ConfigError("m=" + s + ": ramp slope must be a positive integer");
    svi::LinearRampM ramp{static_cast<std::size_t>(*slope)};
    if (parts.size() == 2) {
      const auto cap = text::parse_int(parts[1]);
      if (!cap || *cap < 1) throw ConfigError("m=" + s + ": ramp cap must be a positive integer");
      ramp.cap = static_cast<std::size_t>(*cap);
    }
    return ramp;
  }
  const auto v = text::parse_int(s);
  if (!v || *v < 1) throw ConfigError("m=" + s + " must be a positive integer, 'all' or ramp:<c>");
  return svi::ConstantM{static_cast<std::size_t>(*v)};
}

svi::StepSchedule parse_rho(const std::string& s) {
  svi::StepSchedule out;
  if (s.starts_with("const:")) {
    const auto v = text::parse_double(std::string_view(s).substr(6));
    if (!v) throw ConfigError("rho=" + s + ": bad constant");
    out = svi::ConstantStep{*v};
  } else if (s.starts_with("power:")) {
    const auto parts = text::split(std::string_view(s).substr(6), ",");
    if (parts.size() != 2) throw ConfigError("rho=" + s + ": expected power:<tau0>,<kappa>");
    const auto tau0 = text::parse_double(parts[0]);
    const auto kappa = text::parse_double(parts[1]);
    if (!tau0 || !kappa) throw ConfigError("rho=" + s + ": bad number");
    out = svi::PowerDecayStep{*tau0, *kappa};
  } else {
    throw ConfigError("rho=" + s + " must be const:<v> or power:<tau0>,<kappa>");
  }
  try {
    svi::validate(out);
  } catch (const ContractError& e) {
    throw ConfigError("rho=" + s + ": " + e.what());
  }
  return out;
}

std::string format_m(const svi::EffectiveBatchSchedule& m) {
  if (const auto* c = std::get_if<svi::ConstantM>(&m)) return std::to_string(c->m);
  const auto& r = std::get<svi::LinearRampM>(m);
  std::string out = "ramp:" + std::to_string(r.slope);
  if (r.cap != SIZE_MAX) out += ":" + std::to_string(r.cap);
  return out;
}

std::string format_rho(const svi::StepSchedule& rho) {
  if (const auto* c = std::get_if<svi::ConstantStep>(&rho)) return "const:" + text::format_double(c->rho);
  const auto& p = std::get<svi::PowerDecayStep>(rho);
  return "power:" + text::format_double(p.tau0) + "," + text::format_double(p.kappa);
}

RunConfig resolve_run(const ConfigMap& input, std::size_t n) {
  ConfigMap c = merge_config(input, {});
  RunConfig rc;
  rc.model = get(c, "model");
  if (rc.model != "gmm" && rc.model != "dpgmm" && rc.model != "pmf" && rc.model != "lda")
    throw ConfigError("model=" + rc.model + " must be one of gmm, dpgmm, pmf, lda");
  rc.name = is_set(c, "name") ? get(c, "name") : rc.model + "-" + get(c, "algo");
  rc.algo = parse_algo(get(c, "algo"));
  rc.iters = get_size(c, "iters", 1);
  rc.seed = get_seed(c, "seed");
  rc.threads = static_cast<unsigned>(get_int(c, "threads", 1, 1024));
  rc.out = get(c, "out");
  if (is_set(c, "kernel")) {
    try {
      kernels::parse_isa(get(c, "kernel"));
    } catch (const ContractError&) {
      throw ConfigError("kernel=" + get(c, "kernel") + " must be one of scalar, avx2, neon");
    }
  }
  if (n == 0) throw ConfigError("the dataset is empty");

  const std::string raw_batch = get(c, "batch_size");
  const auto batch = parse_batch_size(raw_batch);
  if (batch && *batch > n)
    throw ConfigError("batch_size=" + raw_batch + " exceeds the dataset size N=" + std::to_string(n));
  const auto m = parse_m(get(c, "m"));
  const bool rho_set = is_set(c, "rho");
  const svi::StepSchedule rho = rho_set ? parse_rho(get(c, "rho")) : svi::StepSchedule{svi::PowerDecayStep{1.0, 0.7}};
  const bool m_is_constant = m && std::holds_alternative<svi::ConstantM>(*m);
  const std::size_t m_value = m_is_constant ? std::get<svi::ConstantM>(*m).m : 0;

  switch (rc.algo) {
    case Algo::Batch: {
      if (batch && *batch != n)
        throw ConfigError("algo=batch requires batch_size=all (N=" + std::to_string(n) + "), got batch_size=" + raw_batch);
      if (m && !(m_is_constant && m_value == n))
        throw ConfigError("algo=batch requires m=all (N=" + std::to_string(n) + "), got m=" + get(c, "m"));
      if (rho_set) {
        const auto* k = std::get_if<svi::ConstantStep>(&rho);
        if (!k || k->rho != 1.0) throw ConfigError("algo=batch requires rho=const:1, got rho=" + get(c, "rho"));
      }
      rc.batch_size = n;
      rc.m = svi::ConstantM{n};
      rc.rho = svi::ConstantStep{1.0};
      break;
    }
    case Algo::Svi: {
      rc.batch_size = batch.value_or(n);
      if (m && !(m_is_constant && m_value == rc.batch_size))
        throw ConfigError("algo=svi requires m equal to batch_size=" + std::to_string(rc.batch_size) + ", got m=" +
                          get(c, "m"));
      rc.m = svi::ConstantM{rc.batch_size};
      rc.rho = rho;
      break;
    }
    case Algo::SviPlus: {
      rc.batch_size = batch.value_or(n);
      if (!is_set(c, "m")) throw ConfigError("algo=svi+ requires m (an integer, all, or ramp:<c>)");
      if (m_is_constant && m_value > rc.batch_size)
        throw ConfigError("m=" + get(c, "m") + " exceeds batch_size=" + std::to_string(rc.batch_size));
      rc.m = m.value_or(svi::EffectiveBatchSchedule{svi::ConstantM{rc.batch_size}});
      rc.rho = rho;
      break;
    }
  }

  rc.eval_every = is_set(c, "eval_every") ? get_size(c, "eval_every", 1) : (rc.iters <= 1000 ? 1 : 10);

  c["batch_size"] = std::to_string(rc.batch_size);
  c["m"] = format_m(rc.m);
  c["rho"] = format_rho(rc.rho);
  c["eval_every"] = std::to_string(rc.eval_every);
  c["name"] = rc.name;
  if (!is_set(c, "k")) c["k"] = rc.model == "dpgmm" ? "50" : rc.model == "lda" ? "10" : "4";
  rc.resolved = std::move(c);
  return rc;
}

// ---------------------------------------------------------------- problems

Problem load_problem(const ConfigMap& input) {
  const ConfigMap c = merge_config(input, {});
  const std::string model = get(c, "model");
  const bool has_data = is_set(c, "data");
  const bool has_gen = is_set(c, "generate");
  if (has_data && has_gen) throw ConfigError("data and generate are mutually exclusive");
  if (!has_data && !has_gen) throw ConfigError("one of data or generate is required");
  const std::uint64_t data_seed = get_seed(c, "data_seed");
  const std::string gen = get(c, "generate");
  const std::string path = get(c, "data");

  // Input errors from the parsers are data errors; everything else is config.
  auto read = [&](auto&& fn) {
    try {
      return fn();
    } catch (const ParseError& e) {
      throw DataError(e.what());
    } catch (const ContractError& e) {
      throw DataError(e.what());
    } catch (const std::filesystem::filesystem_error& e) {
      throw DataError(e.what());
    }
  };
  auto hyper_error = [](auto&& fn) {
    try {
      return fn();
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    } catch (const InvalidParameter& e) {
      throw ConfigError(e.what());
    }
  };

  Problem p;
  if (model == "gmm" || model == "dpgmm") {
    data::FeatureMatrix fm;
    if (has_gen) {
      if (gen != "gmm4") throw ConfigError("generate=" + gen + " is not a mixture generator (use gmm4)");
      fm = data::gen_gmm_synthetic(get_size(c, "gen_n", 1), data::GmmClusterSpec::four_corners(), data_seed);
    } else {
      data::CsvMatrixOptions opts;
      opts.skip_header = get_bool(c, "skip_header");
      opts.label_column = static_cast<int>(get_int(c, "label_column", -1, 1 << 20));
      fm = read([&] { return data::parse_csv_matrix(path, opts); });
    }
    if (get_bool(c, "standardize")) data::standardize(fm);
    models::GmmHyper h;
    h.k = is_set(c, "k") ? get_size(c, "k", 2) : (model == "dpgmm" ? 50 : 4);
    h.dirichlet = get_positive(c, "dirichlet");
    if (model == "dpgmm") h.mixing_prior = hyper_error([&] { return models::dp_gmm_prior(h.k, get_positive(c, "dp_mass")); });
    h.prior_beta = get_positive(c, "prior_beta");
    if (is_set(c, "prior_dof")) h.prior_dof = get_double(c, "prior_dof");
    if (fm.rows() < 2) throw DataError((has_data ? path : gen) + ": need at least two rows");
    p.model = hyper_error([&] { return std::make_unique<models::GmmModel>(std::move(fm.x), h); });
  } else if (model == "pmf") {
    data::RatingsDataset ratings;
    if (has_gen) {
      if (gen != "ratings") throw ConfigError("generate=" + gen + " is not a ratings generator (use ratings)");
      data::RatingsGenOptions o;
      o.n_users = get_size(c, "gen_users", 1);
      o.n_items = get_size(c, "gen_items", 1);
      o.rank = get_size(c, "gen_rank", 1);
      o.density = get_positive(c, "gen_density");
      o.sigma2 = get_double(c, "gen_noise");
      o.offset = get_double(c, "gen_offset");
      o.round_and_clip = get_bool(c, "gen_round");
      o.seed = data_seed;
      ratings = hyper_error([&] { return data::gen_ratings_synthetic(o).data; });
    } else {
      std::string fmt = get(c, "format");
      if (fmt == "auto") fmt = std::filesystem::path(path).extension() == ".csv" ? "csv" : "dat";
      if (fmt != "csv" && fmt != "dat") throw ConfigError("format=" + fmt + " must be auto, dat or csv for ratings");
      ratings = read([&] {
        return data::parse_movielens(path, fmt == "csv" ? data::RatingsFormat::Csv : data::RatingsFormat::DoubleColonDat);
      });
    }
    models::PmfHyper h;
    h.rank = get_size(c, "rank", 1);
    h.prior_var = get_positive(c, "prior_var");
    h.noise_var = get_positive(c, "noise_var");
    h.alternating = get_bool(c, "alternating");
    p.model = hyper_error([&] { return std::make_unique<models::PmfModel>(std::move(ratings), h); });
  } else if (model == "lda") {
    data::BowCorpus corpus;
    if (has_gen) {
      if (gen != "lda") throw ConfigError("generate=" + gen + " is not a corpus generator (use lda)");
      corpus = hyper_error([&] {
        return data::gen_lda_synthetic(get_size(c, "gen_docs", 1), get_size(c, "gen_vocab", 2),
                                       get_size(c, "gen_topics", 1), get_size(c, "gen_doc_len", 1), data_seed)
            .corpus;
      });
    } else {
      corpus = read([&] { return data::parse_bow(path, get(c, "vocab")); });
    }
    const std::size_t heldout = get_size(c, "heldout", 0);
    if (heldout > 0) {
      if (heldout >= corpus.docs.size())
        throw ConfigError("heldout=" + std::to_string(heldout) + " leaves no training documents (D=" +
                          std::to_string(corpus.docs.size()) + ")");
      auto [train, test] = data::split_heldout(corpus, heldout);
      corpus = std::move(train);
      p.heldout = std::move(test);
    }
    models::LdaHyper h;
    h.k = is_set(c, "k") ? get_size(c, "k", 1) : 10;
    if (is_set(c, "alpha")) h.alpha = get_positive(c, "alpha");
    h.eta = get_positive(c, "eta");
    h.max_iters = get_size(c, "local_iters", 1);
    h.tol = get_double(c, "local_tol");
    p.model = hyper_error([&] { return std::make_unique<models::LdaModel>(std::move(corpus), h); });
  } else {
    throw ConfigError("model=" + model + " must be one of gmm, dpgmm, pmf, lda");
  }
  if (p.model->num_data() == 0) throw DataError("the dataset is empty");
  return p;
}

}  // namespace sviplus::cli
