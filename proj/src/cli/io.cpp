// CSV and snapshot serialization.

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "sviplus/cli.hpp"
#include "sviplus/error.hpp"
#include "sviplus/text.hpp"

namespace sviplus::cli {

// -------------------------------------------------------------------- csv

CsvWriter::CsvWriter(const std::filesystem::path& path)
    : owned_(std::make_unique<std::ofstream>(path, std::ios::binary)), out_(owned_.get()), path_(path) {
  if (!*owned_) throw std::runtime_error(path.string() + ": cannot open for writing");
}

CsvWriter::CsvWriter(std::ostream& out) : out_(&out) {}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) *out_ << ',';
    *out_ << csv_field(fields[i]);
  }
  *out_ << "\r\n";
  if (!*out_) throw std::runtime_error((path_.empty() ? std::string("<stream>") : path_.string()) + ": write failed");
}

void CsvWriter::flush() { out_->flush(); }

std::vector<std::string> trace_fields(const TraceRow& r) {
  return {std::to_string(r.iteration), text::format_double(r.wall_ms), text::format_double(r.elbo),
          std::to_string(r.batch_size), std::to_string(r.m),         text::format_double(r.rho),
          std::to_string(r.seed)};
}

void emit_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace) {
  CsvWriter w(path);
  w.row(kTraceHeader);
  for (const auto& r : trace) w.row(trace_fields(r));
  w.flush();
}

void emit_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
              const std::vector<std::vector<std::string>>& rows) {
  CsvWriter w(path);
  w.row(header);
  for (const auto& r : rows) w.row(r);
  w.flush();
}

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;  // current record has content
  char ch = 0;
  while (in.get(ch)) {
    if (quoted) {
      if (ch == '"') {
        if (in.peek() == '"') {
          in.get(ch);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty()) {
          record.push_back(std::move(field));
          out.push_back(std::move(record));
        }
        record.clear();
        field.clear();
        any = false;
        break;
      default:
        field += ch;
        any = true;
    }
  }
  if (quoted) throw ParseError("csv: unterminated quoted field");
  if (any || !field.empty()) {
    record.push_back(std::move(field));
    out.push_back(std::move(record));
  }
  return out;
}

std::vector<TraceRow> read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open");
  const auto rows = parse_csv(in);
  if (rows.empty() || rows.front() != kTraceHeader) throw ParseError(path.string() + ": not a trace file");
  std::vector<TraceRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    const std::string where = path.string() + ": row " + std::to_string(i + 1);
    if (f.size() != kTraceHeader.size()) throw ParseError(where + ": expected 7 fields");
    auto num = [&](const std::string& s) {
      const auto v = text::parse_double(s);
      if (!v) throw ParseError(where + ": bad number '" + s + "'");
      return *v;
    };
    auto integer = [&](const std::string& s) {
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(where + ": bad integer '" + s + "'");
      return v;
    };
    out.push_back({static_cast<std::size_t>(integer(f[0])), num(f[1]), num(f[2]), static_cast<std::size_t>(integer(f[3])),
                   static_cast<std::size_t>(integer(f[4])), num(f[5]), integer(f[6])});
  }
  return out;
}

// --------------------------------------------------------------- snapshot
//
//   sviplus-snapshot <version>
//   layout <natural-parameter layout version>
//   model <id>
//   globals <count>
//   then per global: "<family> <dim>", "lambda v...", "prior v..."
//   end

namespace {

std::string family_tag(expfam::FamilyKind k) {
  switch (k) {
    case expfam::FamilyKind::Dirichlet: return "dirichlet";
    case expfam::FamilyKind::MultivariateGaussian: return "mvn";
    case expfam::FamilyKind::NormalWishart: return "normal-wishart";
  }
  return "?";
}

void write_values(std::ostream& out, const char* tag, const Eigen::VectorXd& v) {
  out << tag;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << text::format_double(v[i]);
  out << '\n';
}

}  // namespace

void save_snapshot(std::ostream& out, const std::string& model_id, const ModelState& state) {
  out << "sviplus-snapshot " << kSnapshotVersion << '\n';
  out << "layout " << expfam::kLayoutVersion << '\n';
  out << "model " << model_id << '\n';
  out << "globals " << state.globals.size() << '\n';
  for (const auto& g : state.globals) {
    out << family_tag(g.lambda.family.kind) << ' ' << g.lambda.family.dim << '\n';
    write_values(out, "lambda", g.lambda.values);
    write_values(out, "prior", g.prior.values);
  }
  out << "end\n";
}

void save_snapshot(const std::filesystem::path& path, const std::string& model_id, const ModelState& state) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  save_snapshot(out, model_id, state);
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

Snapshot load_snapshot(std::istream& in, const std::string& source) {
  std::size_t line_no = 0;
  std::string line;
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError(source + ": line " + std::to_string(line_no) + ": " + msg);
  };
  auto next = [&]() -> std::vector<std::string_view> {
    if (!std::getline(in, line)) throw fail("unexpected end of snapshot");
    ++line_no;
    return text::split_whitespace(line);
  };
  auto expect_int = [&](const std::vector<std::string_view>& f, std::string_view key) {
    if (f.size() != 2 || f[0] != key) throw fail("expected '" + std::string(key) + " <n>'");
    const auto v = text::parse_int(f[1]);
    if (!v || *v < 0) throw fail("bad " + std::string(key) + " value");
    return *v;
  };

  auto f = next();
  if (f.size() != 2 || f[0] != "sviplus-snapshot") throw fail("not a sviplus snapshot");
  const auto version = text::parse_int(f[1]);
  if (!version || *version != kSnapshotVersion)
    throw fail("snapshot version " + std::string(f[1]) + " is not supported (this build reads version " +
               std::to_string(kSnapshotVersion) + ")");
  const auto layout = expect_int(next(), "layout");
  if (layout != expfam::kLayoutVersion)
    throw fail("parameter layout " + std::to_string(layout) + " does not match this build's layout " +
               std::to_string(expfam::kLayoutVersion));
  f = next();
  if (f.size() != 2 || f[0] != "model") throw fail("expected 'model <id>'");
  Snapshot snap;
  snap.model_id = std::string(f[1]);
  const auto count = expect_int(next(), "globals");
  for (long long g = 0; g < count; ++g) {
    f = next();
    if (f.size() != 2) throw fail("expected '<family> <dim>'");
    const auto dim = text::parse_int(f[1]);
    if (!dim || *dim < 1) throw fail("bad dimension");
    expfam::Family fam;
    try {
      const auto d = static_cast<std::size_t>(*dim);
      if (f[0] == "dirichlet") fam = expfam::Family::dirichlet(d);
      else if (f[0] == "mvn") fam = expfam::Family::mvn(d);
      else if (f[0] == "normal-wishart") fam = expfam::Family::normal_wishart(d);
      else throw fail("unknown family '" + std::string(f[0]) + "'");
    } catch (const ContractError& e) {
      throw fail(e.what());
    }
    auto values = [&](std::string_view tag) {
      const auto v = next();
      if (v.empty() || v[0] != tag) throw fail("expected '" + std::string(tag) + "' line");
      if (v.size() - 1 != fam.length())
        throw fail(std::string(tag) + " has " + std::to_string(v.size() - 1) + " values, " + fam.name() + " needs " +
                   std::to_string(fam.length()));
      expfam::NaturalParam p{fam, Eigen::VectorXd(static_cast<Eigen::Index>(fam.length()))};
      for (std::size_t i = 1; i < v.size(); ++i) {
        const auto x = text::parse_double(v[i]);
        if (!x) throw fail("bad value '" + std::string(v[i]) + "'");
        p.values[static_cast<Eigen::Index>(i - 1)] = *x;
      }
      try {
        expfam::validate(p);
      } catch (const std::exception& e) {
        throw fail(std::string(tag) + ": " + e.what());
      }
      return p;
    };
    GlobalVariable gv;
    gv.lambda = values("lambda");
    gv.prior = values("prior");
    snap.state.globals.push_back(std::move(gv));
  }
  f = next();
  if (f.size() != 1 || f[0] != "end") throw fail("expected 'end'");
  return snap;
}

Snapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open");
  return load_snapshot(in, path.string());
}

}  // namespace sviplus::cli
