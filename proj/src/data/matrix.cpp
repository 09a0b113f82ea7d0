#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "sviplus/data.hpp"
#include "sviplus/error.hpp"
#include "sviplus/text.hpp"

namespace sviplus::data {

FeatureMatrix parse_csv_matrix(std::istream& in, const CsvMatrixOptions& options, const std::string& source) {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = options.skip_header;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = text::trim(line);
    if (trimmed.empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto fields = text::split(trimmed, ",");
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      throw ParseError(source + ": line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                       " columns, found " + std::to_string(fields.size()));
    if (options.label_column >= static_cast<int>(width))
      throw ParseError(source + ": label column " + std::to_string(options.label_column) + " out of range");
    std::vector<double> row;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (static_cast<int>(c) == options.label_column) {
        const auto label = text::parse_int(fields[c]);
        if (!label)
          throw ParseError(source + ": line " + std::to_string(line_no) + ": bad label '" + std::string(fields[c]) + "'");
        labels.push_back(static_cast<int>(*label));
        continue;
      }
      const auto v = text::parse_double(fields[c]);
      if (!v || !std::isfinite(*v))
        throw ParseError(source + ": line " + std::to_string(line_no) + ": bad value '" + std::string(fields[c]) + "'");
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty()) throw ContractError(source + ": no numeric rows found");
  FeatureMatrix out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) out.x(r, c) = rows[r][c];
  out.labels = std::move(labels);
  return out;
}

FeatureMatrix parse_csv_matrix(const std::filesystem::path& path, const CsvMatrixOptions& options) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open");
  return parse_csv_matrix(in, options, path.string());
}

void write_csv_matrix(std::ostream& out, const FeatureMatrix& m) {
  for (Eigen::Index r = 0; r < m.x.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.x.cols(); ++c) {
      if (c > 0) out << ',';
      out << text::format_double(m.x(r, c));
    }
    if (!m.labels.empty()) out << ',' << m.labels[static_cast<std::size_t>(r)];
    out << '\n';
  }
}

void standardize(FeatureMatrix& m) {
  const Eigen::RowVectorXd mean = m.x.colwise().mean();
  m.x.rowwise() -= mean;
  for (Eigen::Index c = 0; c < m.x.cols(); ++c) {
    const double sd = std::sqrt(m.x.col(c).squaredNorm() / static_cast<double>(m.x.rows()));
    if (sd > 0.0) m.x.col(c) /= sd;
  }
}

}  // namespace sviplus::data
