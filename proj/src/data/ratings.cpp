#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>

#include "sviplus/data.hpp"
#include "sviplus/error.hpp"
#include "sviplus/text.hpp"

namespace sviplus::data {
namespace {

// MovieLens 10M and the CSV releases use half stars, so 0.5 is accepted.
constexpr double kMinStars = 0.5;
constexpr double kMaxStars = 5.0;

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw ParseError(source + ": line " + std::to_string(line) + ": " + what);
}

class Densifier {
 public:
  explicit Densifier(std::vector<long long>& ids) : ids_(ids) {}
  std::uint32_t operator()(long long raw) {
    auto [it, inserted] = index_.try_emplace(raw, static_cast<std::uint32_t>(ids_.size()));
    if (inserted) ids_.push_back(raw);
    return it->second;
  }

 private:
  std::vector<long long>& ids_;
  std::unordered_map<long long, std::uint32_t> index_;
};

}  // namespace

RatingsDataset parse_movielens(std::istream& in, RatingsFormat format, const std::string& source) {
  RatingsDataset out;
  Densifier users(out.user_ids);
  Densifier items(out.item_ids);
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = format == RatingsFormat::Csv;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view trimmed = text::trim(line);
    if (trimmed.empty()) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto fields = format == RatingsFormat::Csv ? text::split(trimmed, ",") : text::split(trimmed, "::");
    if (fields.size() != 3 && fields.size() != 4)
      fail(source, line_no, "expected 4 fields, found " + std::to_string(fields.size()));
    const auto user = text::parse_int(fields[0]);
    const auto item = text::parse_int(fields[1]);
    const auto rating = text::parse_double(fields[2]);
    if (!user) fail(source, line_no, "bad user id '" + std::string(fields[0]) + "'");
    if (!item) fail(source, line_no, "bad item id '" + std::string(fields[1]) + "'");
    if (!rating) fail(source, line_no, "bad rating '" + std::string(fields[2]) + "'");
    if (!(*rating >= kMinStars && *rating <= kMaxStars))
      fail(source, line_no, "rating " + std::string(fields[2]) + " outside [0.5, 5]");
    if (fields.size() == 4 && !text::parse_int(fields[3]))
      fail(source, line_no, "bad timestamp '" + std::string(fields[3]) + "'");
    out.ratings.push_back({users(*user), items(*item), *rating});
  }
  if (out.ratings.empty()) throw ContractError(source + ": no ratings found");
  return out;
}

RatingsDataset parse_movielens(const std::filesystem::path& path, RatingsFormat format) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open");
  return parse_movielens(in, format, path.string());
}

void write_movielens(std::ostream& out, const RatingsDataset& data, RatingsFormat format) {
  const char* sep = format == RatingsFormat::Csv ? "," : "::";
  if (format == RatingsFormat::Csv) out << "userId,movieId,rating,timestamp\n";
  for (const Rating& r : data.ratings)
    out << data.user_ids.at(r.user) << sep << data.item_ids.at(r.item) << sep << text::format_double(r.value) << sep
        << 0 << '\n';
}

}  // namespace sviplus::data
