#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>

#include "sviplus/data.hpp"
#include "sviplus/error.hpp"
#include "sviplus/text.hpp"

namespace sviplus::data {
namespace {

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw ParseError(source + ": line " + std::to_string(line) + ": " + what);
}

bool next_content_line(std::istream& in, std::string& line, std::size_t& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    if (!text::trim(line).empty()) return true;
  }
  return false;
}

long long header_value(std::istream& in, const std::string& source, std::size_t& line_no, const char* name) {
  std::string line;
  if (!next_content_line(in, line, line_no)) fail(source, line_no, std::string("missing header ") + name);
  const auto v = text::parse_int(line);
  if (!v || *v < 0) fail(source, line_no, std::string("bad header ") + name + " '" + line + "'");
  return *v;
}

}  // namespace

std::size_t BowDoc::total() const {
  std::size_t acc = 0;
  for (auto c : counts) acc += c;
  return acc;
}

std::size_t BowCorpus::total_tokens() const {
  std::size_t acc = 0;
  for (const auto& d : docs) acc += d.total();
  return acc;
}

BowCorpus parse_bow(std::istream& docword, std::istream* vocab, const std::string& source) {
  std::size_t line_no = 0;
  const long long n_docs = header_value(docword, source, line_no, "D");
  const long long n_words = header_value(docword, source, line_no, "W");
  const long long nnz = header_value(docword, source, line_no, "NNZ");

  std::vector<std::map<std::uint32_t, std::uint64_t>> merged(static_cast<std::size_t>(n_docs));
  long long seen = 0;
  std::string line;
  while (next_content_line(docword, line, line_no)) {
    const auto fields = text::split_whitespace(text::trim(line));
    if (fields.size() != 3) fail(source, line_no, "expected 'docId wordId count'");
    const auto doc = text::parse_int(fields[0]);
    const auto word = text::parse_int(fields[1]);
    const auto count = text::parse_int(fields[2]);
    if (!doc || *doc < 1 || *doc > n_docs) fail(source, line_no, "doc id out of range");
    if (!word || *word < 1 || *word > n_words) fail(source, line_no, "word id out of range");
    if (!count || *count < 1) fail(source, line_no, "count must be a positive integer");
    merged[static_cast<std::size_t>(*doc - 1)][static_cast<std::uint32_t>(*word - 1)] +=
        static_cast<std::uint64_t>(*count);
    ++seen;
  }
  if (seen != nnz)
    throw ParseError(source + ": header says NNZ=" + std::to_string(nnz) + " but found " + std::to_string(seen) +
                     " triples");

  BowCorpus out;
  out.vocab_size = static_cast<std::size_t>(n_words);
  out.docs.resize(merged.size());
  for (std::size_t d = 0; d < merged.size(); ++d)
    for (const auto& [w, c] : merged[d]) {
      out.docs[d].words.push_back(w);
      out.docs[d].counts.push_back(static_cast<std::uint32_t>(c));
    }

  if (vocab != nullptr) {
    std::string token;
    while (std::getline(*vocab, token)) {
      const auto t = text::trim(token);
      if (!t.empty()) out.vocab.emplace_back(t);
    }
    if (out.vocab.size() != out.vocab_size)
      throw ParseError(source + ": vocabulary has " + std::to_string(out.vocab.size()) + " tokens, expected W=" +
                       std::to_string(out.vocab_size));
  }
  return out;
}

BowCorpus parse_bow(const std::filesystem::path& docword_path, const std::filesystem::path& vocab_path) {
  std::ifstream docword(docword_path);
  if (!docword) throw ParseError(docword_path.string() + ": cannot open");
  if (vocab_path.empty()) return parse_bow(docword, nullptr, docword_path.string());
  std::ifstream vocab(vocab_path);
  if (!vocab) throw ParseError(vocab_path.string() + ": cannot open");
  return parse_bow(docword, &vocab, docword_path.string());
}

void write_bow(std::ostream& out, const BowCorpus& corpus) {
  std::size_t nnz = 0;
  for (const auto& d : corpus.docs) nnz += d.words.size();
  out << corpus.docs.size() << '\n' << corpus.vocab_size << '\n' << nnz << '\n';
  for (std::size_t d = 0; d < corpus.docs.size(); ++d)
    for (std::size_t i = 0; i < corpus.docs[d].words.size(); ++i)
      out << d + 1 << ' ' << corpus.docs[d].words[i] + 1 << ' ' << corpus.docs[d].counts[i] << '\n';
}

void write_vocab(std::ostream& out, const BowCorpus& corpus) {
  for (const auto& token : corpus.vocab) out << token << '\n';
}

std::pair<BowCorpus, BowCorpus> split_heldout(const BowCorpus& corpus, std::size_t count) {
  if (count >= corpus.docs.size())
    throw ContractError("held-out count " + std::to_string(count) + " leaves no training documents");
  BowCorpus train = corpus;
  BowCorpus test = corpus;
  test.docs.assign(corpus.docs.begin(), corpus.docs.begin() + static_cast<std::ptrdiff_t>(count));
  train.docs.assign(corpus.docs.begin() + static_cast<std::ptrdiff_t>(count), corpus.docs.end());
  return {std::move(train), std::move(test)};
}

}  // namespace sviplus::data
