#pragma once

// Dataset types, file parsers and seeded synthetic generators.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace sviplus::data {

// ------------------------------------------------------------------ ratings

struct Rating {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double value = 0.0;

  friend bool operator==(const Rating&, const Rating&) = default;
};

/// Ratings with densified ids. user_ids[u] is the id that dense user u had in
/// the source (first-seen order); likewise item_ids.
struct RatingsDataset {
  std::vector<Rating> ratings;
  std::vector<long long> user_ids;
  std::vector<long long> item_ids;

  std::size_t n_users() const { return user_ids.size(); }
  std::size_t n_items() const { return item_ids.size(); }
  std::size_t n_ratings() const { return ratings.size(); }

  friend bool operator==(const RatingsDataset&, const RatingsDataset&) = default;
};

enum class RatingsFormat {
  DoubleColonDat,  // user::item::rating::timestamp
  Csv,             // header, then userId,movieId,rating,timestamp
};

RatingsDataset parse_movielens(const std::filesystem::path& path, RatingsFormat format);
RatingsDataset parse_movielens(std::istream& in, RatingsFormat format, const std::string& source = "<stream>");
/// Writes original ids with timestamp 0.
void write_movielens(std::ostream& out, const RatingsDataset& data, RatingsFormat format);

// -------------------------------------------------------------- bag of words

struct BowDoc {
  std::vector<std::uint32_t> words;  // ascending, unique
  std::vector<std::uint32_t> counts;

  std::size_t total() const;
  friend bool operator==(const BowDoc&, const BowDoc&) = default;
};

struct BowCorpus {
  std::vector<BowDoc> docs;
  std::size_t vocab_size = 0;
  std::vector<std::string> vocab;  // empty when no vocabulary file was given

  std::size_t total_tokens() const;
  friend bool operator==(const BowCorpus&, const BowCorpus&) = default;
};

/// UCI bag-of-words: "D", "W", "NNZ" header lines, then "docId wordId count"
/// triples with 1-based ids. Duplicate (doc, word) triples are merged by
/// summing their counts. vocab_path may be empty.
BowCorpus parse_bow(const std::filesystem::path& docword_path, const std::filesystem::path& vocab_path = {});
BowCorpus parse_bow(std::istream& docword, std::istream* vocab, const std::string& source = "<stream>");
void write_bow(std::ostream& docword, const BowCorpus& corpus);
void write_vocab(std::ostream& vocab, const BowCorpus& corpus);

/// First `count` documents go to the second corpus. Throws if count >= docs.
std::pair<BowCorpus, BowCorpus> split_heldout(const BowCorpus& corpus, std::size_t count);

// ----------------------------------------------------------- feature matrix

struct FeatureMatrix {
  Eigen::MatrixXd x;        // N x d
  std::vector<int> labels;  // empty or N entries; never used by inference

  std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(x.cols()); }
};

struct CsvMatrixOptions {
  bool skip_header = false;
  /// Column holding an integer label, removed from the features. -1 for none.
  int label_column = -1;
};

FeatureMatrix parse_csv_matrix(const std::filesystem::path& path, const CsvMatrixOptions& options = {});
FeatureMatrix parse_csv_matrix(std::istream& in, const CsvMatrixOptions& options, const std::string& source = "<stream>");
void write_csv_matrix(std::ostream& out, const FeatureMatrix& m);

/// Zero mean, unit variance per column. Constant columns are only centered.
void standardize(FeatureMatrix& m);

// ---------------------------------------------------------------- generators

struct GmmClusterSpec {
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
  std::vector<double> weights;

  std::size_t k() const { return means.size(); }
  /// Four equally weighted 2-D unit Gaussians centred at (+-3, +-3).
  static GmmClusterSpec four_corners();
};

/// Per-cluster counts are drawn from a multinomial, then rows are shuffled.
/// labels hold the generating cluster.
FeatureMatrix gen_gmm_synthetic(std::size_t n, const GmmClusterSpec& spec, std::uint64_t seed);

struct RatingsGenOptions {
  std::size_t n_users = 500;
  std::size_t n_items = 300;
  std::size_t rank = 5;
  double density = 0.05;
  double sigma2 = 0.25;
  double offset = 3.0;
  bool round_and_clip = true;  // round to integer stars and clip to [1, 5]
  std::uint64_t seed = 0;
};

struct SyntheticRatings {
  RatingsDataset data;
  Eigen::MatrixXd user_factors;  // n_users x rank
  Eigen::MatrixXd item_factors;  // n_items x rank
};

/// Factors iid N(0, 1/sqrt(rank)) so u.v has unit variance; round(density *
/// users * items) cells observed, chosen uniformly without replacement.
SyntheticRatings gen_ratings_synthetic(const RatingsGenOptions& options);

struct SyntheticCorpus {
  BowCorpus corpus;
  Eigen::MatrixXd topics;  // K x V, rows sum to 1
};

/// Topics ~ Dirichlet(0.1) over V words, proportions ~ Dirichlet(0.5), then
/// doc_len tokens per document from the LDA generative process.
SyntheticCorpus gen_lda_synthetic(std::size_t docs, std::size_t vocab, std::size_t topics, std::size_t doc_len,
                                  std::uint64_t seed);

}  // namespace sviplus::data
