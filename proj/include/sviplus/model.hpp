#pragma once

// The contract every model plugin implements. A model owns its dataset; the
// engine owns the global variational parameters and calls back into the
// model for per-datum statistics.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "sviplus/expfam.hpp"

namespace sviplus {

struct GlobalVariable {
  expfam::NaturalParam lambda;  // variational posterior
  expfam::NaturalParam prior;   // eta
};

struct ModelState {
  std::vector<GlobalVariable> globals;
};

/// One datum's statistic for one global variable, in that global's natural
/// layout. An empty index means a dense vector of the global's full length;
/// otherwise values[i] belongs at position index[i].
struct Contribution {
  std::uint32_t global = 0;
  std::vector<std::uint32_t> index;
  std::vector<double> values;
};

using LocalStats = std::vector<Contribution>;

/// Expectations under the current globals, precomputed once per pass and
/// shared read-only by every local step of that pass.
class LocalContext {
 public:
  virtual ~LocalContext() = default;
};

class Model {
 public:
  virtual ~Model() = default;

  virtual std::string_view id() const = 0;
  virtual std::size_t num_data() const = 0;

  /// Number of sequential update phases per iteration. Each phase recomputes
  /// the local statistics and updates its own subset of globals.
  virtual std::size_t num_phases() const { return 1; }
  /// Globals updated in the given phase.
  virtual std::vector<std::size_t> phase_globals(std::size_t phase, const ModelState& state) const;

  /// Deterministic given the seed.
  virtual ModelState init_globals(std::uint64_t seed) const = 0;

  virtual std::unique_ptr<LocalContext> context(const ModelState& state) const = 0;

  /// Local step for datum n: appends its statistic contributions for the
  /// globals of the given phase. Pure in (n, ctx).
  virtual void local_stats(std::size_t n, const LocalContext& ctx, std::size_t phase, LocalStats& out) const = 0;

  /// Variational objective over the full dataset with fresh local parameters.
  virtual double elbo(const ModelState& state) const = 0;
};

}  // namespace sviplus
