#include "sviplus/model.hpp"

#include <numeric>

namespace sviplus {

std::vector<std::size_t> Model::phase_globals(std::size_t /*phase*/, const ModelState& state) const {
  std::vector<std::size_t> all(state.globals.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return all;
}

}  // namespace sviplus
