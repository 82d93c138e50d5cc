#include "popmf/random.hpp"

#include <cmath>

namespace popmf {

double CounterRng::exponential(double rate) noexcept {
  // 1 - u lies in (0, 1], so the log is finite.
  return -std::log(1.0 - uniform()) / rate;
}

}  // namespace popmf
