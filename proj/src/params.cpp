#include "icd/params.hpp"

#include "icd/rng.hpp"

namespace icd {

void init_uniform(Tensor& t, double bound, std::uint64_t seed, std::uint64_t stream) {
  CounterRng rng(seed, stream);
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
}

}  // namespace icd
