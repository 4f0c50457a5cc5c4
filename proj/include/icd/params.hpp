#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icd/tensor.hpp"

namespace icd {

// Non-owning view of a named trainable tensor. Names are stable and used as
// checkpoint keys.
struct NamedParam {
  std::string name;
  Tensor* tensor;
};

using ParamList = std::vector<NamedParam>;

// Fills t with uniform(-bound, bound) draws from stream (seed, stream).
void init_uniform(Tensor& t, double bound, std::uint64_t seed, std::uint64_t stream);

}  // namespace icd
