#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "icd/tensor.hpp"

namespace icd::synth {

enum class Split { kTrain, kVal, kTest };
const char* split_name(Split s);
Split parse_split(const std::string& s);

// Planted-signal corpus: label l owns the token block [l*m, (l+1)*m); tokens
// [C*m, V) are noise. An active label injects m tokens from its block, each
// independently dropped (replaced by noise) with probability noise_rate.
struct GeneratorSpec {
  std::size_t vocab_size = 2000;
  std::size_t n_labels = 50;
  std::size_t n_docs = 3000;
  std::size_t min_len = 64;
  std::size_t max_len = 256;
  std::size_t tokens_per_label = 3;
  double label_prevalence = 0.08;
  double noise_rate = 0.1;
  std::uint64_t seed = 42;

  void validate() const;
};

struct Document {
  std::string doc_id;
  Split split = Split::kTrain;
  std::vector<std::size_t> labels;  // ascending
  std::vector<std::uint32_t> tokens;
};

struct Corpus {
  std::size_t vocab_size = 0;
  std::size_t n_labels = 0;
  std::vector<Document> documents;

  // Multi-hot [C] vector of one document.
  Tensor gold(const Document& d) const;
  std::vector<const Document*> split(Split s) const;
};

Corpus generate(const GeneratorSpec& spec);

// Posterior P(label l active | tokens) under the generative model. Block-l
// tokens only arise from injection, so any occurrence gives 1; absence gives
// pi * nu^m / (pi * nu^m + 1 - pi). Exact whenever injection was not
// truncated by the document length.
std::vector<double> bayes_oracle(std::span<const std::uint32_t> tokens, const GeneratorSpec& spec);

void write_corpus(const Corpus& c, std::ostream& os);
Corpus read_corpus(std::istream& is);
void save_corpus(const Corpus& c, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

}  // namespace icd::synth
