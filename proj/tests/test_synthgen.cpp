#include <doctest.h>

#include <cmath>
#include <sstream>

#include "icd/error.hpp"
#include "icd/metrics.hpp"
#include "icd/synthgen.hpp"

using namespace icd;
using namespace icd::synth;

namespace {

GeneratorSpec small_spec() {
  GeneratorSpec s;
  s.n_docs = 400;
  s.seed = 3;
  return s;
}

}  // namespace

TEST_CASE("documents follow the block layout") {
  const auto spec = small_spec();
  const auto c = generate(spec);
  REQUIRE(c.documents.size() == 400);
  std::size_t empty = 0;
  for (const auto& d : c.documents) {
    CHECK(d.tokens.size() >= spec.min_len);
    CHECK(d.tokens.size() <= spec.max_len);
    CHECK(std::is_sorted(d.labels.begin(), d.labels.end()));
    for (auto t : d.tokens) {
      CHECK(t < spec.vocab_size);
      if (t < spec.n_labels * spec.tokens_per_label) {
        const std::size_t owner = t / spec.tokens_per_label;
        CHECK(std::binary_search(d.labels.begin(), d.labels.end(), owner));
      }
    }
    if (d.labels.empty()) {
      ++empty;
      for (auto t : d.tokens) CHECK(t >= spec.n_labels * spec.tokens_per_label);
    }
  }
  CHECK(empty > 0);

  std::size_t n_train = c.split(Split::kTrain).size(), n_val = c.split(Split::kVal).size();
  CHECK(n_train == 320);
  CHECK(n_val == 40);
  CHECK(c.split(Split::kTest).size() == 40);
}

TEST_CASE("generation is deterministic and seed dependent") {
  auto spec = small_spec();
  std::ostringstream a, b, other;
  write_corpus(generate(spec), a);
  write_corpus(generate(spec), b);
  CHECK(a.str() == b.str());
  spec.seed = 4;
  write_corpus(generate(spec), other);
  CHECK(a.str() != other.str());
}

TEST_CASE("every label is present in the training split") {
  auto spec = small_spec();
  spec.n_docs = 120;
  spec.label_prevalence = 0.05;
  const auto c = generate(spec);
  std::vector<bool> seen(spec.n_labels, false);
  for (const auto* d : c.split(Split::kTrain))
    for (auto l : d->labels) seen[l] = true;
  CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
}

TEST_CASE("empirical prevalence matches the configured rate") {
  auto spec = small_spec();
  spec.n_docs = 10000;
  spec.min_len = spec.max_len = 64;
  const auto c = generate(spec);
  double active = 0;
  for (const auto& d : c.documents) active += static_cast<double>(d.labels.size());
  const double rate = active / (10000.0 * static_cast<double>(spec.n_labels));
  CHECK(std::abs(rate - spec.label_prevalence) < 0.02);
}

TEST_CASE("spec validation") {
  auto spec = small_spec();
  spec.n_labels = 700;
  spec.tokens_per_label = 3;
  CHECK_THROWS_AS(generate(spec), ValidationError);
  spec = small_spec();
  spec.label_prevalence = 0.0;
  CHECK_THROWS_AS(generate(spec), ValidationError);
  spec = small_spec();
  spec.noise_rate = 1.0;
  CHECK_THROWS_AS(generate(spec), ValidationError);
  spec = small_spec();
  spec.min_len = 300;
  CHECK_THROWS_AS(generate(spec), ValidationError);
}

TEST_CASE("bayes oracle examples") {
  auto spec = small_spec();
  spec.noise_rate = 0.0;
  const std::uint32_t with_block[] = {500, 7, 900};
  const auto s = bayes_oracle(with_block, spec);
  CHECK(s[2] == 1.0);
  for (std::size_t l = 0; l < spec.n_labels; ++l) {
    if (l != 2) CHECK(s[l] <= spec.label_prevalence);
  }
  spec.noise_rate = 0.3;
  const auto t = bayes_oracle(with_block, spec);
  CHECK(t[2] == 1.0);
  CHECK(t[0] > 0.0);
  CHECK(t[0] <= spec.label_prevalence);
}

TEST_CASE("bayes oracle absence posterior is calibrated") {
  auto spec = small_spec();
  spec.n_docs = 10000;
  spec.noise_rate = 0.5;
  const auto c = generate(spec);
  const std::size_t m = spec.tokens_per_label;
  double absent = 0, positives = 0;
  for (const auto& d : c.documents) {
    std::vector<bool> present(spec.n_labels, false);
    for (auto t : d.tokens)
      if (t < spec.n_labels * m) present[t / m] = true;
    for (std::size_t l = 0; l < spec.n_labels; ++l) {
      if (present[l]) continue;
      absent += 1;
      positives += std::binary_search(d.labels.begin(), d.labels.end(), l);
    }
  }
  const std::uint32_t noise[] = {1999};
  const double predicted = bayes_oracle(noise, spec)[0];
  CHECK(std::abs(positives / absent - predicted) < 0.1 * predicted);
}

TEST_CASE("bayes oracle is near perfect on the default spec") {
  const GeneratorSpec spec;
  const auto c = generate(spec);
  const auto test = c.split(Split::kTest);
  Tensor s({test.size(), spec.n_labels}), g({test.size(), spec.n_labels});
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto o = bayes_oracle(test[i]->tokens, spec);
    std::copy(o.begin(), o.end(), s.row(i).begin());
    const auto gold = c.gold(*test[i]);
    std::copy(gold.data().begin(), gold.data().end(), g.row(i).begin());
  }
  CHECK(metrics::f1_scores({s, g, 0.5}).micro >= 0.97);
}

TEST_CASE("corpus file round trip") {
  const auto c = generate(small_spec());
  std::stringstream ss;
  write_corpus(c, ss);
  const std::string text = ss.str();
  CHECK(text.rfind("CORPUS v1 400 2000 50\n", 0) == 0);
  const auto back = read_corpus(ss);
  REQUIRE(back.documents.size() == c.documents.size());
  for (std::size_t i = 0; i < c.documents.size(); ++i) {
    CHECK(back.documents[i].doc_id == c.documents[i].doc_id);
    CHECK(back.documents[i].split == c.documents[i].split);
    CHECK(back.documents[i].labels == c.documents[i].labels);
    CHECK(back.documents[i].tokens == c.documents[i].tokens);
  }
  std::ostringstream again;
  write_corpus(back, again);
  CHECK(again.str() == text);

  auto line_of = [](const std::string& s) -> std::size_t {
    std::istringstream is(s);
    try {
      read_corpus(is);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("CORPUS v2 1 10 2\n") == 1);
  CHECK(line_of("CORPUS v1 1 10 2\nd0\ttrain\t-\t1 2\n") == 0);
  CHECK(line_of("CORPUS v1 1 10 2\nd0\ttrain\t5\t1 2\n") == 2);
  CHECK(line_of("CORPUS v1 1 10 2\nd0\ttrain\t-\t1 20\n") == 2);
  CHECK(line_of("CORPUS v1 1 10 2\nd0\tholdout\t-\t1\n") == 2);
  CHECK(line_of("CORPUS v1 2 10 2\nd0\ttrain\t-\t1\n") == 3);
}
