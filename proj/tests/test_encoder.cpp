#include <doctest.h>

#include <sstream>

#include "icd/encoder.hpp"
#include "icd/error.hpp"
#include "icd/rng.hpp"

using namespace icd;
using namespace icd::encoder;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.vocab_size = 100;
  c.model_dim = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.posenc.original_context = 32;
  c.posenc.alpha = 1.5;
  c.seed = 5;
  return c;
}

std::vector<std::uint32_t> random_tokens(std::size_t n, std::uint64_t seed, std::size_t vocab = 100) {
  CounterRng rng(seed);
  std::vector<std::uint32_t> t(n);
  for (auto& v : t) v = static_cast<std::uint32_t>(rng.below(vocab));
  return t;
}

EmbeddingSequence seq(std::string id, Tensor m) { return EmbeddingSequence{std::move(id), std::move(m)}; }

}  // namespace

TEST_CASE("encoding is deterministic and shaped") {
  const auto cfg = small_config();
  const auto tokens = random_tokens(20, 1);
  const auto a = encode_document(tokens, cfg, "a");
  const auto b = encode_document(tokens, cfg, "a");
  CHECK(a.matrix == b.matrix);
  CHECK(a.matrix.shape() == Shape{20, 16});
  CHECK(a.matrix.all_finite());

  const std::uint32_t one[] = {7};
  CHECK(encode_document(one, cfg).matrix.shape() == Shape{1, 16});
}

TEST_CASE("a one-token change changes the encoding") {
  const auto cfg = small_config();
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    auto tokens = random_tokens(12, 100 + trial);
    const auto a = encode_document(tokens, cfg);
    tokens[trial % 12] = (tokens[trial % 12] + 1) % 100;
    CHECK_FALSE(a.matrix == encode_document(tokens, cfg).matrix);
  }
}

TEST_CASE("different seeds give different encoders") {
  auto cfg = small_config();
  const auto tokens = random_tokens(5, 2);
  const auto a = encode_document(tokens, cfg);
  cfg.seed = 6;
  CHECK_FALSE(a.matrix == encode_document(tokens, cfg).matrix);
}

TEST_CASE("context gate sits exactly at the scaled context") {
  const auto cfg = small_config();
  Encoder enc(cfg);
  REQUIRE(enc.context_limit() == 48);
  CHECK(enc.encode("ok", random_tokens(48, 3)).length() == 48);
  try {
    (void)enc.encode("long", random_tokens(49, 3));
    FAIL("expected ContextOverflowError");
  } catch (const ContextOverflowError& e) {
    CHECK(std::string(e.what()).find("S_new=48") != std::string::npos);
  }
}

TEST_CASE("encoder input validation") {
  const auto cfg = small_config();
  const std::uint32_t bad[] = {1, 100};
  CHECK_THROWS_AS(encode_document(bad, cfg), ValidationError);
  CHECK_THROWS_AS(encode_document({}, cfg), ValidationError);
  auto odd = cfg;
  odd.n_heads = 3;
  CHECK_THROWS_AS(Encoder{odd}, ValidationError);
  auto odd_head = cfg;
  odd_head.model_dim = 6;
  odd_head.n_heads = 2;
  CHECK_THROWS_AS(Encoder{odd_head}, ValidationError);
}

TEST_CASE("pool examples") {
  const auto single = seq("s", Tensor::matrix({{4, -1}}));
  CHECK(pool(single, Pooling::kMean) == Tensor::vector({4, -1}));
  CHECK(pool(single, Pooling::kLast) == Tensor::vector({4, -1}));
  CHECK(pool(seq("m", Tensor::matrix({{1, 1}, {3, 3}})), Pooling::kMean) == Tensor::vector({2, 2}));
  CHECK(pool(seq("l", Tensor::matrix({{1, 2}, {5, 6}})), Pooling::kLast) == Tensor::vector({5, 6}));

  // Mean is invariant to row order, last is not.
  const auto fwd = seq("f", Tensor::matrix({{1, 2}, {5, 6}}));
  const auto rev = seq("r", Tensor::matrix({{5, 6}, {1, 2}}));
  CHECK(pool(fwd, Pooling::kMean) == pool(rev, Pooling::kMean));
  CHECK_FALSE(pool(fwd, Pooling::kLast) == pool(rev, Pooling::kLast));

  CHECK(parse_pooling(pooling_name(Pooling::kLast)) == Pooling::kLast);
  CHECK_THROWS_AS(parse_pooling("max"), ValidationError);
}

TEST_CASE("EMB round trip is bit exact") {
  const auto cfg = small_config();
  std::vector<EmbeddingSequence> seqs;
  for (std::uint64_t i = 0; i < 4; ++i) seqs.push_back(encode_document(random_tokens(3 + i, i), cfg, "doc" + std::to_string(i)));
  // Awkward values survive too.
  seqs[0].matrix[0] = 1e-300;
  seqs[0].matrix[1] = -0.1;
  seqs[0].matrix[2] = 1.0 / 3.0;

  std::stringstream ss;
  write_embeddings(seqs, ss, 16);
  const std::string text = ss.str();
  CHECK(text.rfind("EMB v1 4 16\n", 0) == 0);
  const auto back = read_embeddings(ss);
  REQUIRE(back.size() == seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    CHECK(back[i].doc_id == seqs[i].doc_id);
    CHECK(back[i].matrix == seqs[i].matrix);
  }
  std::stringstream again;
  write_embeddings(back, again, 16);
  CHECK(again.str() == text);
}

TEST_CASE("empty EMB collection") {
  std::stringstream ss;
  write_embeddings({}, ss, 64);
  CHECK(ss.str() == "EMB v1 0 64\n");
  CHECK(read_embeddings(ss).empty());
}

TEST_CASE("malformed EMB files report the line") {
  auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream is(text);
    try {
      read_embeddings(is);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("EMB v2 1 2\n") == 1);
  CHECK(line_of("EMB v1 1 2\nd\t2\n1 2\n3 4 5\n") == 4);
  CHECK(line_of("EMB v1 1 2\nd\t1\n1\n") == 3);
  CHECK(line_of("EMB v1 1 2\nd 1\n1 2\n") == 2);
  CHECK(line_of("EMB v1 2 2\nd\t1\n1 2\n") == 4);
  CHECK(line_of("EMB v1 1 2\nd\t1\n1 x\n") == 3);
  CHECK(line_of("EMB v1 1 2\nd\t1\n1 2\n") == 0);
}
