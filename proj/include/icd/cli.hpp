#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "icd/config.hpp"
#include "icd/encoder.hpp"
#include "icd/pipeline.hpp"
#include "icd/synthgen.hpp"

namespace icd::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kValidation = 2,
  kContext = 3,
  kDivergence = 4,
  kArtifactMismatch = 5,
};

// Maps the exception currently being handled to an exit code.
int exit_code_for(const std::exception& e);

// Encodes every document in corpus order. Context overflow is rethrown with
// the document id in the message.
std::vector<encoder::EmbeddingSequence> embed_corpus(const synth::Corpus& corpus, const encoder::EncoderConfig& cfg);

// Model inputs for one split. Embeddings are looked up by doc id.
std::vector<pipeline::Example> make_examples(const pipeline::Model& model, const synth::Corpus& corpus,
                                             const std::vector<encoder::EmbeddingSequence>& embeddings,
                                             synth::Split split);

// Runs one command line (argv without the program name). Diagnostics go to
// err, normal output to out.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace icd::cli
