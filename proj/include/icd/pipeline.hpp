#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "icd/clf_head.hpp"
#include "icd/dimreduce.hpp"
#include "icd/encoder.hpp"
#include "icd/multirescnn.hpp"
#include "icd/trainkit.hpp"

namespace icd::pipeline {

// llama2_c: pooled encoder output -> classification head.
// llama2_r_mrcnn: encoder sequence -> dimension reduction -> MultiResCNN.
enum class Arch { kLlama2C, kLlama2RMrcnn };

const char* arch_name(Arch a);
Arch parse_arch(const std::string& name);

struct ModelSpec {
  Arch arch = Arch::kLlama2RMrcnn;
  std::size_t input_dim = 64;
  std::size_t n_labels = 50;
  encoder::Pooling pooling = encoder::Pooling::kMean;
  head::HeadMode head_mode = head::HeadMode::kSigmoidBce;
  std::string reduction_preset = "CNN-1024_map_256";
  bool paper_dims = false;
  std::size_t residual_layers = 2;
  // in_dim and n_labels are derived from the reduction and n_labels above.
  mrcnn::MRCNNConfig mrcnn;
  std::uint64_t seed = 17;

  dimreduce::ReductionConfig reduction_config() const;
  mrcnn::MRCNNConfig mrcnn_config() const;
};

// Training/eval example: the model input (pooled vector or sequence) and
// multi-hot gold labels.
struct Example {
  std::string doc_id;
  Tensor input;
  Tensor gold;
};

class Model {
 public:
  virtual ~Model() = default;

  static std::unique_ptr<Model> build(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  virtual ParamList params() = 0;
  // Converts an encoder sequence into this model's input.
  virtual Tensor prepare(const encoder::EmbeddingSequence& e) const = 0;
  // Softmax probabilities in softmax_ce head mode, raw logits otherwise.
  virtual ad::Var forward(ad::Var input) = 0;

  // Mean loss over a microbatch.
  ad::Var loss(ad::Graph& g, const std::vector<const Example*>& batch);
  // Per-label probabilities for one input.
  std::vector<double> score(const Tensor& input);

 protected:
  explicit Model(ModelSpec spec) : spec_(std::move(spec)) {}
  bool softmax_output() const;

  ModelSpec spec_;
};

class HeadModel : public Model {
 public:
  explicit HeadModel(ModelSpec spec);
  ParamList params() override;
  Tensor prepare(const encoder::EmbeddingSequence& e) const override;
  ad::Var forward(ad::Var input) override;
  head::HeadParams& head() { return head_; }

 private:
  head::HeadParams head_;
};

class ReducedMrcnnModel : public Model {
 public:
  explicit ReducedMrcnnModel(ModelSpec spec);
  ParamList params() override;
  Tensor prepare(const encoder::EmbeddingSequence& e) const override;
  ad::Var forward(ad::Var input) override;
  dimreduce::Reducer& reducer() { return reducer_; }
  mrcnn::MultiResCnn& mrcnn() { return mrcnn_; }

 private:
  dimreduce::Reducer reducer_;
  mrcnn::MultiResCnn mrcnn_;
};

// Adapts a model and example sets to the training loop.
train::Trainable make_trainable(Model& model, const std::vector<Example>& train_set,
                                const std::vector<Example>& val_set);

// [N x C] probability matrix for a set of examples.
Tensor score_all(Model& model, const std::vector<Example>& examples);
Tensor gold_all(const std::vector<Example>& examples);

}  // namespace icd::pipeline
