#include "icd/pipeline.hpp"

#include "icd/error.hpp"

namespace icd::pipeline {

const char* arch_name(Arch a) { return a == Arch::kLlama2C ? "llama2_c" : "llama2_r_mrcnn"; }

Arch parse_arch(const std::string& name) {
  if (name == "llama2_c") return Arch::kLlama2C;
  if (name == "llama2_r_mrcnn") return Arch::kLlama2RMrcnn;
  throw ValidationError("unknown architecture preset '" + name + "'");
}

dimreduce::ReductionConfig ModelSpec::reduction_config() const {
  auto cfg = dimreduce::reduction_preset(reduction_preset, input_dim, paper_dims);
  cfg.K = residual_layers;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

mrcnn::MRCNNConfig ModelSpec::mrcnn_config() const {
  auto cfg = mrcnn;
  cfg.in_dim = reduction_config().output_dim();
  cfg.n_labels = n_labels;
  cfg.seed = seed + 1;
  cfg.validate();
  return cfg;
}

std::unique_ptr<Model> Model::build(const ModelSpec& spec) {
  if (spec.arch == Arch::kLlama2C) return std::make_unique<HeadModel>(spec);
  return std::make_unique<ReducedMrcnnModel>(spec);
}

bool Model::softmax_output() const {
  return spec_.arch == Arch::kLlama2C && spec_.head_mode == head::HeadMode::kSoftmaxCe;
}

ad::Var Model::loss(ad::Graph& g, const std::vector<const Example*>& batch) {
  std::vector<ad::Var> rows;
  Tensor targets({batch.size(), spec_.n_labels});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    rows.push_back(forward(g.constant(batch[i]->input)));
    const auto& gold = batch[i]->gold.data();
    std::copy(gold.begin(), gold.end(), targets.row(i).begin());
  }
  ad::Var out = ad::stack_rows(rows);
  if (softmax_output()) return ad::cross_entropy(out, targets);
  return ad::binary_cross_entropy(ad::sigmoid(out), targets);
}

std::vector<double> Model::score(const Tensor& input) {
  ad::Graph g(false);
  ad::Var out = forward(g.constant(input));
  std::vector<double> s(out.value().data().begin(), out.value().data().end());
  if (!softmax_output()) {
    for (auto& v : s) v = kernels::sigmoid(v);
  }
  return s;
}

HeadModel::HeadModel(ModelSpec spec)
    : Model(std::move(spec)),
      head_(head::HeadParams::init(spec_.input_dim, spec_.n_labels, spec_.head_mode, spec_.seed)) {}

ParamList HeadModel::params() {
  ParamList out;
  head_.collect(out);
  return out;
}

Tensor HeadModel::prepare(const encoder::EmbeddingSequence& e) const {
  if (e.dim() != spec_.input_dim) {
    throw ArtifactMismatchError("embedding dim " + std::to_string(e.dim()) + " does not match model input dim " +
                                std::to_string(spec_.input_dim));
  }
  return encoder::pool(e, spec_.pooling);
}

ad::Var HeadModel::forward(ad::Var input) { return head::head_forward(input, head_); }

ReducedMrcnnModel::ReducedMrcnnModel(ModelSpec spec)
    : Model(std::move(spec)), reducer_(spec_.reduction_config()), mrcnn_(spec_.mrcnn_config()) {}

ParamList ReducedMrcnnModel::params() {
  ParamList out;
  reducer_.collect(out);
  mrcnn_.collect(out);
  return out;
}

Tensor ReducedMrcnnModel::prepare(const encoder::EmbeddingSequence& e) const {
  if (e.dim() != spec_.input_dim) {
    throw ArtifactMismatchError("embedding dim " + std::to_string(e.dim()) + " does not match model input dim " +
                                std::to_string(spec_.input_dim));
  }
  return e.matrix;
}

ad::Var ReducedMrcnnModel::forward(ad::Var input) { return mrcnn_.forward(reducer_.forward(input)); }

train::Trainable make_trainable(Model& model, const std::vector<Example>& train_set,
                                const std::vector<Example>& val_set) {
  train::Trainable t;
  t.params = [&model] { return model.params(); };
  t.loss = [&model, &train_set](ad::Graph& g, std::span<const std::size_t> idx) {
    std::vector<const Example*> batch;
    for (auto i : idx) batch.push_back(&train_set[i]);
    return model.loss(g, batch);
  };
  t.score_val = [&model, &val_set](std::size_t i) { return model.score(val_set[i].input); };
  t.val_loss = [&model, &val_set](std::span<const std::size_t> idx) {
    std::vector<const Example*> batch;
    for (auto i : idx) batch.push_back(&val_set[i]);
    ad::Graph g(false);
    return model.loss(g, batch).value()[0];
  };
  t.val_gold = [&val_set](std::size_t i) -> const Tensor& { return val_set[i].gold; };
  t.n_train = train_set.size();
  t.n_val = val_set.size();
  t.n_labels = model.spec().n_labels;
  return t;
}

Tensor score_all(Model& model, const std::vector<Example>& examples) {
  Tensor out({examples.size(), model.spec().n_labels});
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto s = model.score(examples[i].input);
    std::copy(s.begin(), s.end(), out.row(i).begin());
  }
  return out;
}

Tensor gold_all(const std::vector<Example>& examples) {
  const std::size_t c = examples.front().gold.size();
  Tensor out({examples.size(), c});
  for (std::size_t i = 0; i < examples.size(); ++i) {
    std::copy(examples[i].gold.data().begin(), examples[i].gold.data().end(), out.row(i).begin());
  }
  return out;
}

}  // namespace icd::pipeline
