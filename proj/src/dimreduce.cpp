#include "icd/dimreduce.hpp"

#include <cmath>

#include "icd/error.hpp"

namespace icd::dimreduce {

const char* strategy_name(Strategy s) { return s == Strategy::kCnnChain ? "cnn_chain" : "residual"; }

Strategy parse_strategy(const std::string& name) {
  if (name == "cnn_chain") return Strategy::kCnnChain;
  if (name == "residual") return Strategy::kResidual;
  throw ValidationError("unknown reduction strategy '" + name + "'");
}

std::size_t ReductionConfig::input_dim() const {
  return strategy == Strategy::kCnnChain ? cnn_dims.front() : residual_in_dim;
}

std::size_t ReductionConfig::output_dim() const {
  return strategy == Strategy::kCnnChain ? cnn_dims.back() : residual_out_dim;
}

void ReductionConfig::validate() const {
  if (strategy == Strategy::kCnnChain) {
    if (cnn_dims.empty()) throw ValidationError("cnn_dims must not be empty");
    for (std::size_t i = 0; i < cnn_dims.size(); ++i) {
      if (cnn_dims[i] == 0) throw ValidationError("cnn_dims entries must be positive");
      if (i > 0 && cnn_dims[i] >= cnn_dims[i - 1]) {
        throw ValidationError("cnn_dims must be strictly decreasing, got " + std::to_string(cnn_dims[i - 1]) +
                              " then " + std::to_string(cnn_dims[i]));
      }
    }
  } else {
    if (K == 0) throw ValidationError("residual layer count K must be positive");
    if (residual_in_dim == 0 || residual_out_dim == 0) throw ValidationError("residual dims must be positive");
    if (residual_out_dim > residual_in_dim) {
      throw ValidationError("residual_out_dim " + std::to_string(residual_out_dim) + " exceeds input dim " +
                            std::to_string(residual_in_dim));
    }
  }
}

std::size_t desk_dim(std::size_t nominal, std::size_t input_dim) {
  const double scaled = static_cast<double>(input_dim) * std::sqrt(static_cast<double>(nominal) / 4096.0);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scaled)));
}

std::vector<std::string> preset_names() {
  return {"CNN-1024", "CNN-768", "CNN-512", "CNN-300", "CNN-100", "CNN-1024_map_256", "Residual-4096",
          "Residual-128"};
}

ReductionConfig reduction_preset(const std::string& name, std::size_t input_dim, bool paper_dims) {
  auto dim = [&](std::size_t nominal) { return paper_dims ? nominal : desk_dim(nominal, input_dim); };
  ReductionConfig cfg;
  if (name.rfind("CNN-", 0) == 0) {
    cfg.strategy = Strategy::kCnnChain;
    if (name == "CNN-1024_map_256") {
      cfg.cnn_dims = {input_dim, dim(1024), dim(256)};
    } else {
      const std::string tail = name.substr(4);
      std::size_t nominal = 0;
      if (tail == "1024") nominal = 1024;
      else if (tail == "768") nominal = 768;
      else if (tail == "512") nominal = 512;
      else if (tail == "300") nominal = 300;
      else if (tail == "100") nominal = 100;
      else throw ValidationError("unknown reduction preset '" + name + "'");
      cfg.cnn_dims = {input_dim, dim(nominal)};
    }
  } else if (name == "Residual-4096") {
    cfg.strategy = Strategy::kResidual;
    cfg.residual_in_dim = input_dim;
    cfg.residual_out_dim = input_dim;
  } else if (name == "Residual-128") {
    cfg.strategy = Strategy::kResidual;
    cfg.residual_in_dim = input_dim;
    cfg.residual_out_dim = dim(128);
  } else {
    throw ValidationError("unknown reduction preset '" + name + "'");
  }
  cfg.validate();
  return cfg;
}

Reducer::Reducer(ReductionConfig cfg) : Reducer(std::move(cfg), true) {}

Reducer Reducer::zeros(ReductionConfig cfg) { return Reducer(std::move(cfg), false); }

Reducer::Reducer(ReductionConfig cfg, bool random) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::uint64_t stream = 0;
  auto make = [&](Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    if (random) init_uniform(t, 1.0 / std::sqrt(static_cast<double>(fan_in)), cfg_.seed, stream);
    ++stream;
    return t;
  };
  if (cfg_.strategy == Strategy::kCnnChain) {
    for (std::size_t i = 0; i + 1 < cfg_.cnn_dims.size(); ++i) {
      const std::size_t din = cfg_.cnn_dims[i], dout = cfg_.cnn_dims[i + 1];
      CnnStage s;
      s.weight = make({1, din, dout}, din);
      s.bias = make({dout}, din);
      stages_.push_back(std::move(s));
    }
  } else {
    const std::size_t din = cfg_.residual_in_dim, dout = cfg_.residual_out_dim;
    for (std::size_t k = 0; k < cfg_.K; ++k) {
      ResidualLayer l;
      l.w1 = make({din, dout}, din);
      l.b1 = make({dout}, din);
      l.w2 = make({dout, dout}, dout);
      l.b2 = make({dout}, dout);
      l.proj = make({din, dout}, din);
      layers_.push_back(std::move(l));
    }
  }
}

void Reducer::collect(ParamList& out, const std::string& prefix) {
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string p = prefix + "cnn" + std::to_string(i) + ".";
    out.push_back({p + "weight", &stages_[i].weight});
    out.push_back({p + "bias", &stages_[i].bias});
  }
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const std::string p = prefix + "res" + std::to_string(k) + ".";
    out.push_back({p + "w1", &layers_[k].w1});
    out.push_back({p + "b1", &layers_[k].b1});
    out.push_back({p + "w2", &layers_[k].w2});
    out.push_back({p + "b2", &layers_[k].b2});
    out.push_back({p + "proj", &layers_[k].proj});
  }
}

ad::Var Reducer::forward(ad::Var x) {
  if (x.shape().size() != 2 || x.shape()[1] != cfg_.input_dim()) {
    throw ValidationError("reduction expects input width " + std::to_string(cfg_.input_dim()) + ", got " +
                          shape_to_string(x.shape()));
  }
  return cfg_.strategy == Strategy::kCnnChain ? cnn_reduce(x, stages_) : residual_reduce(x, layers_);
}

ad::Var cnn_reduce(ad::Var x, std::vector<CnnStage>& stages) {
  ad::Graph& g = *x.graph;
  for (auto& s : stages) {
    if (x.shape()[1] != s.weight.dim(1)) {
      throw ValidationError("cnn stage expects width " + std::to_string(s.weight.dim(1)) + ", got " +
                            shape_to_string(x.shape()));
    }
    x = ad::relu(ad::conv1d(x, g.parameter(s.weight), g.parameter(s.bias), ad::Padding::kValid));
  }
  return x;
}

ad::Var residual_term(ad::Var x, ResidualLayer& layer) {
  ad::Graph& g = *x.graph;
  ad::Var inner = ad::relu(ad::add_bias(ad::matmul(x, g.parameter(layer.w1)), g.parameter(layer.b1)));
  ad::Var body = ad::add_bias(ad::matmul(inner, g.parameter(layer.w2)), g.parameter(layer.b2));
  ad::Var skip = ad::matmul(x, g.parameter(layer.proj));
  return ad::relu(ad::add(body, skip));
}

ad::Var residual_reduce(ad::Var x, std::vector<ResidualLayer>& layers) {
  if (layers.empty()) throw ValidationError("residual_reduce needs at least one layer");
  ad::Var total = residual_term(x, layers.front());
  for (std::size_t k = 1; k < layers.size(); ++k) total = ad::add(total, residual_term(x, layers[k]));
  return total;
}

encoder::EmbeddingSequence reduce(const encoder::EmbeddingSequence& e, Reducer& reducer) {
  ad::Graph g;
  ad::Var out = reducer.forward(g.constant(e.matrix));
  return {e.doc_id, out.value()};
}

}  // namespace icd::dimreduce
