#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "icd/tensor.hpp"

namespace icd::ad {

using kernels::Padding;

enum class OpKind {
  kConstant,
  kParameter,
  kMatmul,
  kTranspose,
  kAdd,
  kSub,
  kMul,
  kAddBias,
  kScale,
  kSum,
  kMean,
  kRowSum,
  kMeanRows,
  kSelectRow,
  kConcatCols,
  kStackRows,
  kReshape,
  kConv1d,
  kRelu,
  kSigmoid,
  kTanh,
  kSoftmax,
  kCrossEntropy,
  kBinaryCrossEntropy,
};

const char* op_name(OpKind kind);

class Graph;

// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Tape of op records. Nodes are appended in evaluation order, so a node's
// inputs always precede it and backward is a single reverse sweep.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  // With track_gradients off, parameters are treated as constants and no
  // backward closures are recorded.
  explicit Graph(bool track_gradients = true) : track_gradients_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Leaf bound to an external tensor. If the tensor requires grad, backward
  // accumulates into its grad buffer. The tensor must outlive the graph.
  Var parameter(Tensor& param);

  Var push(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const;
  // Gradient buffer of a node during backward (allocated on first use).
  std::vector<double>& grad(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  OpKind kind(std::size_t id) const { return nodes_[id].kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss. Parameter grads accumulate across calls.
  void backward(Var loss);

  // Hash of the sign pattern of every relu input seen so far. Two evaluations
  // with equal signatures lie on the same linear piece of every relu.
  std::uint64_t relu_signature() const { return relu_signature_; }
  void record_relu_signs(const Tensor& input);

 private:
  struct Node {
    OpKind kind;
    Tensor value;
    Tensor* external = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::vector<double> grad;
    bool needs_grad = false;
  };
  // deque keeps value references stable while the tape grows.
  std::deque<Node> nodes_;
  std::uint64_t relu_signature_ = 0x6a09e667f3bcc908ULL;
  bool track_gradients_ = true;
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// x[..., C] + bias[C], broadcast over leading rows.
Var add_bias(Var x, Var bias);
Var scale(Var x, double factor);
// Scalar (shape [1]) sum / mean of every entry.
Var sum(Var x);
Var mean(Var x);
// [R x C] -> [R]
Var row_sum(Var x);
// [R x C] -> [C]
Var mean_rows(Var x);
// [R x C] -> [C]
Var select_row(Var x, std::size_t r);
// Column-wise concatenation of equal-height matrices.
Var concat_cols(const std::vector<Var>& parts);
// Stacks equal-length rank-1 vectors into an [N x C] matrix.
Var stack_rows(const std::vector<Var>& rows);
Var reshape(Var x, Shape shape);
Var conv1d(Var x, Var w, Var bias, Padding padding);
Var relu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
// Softmax over the last axis.
Var softmax(Var x);
// Mean over rows of -sum_c y log p; target rows must be one-hot.
Var cross_entropy(Var probs, const Tensor& target);
// Mean over all entries of -[y log p + (1-y) log(1-p)]; target in {0,1}.
Var binary_cross_entropy(Var probs, const Tensor& target);

inline constexpr double kLogFloor = 1e-12;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Coordinates skipped because a perturbation crossed a relu kink.
  std::size_t skipped_nonsmooth = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every coordinate; otherwise this many coordinates are sampled.
  std::size_t probes = 0;
  std::uint64_t seed = 0;
};

using GraphBuilder = std::function<Var(Graph&)>;

// Central-difference check of d f / d params against the tape. The builder
// must create its leaves with Graph::parameter on the given tensors.
GradCheckResult grad_check(const GraphBuilder& f, const std::vector<Tensor*>& params,
                           const GradCheckOptions& options = {});

}  // namespace icd::ad
