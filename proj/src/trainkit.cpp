#include "icd/trainkit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "icd/error.hpp"
#include "icd/format.hpp"
#include "icd/metrics.hpp"
#include "icd/rng.hpp"

namespace icd::train {

const char* scheduler_name(Scheduler s) { return s == Scheduler::kCosine ? "cosine" : "constant"; }

Scheduler parse_scheduler(const std::string& name) {
  if (name == "cosine") return Scheduler::kCosine;
  if (name == "constant") return Scheduler::kConstant;
  throw ValidationError("unknown scheduler '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw ValidationError("warmup_ratio must be in [0,1)");
  if (!(lr_peak > 0.0)) throw ValidationError("lr_peak must be positive");
  if (grad_accum_steps < 1) throw ValidationError("grad_accum_steps must be >= 1");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (patience && *patience < 1) throw ValidationError("patience must be >= 1 when set");
  if (max_grad_norm < 0.0) throw ValidationError("max_grad_norm must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ValidationError("adam betas must be in [0,1)");
  }
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be non-negative");
}

std::vector<std::string> train_preset_names() { return {"llama_top50", "llama_full", "mrcnn_top50", "mrcnn_full"}; }

TrainConfig train_preset(const std::string& name) {
  TrainConfig cfg;
  if (name == "llama_top50" || name == "llama_full") {
    cfg.epochs = name == "llama_top50" ? 5 : 3;
    cfg.scheduler = Scheduler::kCosine;
    cfg.warmup_ratio = 0.03;
    cfg.max_grad_norm = 0.3;
    cfg.lr_peak = 1e-4;
    cfg.bf16 = true;
    cfg.gradient_checkpointing = true;
    cfg.grad_accum_steps = 32;
    cfg.batch_size = 2;
    cfg.eval_batch_size = 2;
    cfg.adam_beta2 = 0.99;
    cfg.weight_decay = 0.0;
    cfg.patience.reset();
    return cfg;
  }
  if (name == "mrcnn_top50" || name == "mrcnn_full") {
    // Only epochs, patience, lr and batch sizes are given for this model;
    // the rest are plain Adam defaults without schedule or clipping.
    cfg.epochs = name == "mrcnn_top50" ? 15 : 25;
    cfg.patience = 3;
    cfg.lr_peak = 1e-4;
    cfg.batch_size = 2;
    cfg.eval_batch_size = 2;
    cfg.scheduler = Scheduler::kConstant;
    cfg.warmup_ratio = 0.0;
    cfg.max_grad_norm = 0.0;
    cfg.grad_accum_steps = 1;
    cfg.adam_beta2 = 0.999;
    cfg.weight_decay = 0.0;
    cfg.bf16 = false;
    cfg.gradient_checkpointing = false;
    return cfg;
  }
  throw ValidationError("unknown training preset '" + name + "'");
}

std::size_t warmup_steps(std::size_t total_steps, const TrainConfig& cfg) {
  return static_cast<std::size_t>(std::floor(cfg.warmup_ratio * static_cast<double>(total_steps)));
}

double cosine_lr(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  if (total_steps == 0) throw ValidationError("cosine_lr needs total_steps > 0");
  if (step > total_steps) throw ValidationError("cosine_lr step beyond total_steps");
  const std::size_t warm = warmup_steps(total_steps, cfg);
  if (warm > 0 && step <= warm) {
    return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(warm);
  }
  if (cfg.scheduler == Scheduler::kConstant) return cfg.lr_peak;
  if (step == total_steps) return 0.0;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(total_steps - warm);
  return cfg.lr_peak * 0.5 * (1.0 + std::cos(M_PI * progress));
}

double global_grad_norm(const ParamList& params) {
  double ss = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor->grad()) ss += g * g;
  return std::sqrt(ss);
}

double clip_global_norm(const ParamList& params, double max_norm) {
  if (max_norm <= 0.0) return 1.0;
  const double norm = global_grad_norm(params);
  if (!(norm > max_norm)) return 1.0;
  const double factor = max_norm / norm;
  for (const auto& p : params)
    for (double& g : p.tensor->grad()) g *= factor;
  return factor;
}

void AdamState::init(const ParamList& params) {
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(p.tensor->size(), 0.0);
    v.emplace_back(p.tensor->size(), 0.0);
  }
  step = 0;
}

void adam_step(const ParamList& params, AdamState& state, double lr, const TrainConfig& cfg) {
  if (state.m.size() != params.size()) state.init(params);
  for (const auto& p : params) {
    for (double g : p.tensor->grad()) {
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = *params[i].tensor;
    auto grad = t.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (cfg.weight_decay != 0.0) t[j] -= lr * cfg.weight_decay * t[j];
      const double g = grad[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      t[j] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) p.tensor->zero_grad();
}

Accumulator::Accumulator(ParamList params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& p : params_) {
    if (!p.tensor->requires_grad()) p.tensor->set_requires_grad(true);
  }
  adam_.init(params_);
}

bool Accumulator::accumulate_and_step(ad::Graph& graph, ad::Var loss, double lr) {
  ad::Var scaled = ad::scale(loss, 1.0 / static_cast<double>(cfg_.grad_accum_steps));
  graph.backward(scaled);
  ++pending_;
  if (pending_ < cfg_.grad_accum_steps) return false;
  step(lr);
  return true;
}

bool Accumulator::flush(double lr) {
  if (pending_ == 0) return false;
  step(lr);
  return true;
}

void Accumulator::step(double lr) {
  last_clip_ = clip_global_norm(params_, cfg_.max_grad_norm);
  last_norm_ = global_grad_norm(params_);
  adam_step(params_, adam_, lr, cfg_);
  zero_grads(params_);
  pending_ = 0;
}

bool early_stop(const std::vector<EpochRecord>& history, std::size_t patience) {
  if (history.empty()) return false;
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].val_micro_f1 > history[best].val_micro_f1) best = i;
  }
  return history.size() - 1 - best >= patience;
}

std::string render_history(const TrainHistory& h) {
  std::ostringstream os;
  os << "epoch\ttrain_loss\tval_loss\tval_micro_f1\tval_micro_auc\tlr_end\n";
  for (const auto& r : h.epochs) {
    os << r.epoch << '\t' << format_fixed(r.train_loss, 6) << '\t' << format_fixed(r.val_loss, 6) << '\t'
       << format_fixed(r.val_micro_f1, 6) << '\t'
       << (r.val_micro_auc ? format_fixed(*r.val_micro_auc, 6) : std::string("undefined")) << '\t'
       << format_double(r.lr_end) << '\n';
  }
  return os.str();
}

namespace {

struct Snapshot {
  std::vector<std::vector<double>> values;

  static Snapshot take(const ParamList& params) {
    Snapshot s;
    for (const auto& p : params) s.values.push_back(p.tensor->storage());
    return s;
  }
  void restore(const ParamList& params) const {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor->storage() = values[i];
  }
};

EpochRecord evaluate_epoch(Trainable& model, const TrainConfig& cfg) {
  EpochRecord r;
  if (model.n_val == 0) return r;
  Tensor scores({model.n_val, model.n_labels});
  Tensor gold({model.n_val, model.n_labels});
  for (std::size_t i = 0; i < model.n_val; ++i) {
    const auto s = model.score_val(i);
    std::copy(s.begin(), s.end(), scores.row(i).begin());
    const Tensor& g = model.val_gold(i);
    std::copy(g.data().begin(), g.data().end(), gold.row(i).begin());
  }
  metrics::EvalBatch batch{std::move(scores), std::move(gold), 0.5};
  r.val_micro_f1 = metrics::f1_scores(batch).micro;
  r.val_micro_auc = metrics::auc_scores(batch).micro;
  double loss = 0.0;
  const std::size_t bs = std::max<std::size_t>(cfg.eval_batch_size, 1);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < model.n_val; start += bs) {
    idx.clear();
    for (std::size_t i = start; i < std::min(start + bs, model.n_val); ++i) idx.push_back(i);
    loss += model.val_loss(idx) * static_cast<double>(idx.size());
  }
  r.val_loss = loss / static_cast<double>(model.n_val);
  return r;
}

}  // namespace

TrainHistory train(Trainable& model, const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  TrainHistory history;
  const ParamList params = model.params();
  if (cfg.epochs == 0 || model.n_train == 0) return history;

  Accumulator acc(params, cfg);
  zero_grads(params);
  const std::size_t micro_per_epoch = (model.n_train + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t steps_per_epoch = (micro_per_epoch + cfg.grad_accum_steps - 1) / cfg.grad_accum_steps;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  std::size_t step = 0;
  history.lr_trace.push_back(cosine_lr(0, total_steps, cfg));
  Snapshot best;
  double best_f1 = -1.0;

  auto current_lr = [&](std::size_t epoch) {
    if (options.freeze_lr_after_epoch && epoch > *options.freeze_lr_after_epoch) return 0.0;
    return cosine_lr(step, total_steps, cfg);
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    CounterRng rng(cfg.seed, epoch);
    const auto order = permutation(model.n_train, rng);
    double loss_sum = 0.0;
    std::vector<std::size_t> batch;
    for (std::size_t mb = 0; mb < micro_per_epoch; ++mb) {
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(mb * cfg.batch_size),
                   order.begin() + static_cast<std::ptrdiff_t>(std::min((mb + 1) * cfg.batch_size, model.n_train)));
      ad::Graph graph;
      ad::Var loss = model.loss(graph, batch);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step));
      }
      loss_sum += value;
      const bool last = mb + 1 == micro_per_epoch;
      const double lr = current_lr(epoch);
      bool stepped = acc.accumulate_and_step(graph, loss, lr);
      if (!stepped && last) stepped = acc.flush(lr);
      if (stepped) {
        ++step;
        history.lr_trace.push_back(cosine_lr(step, total_steps, cfg));
      }
    }
    EpochRecord rec = evaluate_epoch(model, cfg);
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(micro_per_epoch);
    rec.lr_end = history.lr_trace.back();
    history.epochs.push_back(rec);
    if (rec.val_micro_f1 > best_f1) {
      best_f1 = rec.val_micro_f1;
      best = Snapshot::take(params);
      history.best_epoch = epoch;
    }
    if (options.on_epoch) options.on_epoch(rec);
    if (cfg.patience && early_stop(history.epochs, *cfg.patience)) {
      history.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  history.optimizer_steps = step;
  best.restore(params);
  return history;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

bool get_bytes(std::istream& is, char* out, std::size_t n) {
  is.read(out, static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(is.gcount()) == n;
}

std::uint64_t get_le(std::istream& is, int width, const char* what) {
  unsigned char b[8];
  if (!get_bytes(is, reinterpret_cast<char*>(b), static_cast<std::size_t>(width))) {
    throw ArtifactMismatchError(std::string("truncated checkpoint while reading ") + what);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

constexpr char kMagic[5] = {'M', 'R', 'C', 'K', '1'};

}  // namespace

void write_checkpoint(std::ostream& os, const std::string& config_text, const ParamList& params) {
  os.write(kMagic, sizeof(kMagic));
  put_u64(os, config_text.size());
  os.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  for (const auto& p : params) {
    put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Tensor& t = *p.tensor;
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u64(os, d);
    for (double v : t.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
}

Checkpoint read_checkpoint(std::istream& is) {
  char magic[5];
  if (!get_bytes(is, magic, 5) || std::memcmp(magic, kMagic, 5) != 0) {
    throw ArtifactMismatchError("not a checkpoint: bad magic");
  }
  Checkpoint ckpt;
  const std::uint64_t len = get_le(is, 8, "config length");
  ckpt.config_text.resize(len);
  if (len && !get_bytes(is, ckpt.config_text.data(), len)) throw ArtifactMismatchError("truncated checkpoint config");
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto name_len = get_le(is, 4, "name length");
    std::string name(name_len, '\0');
    if (name_len && !get_bytes(is, name.data(), name_len)) throw ArtifactMismatchError("truncated parameter name");
    const auto rank = get_le(is, 4, "rank");
    if (rank == 0 || rank > 8) throw ArtifactMismatchError("bad rank for parameter '" + name + "'");
    Shape shape;
    for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(get_le(is, 8, "dimension"));
    Tensor t(shape);
    for (auto& v : t.data()) v = std::bit_cast<double>(get_le(is, 8, "values"));
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const std::string& config_text, const ParamList& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  write_checkpoint(os, config_text, params);
  if (!os) throw Error("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArtifactMismatchError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(is);
}

void restore_params(const Checkpoint& ckpt, const ParamList& params) {
  if (ckpt.tensors.size() != params.size()) {
    throw ArtifactMismatchError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                                std::to_string(params.size()));
  }
  for (const auto& p : params) {
    auto it = std::find_if(ckpt.tensors.begin(), ckpt.tensors.end(), [&](const auto& e) { return e.first == p.name; });
    if (it == ckpt.tensors.end()) throw ArtifactMismatchError("checkpoint lacks parameter '" + p.name + "'");
    if (it->second.shape() != p.tensor->shape()) {
      throw ArtifactMismatchError("parameter '" + p.name + "' has shape " + shape_to_string(it->second.shape()) +
                                  " in checkpoint, model expects " + shape_to_string(p.tensor->shape()));
    }
    p.tensor->storage() = it->second.storage();
  }
}

}  // namespace icd::train
