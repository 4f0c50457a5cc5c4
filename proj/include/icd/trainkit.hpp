#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icd/autodiff.hpp"
#include "icd/params.hpp"

namespace icd::train {

enum class Scheduler { kCosine, kConstant };
const char* scheduler_name(Scheduler s);
Scheduler parse_scheduler(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 15;
  double lr_peak = 1e-4;
  Scheduler scheduler = Scheduler::kCosine;
  double warmup_ratio = 0.03;
  // 0 disables clipping.
  double max_grad_norm = 0.3;
  std::size_t grad_accum_steps = 32;
  std::size_t batch_size = 2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  std::optional<std::size_t> patience;
  std::uint64_t seed = 0;
  // Recorded for run metadata only; computation always runs in float64.
  bool bf16 = true;
  bool gradient_checkpointing = true;
  std::size_t eval_batch_size = 2;

  void validate() const;
};

// Named presets: llama_top50, llama_full, mrcnn_top50, mrcnn_full.
TrainConfig train_preset(const std::string& name);
std::vector<std::string> train_preset_names();

std::size_t warmup_steps(std::size_t total_steps, const TrainConfig& cfg);
// Linear warmup to lr_peak, then half-cosine decay to 0 at total_steps
// (constant scheduler: warmup then flat).
double cosine_lr(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);

double global_grad_norm(const ParamList& params);
// Scales every grad by max_norm / norm when norm exceeds max_norm and
// returns the factor applied (1.0 otherwise).
double clip_global_norm(const ParamList& params, double max_norm);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;

  void init(const ParamList& params);
};

// One bias-corrected Adam update (step counter advanced inside). Decoupled
// weight decay theta -= lr * wd * theta is applied first.
void adam_step(const ParamList& params, AdamState& state, double lr, const TrainConfig& cfg);

void zero_grads(const ParamList& params);

// Collects microbatch gradients: each loss is scaled by 1/grad_accum_steps
// before backward; the optimizer runs once per full window.
class Accumulator {
 public:
  Accumulator(ParamList params, const TrainConfig& cfg);

  // Backprops one microbatch loss; clips, steps and zeroes grads when the
  // window is full. Returns whether an optimizer step happened.
  bool accumulate_and_step(ad::Graph& graph, ad::Var loss, double lr);
  // Steps on a partial window (end of epoch). No-op if nothing is pending.
  bool flush(double lr);

  std::size_t pending() const { return pending_; }
  const AdamState& adam() const { return adam_; }
  double last_clip_factor() const { return last_clip_; }
  double last_post_clip_norm() const { return last_norm_; }

 private:
  void step(double lr);

  ParamList params_;
  TrainConfig cfg_;
  AdamState adam_;
  std::size_t pending_ = 0;
  double last_clip_ = 1.0;
  double last_norm_ = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_micro_f1 = 0.0;
  std::optional<double> val_micro_auc;
  double lr_end = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  // Schedule value after each optimizer step, starting at step 0.
  std::vector<double> lr_trace;
  std::size_t best_epoch = 0;
  std::size_t optimizer_steps = 0;
  bool stopped_early = false;
};

// Stop once validation micro-F1 has not strictly improved on its best for
// `patience` consecutive epochs.
bool early_stop(const std::vector<EpochRecord>& history, std::size_t patience);

std::string render_history(const TrainHistory& h);

// A trainable model seen by the loop: a parameter list, a differentiable
// loss over a microbatch of example indices and a scoring function.
struct Trainable {
  std::function<ParamList()> params;
  std::function<ad::Var(ad::Graph&, std::span<const std::size_t>)> loss;
  // Scores [C] (probabilities) of one validation example.
  std::function<std::vector<double>(std::size_t)> score_val;
  std::function<double(std::span<const std::size_t>)> val_loss;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_labels = 0;
  // Gold labels of validation example i, multi-hot [C].
  std::function<const Tensor&(std::size_t)> val_gold;
};

struct TrainOptions {
  // Overrides the scheduled lr from this epoch on (1-based); used to build
  // plateau scenarios.
  std::optional<std::size_t> freeze_lr_after_epoch;
  std::function<void(const EpochRecord&)> on_epoch;
};

// Seeded training loop. On return the model parameters hold the
// best-validation snapshot.
TrainHistory train(Trainable& model, const TrainConfig& cfg, const TrainOptions& options = {});

// Binary checkpoint: magic "MRCK1", u64 config length + UTF-8 config text,
// then per parameter: u32 name length, name, u32 rank, u64 dims, float64
// values; all integers and floats little-endian.
struct Checkpoint {
  std::string config_text;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_checkpoint(std::ostream& os, const std::string& config_text, const ParamList& params);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const std::string& config_text, const ParamList& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Copies checkpoint tensors into params by name; every parameter must be
// present with a matching shape.
void restore_params(const Checkpoint& ckpt, const ParamList& params);

}  // namespace icd::train
