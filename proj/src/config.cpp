#include "icd/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "icd/error.hpp"
#include "icd/format.hpp"

namespace icd::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

KvConfig KvConfig::parse(std::string_view text) {
  KvConfig kv;
  std::size_t lineno = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++lineno;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    const auto hash = raw.find('#');
    const std::string line = trim(raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value', got '" + line + "'", lineno);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ParseError("empty key", lineno);
    kv.set(key, trim(std::string_view(line).substr(eq + 1)));
  }
  return kv;
}

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

void KvConfig::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(key, std::move(value));
}

std::optional<std::string> KvConfig::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  return std::nullopt;
}

void KvConfig::merge(const KvConfig& other) {
  for (const auto& [k, v] : other.entries_) set(k, v);
}

std::string KvConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

std::string default_train_preset(pipeline::Arch arch, bool full_codes) {
  if (arch == pipeline::Arch::kLlama2C) return full_codes ? "llama_full" : "llama_top50";
  return full_codes ? "mrcnn_full" : "mrcnn_top50";
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  double out;
  if (!parse_double(v, out)) throw ValidationError("config key '" + key + "': '" + v + "' is not a number");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out;
  if (!parse_u64(v, out)) throw ValidationError("config key '" + key + "': '" + v + "' is not an unsigned integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "True" || v == "1") return true;
  if (v == "false" || v == "False" || v == "0") return false;
  throw ValidationError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_u64(key, trim(item)));
  if (out.empty()) throw ValidationError("config key '" + key + "' needs a comma-separated list");
  return out;
}

std::string from_list(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    // gen.*
    t["gen.vocab_size"] = [](RunConfig& c, auto& k, auto& v) { c.gen.vocab_size = to_u64(k, v); };
    t["gen.n_labels"] = [](RunConfig& c, auto& k, auto& v) { c.gen.n_labels = to_u64(k, v); };
    t["gen.n_docs"] = [](RunConfig& c, auto& k, auto& v) { c.gen.n_docs = to_u64(k, v); };
    t["gen.min_len"] = [](RunConfig& c, auto& k, auto& v) { c.gen.min_len = to_u64(k, v); };
    t["gen.max_len"] = [](RunConfig& c, auto& k, auto& v) { c.gen.max_len = to_u64(k, v); };
    t["gen.tokens_per_label"] = [](RunConfig& c, auto& k, auto& v) { c.gen.tokens_per_label = to_u64(k, v); };
    t["gen.label_prevalence"] = [](RunConfig& c, auto& k, auto& v) { c.gen.label_prevalence = to_double(k, v); };
    t["gen.noise_rate"] = [](RunConfig& c, auto& k, auto& v) { c.gen.noise_rate = to_double(k, v); };
    t["gen.seed"] = [](RunConfig& c, auto& k, auto& v) { c.gen.seed = to_u64(k, v); };
    // encoder.*
    t["encoder.vocab_size"] = [](RunConfig& c, auto& k, auto& v) { c.encoder.vocab_size = to_u64(k, v); };
    t["encoder.model_dim"] = [](RunConfig& c, auto& k, auto& v) { c.encoder.model_dim = to_u64(k, v); };
    t["encoder.n_layers"] = [](RunConfig& c, auto& k, auto& v) { c.encoder.n_layers = to_u64(k, v); };
    t["encoder.n_heads"] = [](RunConfig& c, auto& k, auto& v) { c.encoder.n_heads = to_u64(k, v); };
    t["encoder.seed"] = [](RunConfig& c, auto& k, auto& v) { c.encoder.seed = to_u64(k, v); };
    t["encoder.posenc.rope_base"] = [](RunConfig& c, auto& k, auto& v) { c.encoder.posenc.rope_base = to_double(k, v); };
    t["encoder.posenc.original_context"] = [](RunConfig& c, auto& k, auto& v) {
      c.encoder.posenc.original_context = to_u64(k, v);
    };
    t["encoder.posenc.alpha"] = [](RunConfig& c, auto& k, auto& v) { c.encoder.posenc.alpha = to_double(k, v); };
    t["encoder.posenc.rho"] = [](RunConfig& c, auto& k, auto& v) { c.encoder.posenc.rho = to_double(k, v); };
    t["encoder.posenc.mode"] = [](RunConfig& c, auto&, auto& v) { c.encoder.posenc.mode = posenc::parse_mode(v); };
    // model.*
    t["model.arch"] = [](RunConfig& c, auto&, auto& v) { c.model.arch = pipeline::parse_arch(v); };
    t["model.input_dim"] = [](RunConfig& c, auto& k, auto& v) { c.model.input_dim = to_u64(k, v); };
    t["model.n_labels"] = [](RunConfig& c, auto& k, auto& v) { c.model.n_labels = to_u64(k, v); };
    t["model.pooling"] = [](RunConfig& c, auto&, auto& v) { c.model.pooling = encoder::parse_pooling(v); };
    t["model.head_mode"] = [](RunConfig& c, auto&, auto& v) { c.model.head_mode = head::parse_mode(v); };
    t["model.reduction"] = [](RunConfig& c, auto&, auto& v) { c.model.reduction_preset = v; };
    t["model.paper_dims"] = [](RunConfig& c, auto& k, auto& v) { c.model.paper_dims = to_bool(k, v); };
    t["model.residual_layers"] = [](RunConfig& c, auto& k, auto& v) { c.model.residual_layers = to_u64(k, v); };
    t["model.seed"] = [](RunConfig& c, auto& k, auto& v) { c.model.seed = to_u64(k, v); };
    t["mrcnn.kernel_sizes"] = [](RunConfig& c, auto& k, auto& v) { c.model.mrcnn.kernel_sizes = to_list(k, v); };
    t["mrcnn.filters_per_kernel"] = [](RunConfig& c, auto& k, auto& v) {
      c.model.mrcnn.filters_per_kernel = to_u64(k, v);
    };
    t["mrcnn.n_residual_blocks"] = [](RunConfig& c, auto& k, auto& v) {
      c.model.mrcnn.n_residual_blocks = to_u64(k, v);
    };
    t["mrcnn.residual_kernel"] = [](RunConfig& c, auto& k, auto& v) { c.model.mrcnn.residual_kernel = to_u64(k, v); };
    // train.*
    t["train.epochs"] = [](RunConfig& c, auto& k, auto& v) { c.train.epochs = to_u64(k, v); };
    t["train.lr_peak"] = [](RunConfig& c, auto& k, auto& v) { c.train.lr_peak = to_double(k, v); };
    t["train.scheduler"] = [](RunConfig& c, auto&, auto& v) { c.train.scheduler = train::parse_scheduler(v); };
    t["train.warmup_ratio"] = [](RunConfig& c, auto& k, auto& v) { c.train.warmup_ratio = to_double(k, v); };
    t["train.max_grad_norm"] = [](RunConfig& c, auto& k, auto& v) { c.train.max_grad_norm = to_double(k, v); };
    t["train.grad_accum_steps"] = [](RunConfig& c, auto& k, auto& v) { c.train.grad_accum_steps = to_u64(k, v); };
    t["train.batch_size"] = [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = to_u64(k, v); };
    t["train.eval_batch_size"] = [](RunConfig& c, auto& k, auto& v) { c.train.eval_batch_size = to_u64(k, v); };
    t["train.adam_beta1"] = [](RunConfig& c, auto& k, auto& v) { c.train.adam_beta1 = to_double(k, v); };
    t["train.adam_beta2"] = [](RunConfig& c, auto& k, auto& v) { c.train.adam_beta2 = to_double(k, v); };
    t["train.adam_eps"] = [](RunConfig& c, auto& k, auto& v) { c.train.adam_eps = to_double(k, v); };
    t["train.weight_decay"] = [](RunConfig& c, auto& k, auto& v) { c.train.weight_decay = to_double(k, v); };
    t["train.patience"] = [](RunConfig& c, auto& k, auto& v) {
      if (v == "none") c.train.patience.reset();
      else c.train.patience = to_u64(k, v);
    };
    t["train.seed"] = [](RunConfig& c, auto& k, auto& v) { c.train.seed = to_u64(k, v); };
    t["train.bf16"] = [](RunConfig& c, auto& k, auto& v) { c.train.bf16 = to_bool(k, v); };
    t["train.gradient_checkpointing"] = [](RunConfig& c, auto& k, auto& v) {
      c.train.gradient_checkpointing = to_bool(k, v);
    };
    return t;
  }();
  return table;
}

}  // namespace

void apply(const KvConfig& kv, RunConfig& cfg) {
  if (auto preset = kv.get("train.preset")) {
    cfg.train_preset = *preset;
    const auto seed = cfg.train.seed;
    cfg.train = train::train_preset(*preset);
    cfg.train.seed = seed;
  }
  const auto& table = setters();
  for (const auto& [key, value] : kv.entries()) {
    if (key == "train.preset") continue;
    auto it = table.find(key);
    if (it == table.end()) throw ValidationError("unknown config key '" + key + "'");
    it->second(cfg, key, value);
  }
}

KvConfig to_kv(const RunConfig& c) {
  KvConfig kv;
  kv.set("gen.vocab_size", std::to_string(c.gen.vocab_size));
  kv.set("gen.n_labels", std::to_string(c.gen.n_labels));
  kv.set("gen.n_docs", std::to_string(c.gen.n_docs));
  kv.set("gen.min_len", std::to_string(c.gen.min_len));
  kv.set("gen.max_len", std::to_string(c.gen.max_len));
  kv.set("gen.tokens_per_label", std::to_string(c.gen.tokens_per_label));
  kv.set("gen.label_prevalence", format_double(c.gen.label_prevalence));
  kv.set("gen.noise_rate", format_double(c.gen.noise_rate));
  kv.set("gen.seed", std::to_string(c.gen.seed));
  kv.set("encoder.vocab_size", std::to_string(c.encoder.vocab_size));
  kv.set("encoder.model_dim", std::to_string(c.encoder.model_dim));
  kv.set("encoder.n_layers", std::to_string(c.encoder.n_layers));
  kv.set("encoder.n_heads", std::to_string(c.encoder.n_heads));
  kv.set("encoder.seed", std::to_string(c.encoder.seed));
  kv.set("encoder.posenc.rope_base", format_double(c.encoder.posenc.rope_base));
  kv.set("encoder.posenc.original_context", std::to_string(c.encoder.posenc.original_context));
  kv.set("encoder.posenc.alpha", format_double(c.encoder.posenc.alpha));
  kv.set("encoder.posenc.rho", format_double(c.encoder.posenc.rho));
  kv.set("encoder.posenc.mode", posenc::mode_name(c.encoder.posenc.mode));
  kv.set("model.arch", pipeline::arch_name(c.model.arch));
  kv.set("model.input_dim", std::to_string(c.model.input_dim));
  kv.set("model.n_labels", std::to_string(c.model.n_labels));
  kv.set("model.pooling", encoder::pooling_name(c.model.pooling));
  kv.set("model.head_mode", head::mode_name(c.model.head_mode));
  kv.set("model.reduction", c.model.reduction_preset);
  kv.set("model.paper_dims", from_bool(c.model.paper_dims));
  kv.set("model.residual_layers", std::to_string(c.model.residual_layers));
  kv.set("model.seed", std::to_string(c.model.seed));
  kv.set("mrcnn.kernel_sizes", from_list(c.model.mrcnn.kernel_sizes));
  kv.set("mrcnn.filters_per_kernel", std::to_string(c.model.mrcnn.filters_per_kernel));
  kv.set("mrcnn.n_residual_blocks", std::to_string(c.model.mrcnn.n_residual_blocks));
  kv.set("mrcnn.residual_kernel", std::to_string(c.model.mrcnn.residual_kernel));
  kv.set("train.preset", c.train_preset);
  kv.set("train.epochs", std::to_string(c.train.epochs));
  kv.set("train.lr_peak", format_double(c.train.lr_peak));
  kv.set("train.scheduler", train::scheduler_name(c.train.scheduler));
  kv.set("train.warmup_ratio", format_double(c.train.warmup_ratio));
  kv.set("train.max_grad_norm", format_double(c.train.max_grad_norm));
  kv.set("train.grad_accum_steps", std::to_string(c.train.grad_accum_steps));
  kv.set("train.batch_size", std::to_string(c.train.batch_size));
  kv.set("train.eval_batch_size", std::to_string(c.train.eval_batch_size));
  kv.set("train.adam_beta1", format_double(c.train.adam_beta1));
  kv.set("train.adam_beta2", format_double(c.train.adam_beta2));
  kv.set("train.adam_eps", format_double(c.train.adam_eps));
  kv.set("train.weight_decay", format_double(c.train.weight_decay));
  kv.set("train.patience", c.train.patience ? std::to_string(*c.train.patience) : "none");
  kv.set("train.seed", std::to_string(c.train.seed));
  kv.set("train.bf16", from_bool(c.train.bf16));
  kv.set("train.gradient_checkpointing", from_bool(c.train.gradient_checkpointing));
  return kv;
}

}  // namespace icd::config
