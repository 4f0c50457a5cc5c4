#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "icd/encoder.hpp"
#include "icd/pipeline.hpp"
#include "icd/synthgen.hpp"
#include "icd/trainkit.hpp"

namespace icd::config {

// `key = value` lines, `#` comments, dotted keys. Insertion order is kept so
// that serialized configs are byte-stable.
class KvConfig {
 public:
  static KvConfig parse(std::string_view text);
  static KvConfig load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  std::optional<std::string> get(const std::string& key) const;
  bool contains(const std::string& key) const { return get(key).has_value(); }
  void merge(const KvConfig& other);

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string to_text() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Everything one CLI invocation needs, grouped by owning module.
struct RunConfig {
  synth::GeneratorSpec gen;
  encoder::EncoderConfig encoder;
  pipeline::ModelSpec model;
  std::string train_preset = "mrcnn_top50";
  train::TrainConfig train = train::train_preset("mrcnn_top50");
};

// Preset defaults for an architecture: llama2_c pairs with llama_top50 /
// llama_full, llama2_r_mrcnn with mrcnn_top50 / mrcnn_full.
std::string default_train_preset(pipeline::Arch arch, bool full_codes);

// Applies keys onto cfg. `train.preset` (if present) is applied before the
// individual train.* keys. Unknown keys raise ValidationError.
void apply(const KvConfig& kv, RunConfig& cfg);
KvConfig to_kv(const RunConfig& cfg);

}  // namespace icd::config
