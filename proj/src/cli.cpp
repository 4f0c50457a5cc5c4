#include "icd/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "icd/error.hpp"
#include "icd/format.hpp"
#include "icd/metrics.hpp"
#include "icd/trainkit.hpp"

namespace icd::cli {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ContextOverflowError*>(&e)) return kContext;
  if (dynamic_cast<const DivergenceError*>(&e)) return kDivergence;
  if (dynamic_cast<const ArtifactMismatchError*>(&e)) return kArtifactMismatch;
  if (dynamic_cast<const Error*>(&e)) return kValidation;
  return kFailure;
}

std::vector<encoder::EmbeddingSequence> embed_corpus(const synth::Corpus& corpus, const encoder::EncoderConfig& cfg) {
  if (cfg.vocab_size < corpus.vocab_size) {
    throw ValidationError("encoder vocab_size " + std::to_string(cfg.vocab_size) + " is smaller than corpus vocab " +
                          std::to_string(corpus.vocab_size));
  }
  const encoder::Encoder enc(cfg);
  std::vector<encoder::EmbeddingSequence> out;
  out.reserve(corpus.documents.size());
  for (const auto& d : corpus.documents) {
    try {
      out.push_back(enc.encode(d.doc_id, d.tokens));
    } catch (const ContextOverflowError& e) {
      throw ContextOverflowError("document " + d.doc_id + ": " + e.what());
    }
  }
  return out;
}

std::vector<pipeline::Example> make_examples(const pipeline::Model& model, const synth::Corpus& corpus,
                                             const std::vector<encoder::EmbeddingSequence>& embeddings,
                                             synth::Split split) {
  std::map<std::string, const encoder::EmbeddingSequence*> by_id;
  for (const auto& e : embeddings) by_id[e.doc_id] = &e;
  std::vector<pipeline::Example> out;
  for (const auto* d : corpus.split(split)) {
    auto it = by_id.find(d->doc_id);
    if (it == by_id.end()) throw ArtifactMismatchError("no embedding for document " + d->doc_id);
    out.push_back({d->doc_id, model.prepare(*it->second), corpus.gold(*d)});
  }
  return out;
}

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "override a config key (key=value), repeatable");
  cmd->add_option("--seed", c.seed, "seed for the command's random process");
  cmd->add_option("--out", c.out, "output path");
}

// File values first, then --set overrides.
config::KvConfig gather(const Common& c) {
  config::KvConfig kv;
  if (!c.config_path.empty()) kv = config::KvConfig::load(c.config_path);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
    auto parsed = config::KvConfig::parse(s.substr(0, eq) + " = " + s.substr(eq + 1));
    kv.merge(parsed);
  }
  return kv;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write '" + path + "'");
  return os;
}

void require_out(const Common& c, const char* cmd) {
  if (c.out.empty()) throw ValidationError(std::string(cmd) + " needs --out");
}

std::vector<encoder::EmbeddingSequence> obtain_embeddings(const std::string& emb_path, const synth::Corpus& corpus,
                                                          const encoder::EncoderConfig& enc) {
  if (emb_path.empty()) return embed_corpus(corpus, enc);
  return encoder::load_embeddings(emb_path);
}

int cmd_gen_data(const Common& c, std::ostream& out) {
  require_out(c, "gen-data");
  config::RunConfig cfg;
  config::apply(gather(c), cfg);
  if (c.seed) cfg.gen.seed = *c.seed;
  const auto corpus = synth::generate(cfg.gen);
  synth::save_corpus(corpus, c.out);
  out << "wrote " << corpus.documents.size() << " documents to " << c.out << "\n";
  return kOk;
}

int cmd_embed(const Common& c, const std::string& corpus_path, std::ostream& out) {
  require_out(c, "embed");
  config::RunConfig cfg;
  config::apply(gather(c), cfg);
  if (c.seed) cfg.encoder.seed = *c.seed;
  const auto corpus = synth::load_corpus(corpus_path);
  const auto seqs = embed_corpus(corpus, cfg.encoder);
  save_embeddings(seqs, c.out);
  out << "wrote " << seqs.size() << " embeddings of dim " << cfg.encoder.model_dim << " to " << c.out << "\n";
  return kOk;
}

struct TrainArgs {
  std::string corpus;
  std::string embeddings;
  std::string arch;
  std::string preset;
  std::string history;
  bool paper_dims = false;
  std::optional<std::size_t> freeze_lr_after;
};

int cmd_train(const Common& c, const TrainArgs& a, std::ostream& out) {
  require_out(c, "train");
  const auto corpus = synth::load_corpus(a.corpus);
  auto kv = gather(c);
  if (!a.arch.empty()) kv.set("model.arch", a.arch);
  if (!a.preset.empty()) kv.set("train.preset", a.preset);
  if (a.paper_dims) kv.set("model.paper_dims", "true");
  if (!kv.contains("train.preset")) {
    const auto arch = pipeline::parse_arch(kv.get("model.arch").value_or("llama2_r_mrcnn"));
    kv.set("train.preset", config::default_train_preset(arch, corpus.n_labels > head::kTopCodes));
  }
  config::RunConfig cfg;
  config::apply(kv, cfg);
  if (c.seed) cfg.train.seed = *c.seed;
  cfg.train.validate();

  const auto embeddings = obtain_embeddings(a.embeddings, corpus, cfg.encoder);
  if (embeddings.empty()) throw ValidationError("no embeddings to train on");
  cfg.model.input_dim = embeddings.front().dim();
  cfg.model.n_labels = corpus.n_labels;

  auto model = pipeline::Model::build(cfg.model);
  const auto train_set = make_examples(*model, corpus, embeddings, synth::Split::kTrain);
  const auto val_set = make_examples(*model, corpus, embeddings, synth::Split::kVal);
  if (train_set.empty() || val_set.empty()) throw ValidationError("corpus needs non-empty train and val splits");
  auto trainable = pipeline::make_trainable(*model, train_set, val_set);
  train::TrainOptions opts;
  opts.freeze_lr_after_epoch = a.freeze_lr_after;
  const auto history = train::train(trainable, cfg.train, opts);

  train::save_checkpoint(c.out, config::to_kv(cfg).to_text(), model->params());
  const std::string history_path = a.history.empty() ? c.out + ".history.tsv" : a.history;
  open_out(history_path) << train::render_history(history);
  out << "arch " << pipeline::arch_name(cfg.model.arch) << ", " << history.epochs.size() << " epochs"
      << (history.stopped_early ? " (stopped early)" : "");
  if (!history.epochs.empty()) {
    out << ", best epoch " << history.best_epoch << " val micro-F1 "
        << format_fixed(history.epochs[history.best_epoch - 1].val_micro_f1, 6);
  }
  out << "\n";
  out << "wrote " << c.out << " and " << history_path << "\n";
  return kOk;
}

struct EvalArgs {
  std::string corpus;
  std::string checkpoint;
  std::string embeddings;
  std::string split = "test";
  std::string arch;
  bool oracle = false;
};

int cmd_eval(const Common& c, const EvalArgs& a, std::ostream& out) {
  const auto corpus = synth::load_corpus(a.corpus);
  const auto split = synth::parse_split(a.split);
  const auto docs = corpus.split(split);
  if (docs.empty()) throw ValidationError("split '" + a.split + "' is empty");
  const auto kv = gather(c);

  Tensor scores({docs.size(), corpus.n_labels});
  Tensor gold({docs.size(), corpus.n_labels});
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto g = corpus.gold(*docs[i]);
    std::copy(g.data().begin(), g.data().end(), gold.row(i).begin());
  }

  if (a.oracle) {
    config::RunConfig cfg;
    config::apply(kv, cfg);
    cfg.gen.vocab_size = corpus.vocab_size;
    cfg.gen.n_labels = corpus.n_labels;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const auto s = synth::bayes_oracle(docs[i]->tokens, cfg.gen);
      std::copy(s.begin(), s.end(), scores.row(i).begin());
    }
  } else {
    if (a.checkpoint.empty()) throw ValidationError("eval needs --checkpoint or --oracle");
    const auto ckpt = train::load_checkpoint(a.checkpoint);
    config::RunConfig cfg;
    config::apply(config::KvConfig::parse(ckpt.config_text), cfg);
    std::optional<std::string> expected = kv.get("model.arch");
    if (!a.arch.empty()) expected = a.arch;
    if (expected && pipeline::parse_arch(*expected) != cfg.model.arch) {
      throw ArtifactMismatchError("checkpoint holds architecture " + std::string(pipeline::arch_name(cfg.model.arch)) +
                                  ", requested " + *expected);
    }
    if (cfg.model.n_labels != corpus.n_labels) {
      throw ArtifactMismatchError("checkpoint scores " + std::to_string(cfg.model.n_labels) +
                                  " labels, corpus has " + std::to_string(corpus.n_labels));
    }
    auto model = pipeline::Model::build(cfg.model);
    train::restore_params(ckpt, model->params());
    const auto embeddings = obtain_embeddings(a.embeddings, corpus, cfg.encoder);
    const auto examples = make_examples(*model, corpus, embeddings, split);
    scores = pipeline::score_all(*model, examples);
  }

  const auto report = metrics::render_report(metrics::full_report({scores, gold}));
  if (c.out.empty()) out << report;
  else open_out(c.out) << report;
  return kOk;
}

struct ReportArgs {
  std::string checkpoint;
  std::string reduction;
  bool paper_dims = false;
};

// Forward a short zero sequence through the reduction preset and list the
// shape after each stage.
std::string shape_plan(const std::string& preset, bool paper_dims, std::size_t input_dim) {
  auto rc = dimreduce::reduction_preset(preset, input_dim, paper_dims);
  dimreduce::Reducer reducer = dimreduce::Reducer::zeros(rc);
  constexpr std::size_t kLen = 4;
  ad::Graph g(false);
  ad::Var y = g.constant(Tensor({kLen, input_dim}));
  std::ostringstream os;
  os << "preset\t" << preset << "\n";
  os << "input\t" << shape_to_string(y.shape()) << "\n";
  std::size_t stage = 0;
  if (rc.strategy == dimreduce::Strategy::kCnnChain) {
    for (auto& s : reducer.stages()) {
      std::vector<dimreduce::CnnStage> single{s};
      y = dimreduce::cnn_reduce(y, single);
      os << "stage" << stage++ << "\t" << shape_to_string(y.shape()) << "\n";
    }
  } else {
    y = reducer.forward(y);
    os << "residual\t" << shape_to_string(y.shape()) << "\n";
  }
  return os.str();
}

int cmd_report(const Common& c, const ReportArgs& a, std::ostream& out) {
  std::ostringstream os;
  if (!a.checkpoint.empty()) {
    const auto ckpt = train::load_checkpoint(a.checkpoint);
    os << ckpt.config_text;
    if (!ckpt.config_text.empty() && ckpt.config_text.back() != '\n') os << "\n";
    std::size_t total = 0;
    for (const auto& [name, t] : ckpt.tensors) {
      os << "param\t" << name << "\t" << shape_to_string(t.shape()) << "\t" << t.size() << "\n";
      total += t.size();
    }
    os << "total_params\t" << total << "\n";
  } else if (!a.reduction.empty()) {
    config::RunConfig cfg;
    config::apply(gather(c), cfg);
    const std::size_t dim = a.paper_dims ? 4096 : cfg.encoder.model_dim;
    os << shape_plan(a.reduction, a.paper_dims, dim);
  } else {
    throw ValidationError("report needs --checkpoint or --reduction");
  }
  if (c.out.empty()) out << os.str();
  else open_out(c.out) << os.str();
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic ICD coding pipeline"};
  app.require_subcommand(1);

  Common gen_c, emb_c, train_c, eval_c, report_c;
  std::string emb_corpus;
  TrainArgs ta;
  EvalArgs ea;
  ReportArgs ra;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  add_common(gen, gen_c);

  auto* emb = app.add_subcommand("embed", "encode a corpus with the frozen encoder");
  add_common(emb, emb_c);
  emb->add_option("--corpus", emb_corpus, "corpus file")->required()->check(CLI::ExistingFile);

  auto* tr = app.add_subcommand("train", "train a classifier and write a checkpoint");
  add_common(tr, train_c);
  tr->add_option("--corpus", ta.corpus, "corpus file")->required()->check(CLI::ExistingFile);
  tr->add_option("--embeddings", ta.embeddings, "EMB file (encoded on the fly if absent)")->check(CLI::ExistingFile);
  tr->add_option("--arch", ta.arch, "llama2_c or llama2_r_mrcnn");
  tr->add_option("--preset", ta.preset, "training preset");
  tr->add_option("--history", ta.history, "history output path");
  tr->add_flag("--paper-dims", ta.paper_dims, "use full-size reduction dimensions");
  tr->add_option("--freeze-lr-after", ta.freeze_lr_after, "set lr to 0 after this epoch");

  auto* ev = app.add_subcommand("eval", "score a split and write the metrics report");
  add_common(ev, eval_c);
  ev->add_option("--corpus", ea.corpus, "corpus file")->required()->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->check(CLI::ExistingFile);
  ev->add_option("--embeddings", ea.embeddings, "EMB file")->check(CLI::ExistingFile);
  ev->add_option("--split", ea.split, "train, val or test");
  ev->add_option("--arch", ea.arch, "expected architecture");
  ev->add_flag("--oracle", ea.oracle, "score with the Bayes oracle");

  auto* rep = app.add_subcommand("report", "describe a checkpoint or a reduction preset");
  add_common(rep, report_c);
  rep->add_option("--checkpoint", ra.checkpoint, "checkpoint file")->check(CLI::ExistingFile);
  rep->add_option("--reduction", ra.reduction, "reduction preset name");
  rep->add_flag("--paper-dims", ra.paper_dims, "use full-size dimensions (4096 input)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_c, out);
    if (emb->parsed()) return cmd_embed(emb_c, emb_corpus, out);
    if (tr->parsed()) return cmd_train(train_c, ta, out);
    if (ev->parsed()) return cmd_eval(eval_c, ea, out);
    if (rep->parsed()) return cmd_report(report_c, ra, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kFailure;
}

}  // namespace icd::cli
