#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "icd/cli.hpp"
#include "icd/error.hpp"
#include "icd/metrics.hpp"
#include "icd/posenc.hpp"
#include "icd/synthgen.hpp"

namespace py = pybind11;
using namespace icd;

namespace {

py::array_t<double> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

synth::GeneratorSpec make_spec(std::size_t vocab_size, std::size_t n_labels, std::size_t n_docs, std::size_t min_len,
                               std::size_t max_len, std::size_t tokens_per_label, double label_prevalence,
                               double noise_rate, std::uint64_t seed) {
  return {vocab_size, n_labels, n_docs, min_len, max_len, tokens_per_label, label_prevalence, noise_rate, seed};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Synthetic ICD coding pipeline";

  // Translators run newest first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ContextOverflowError>(m, "ContextOverflowError", PyExc_ValueError);
  py::register_exception<ArtifactMismatchError>(m, "ArtifactMismatchError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
  py::register_exception<ModeError>(m, "ModeError", PyExc_ValueError);

  py::class_<synth::GeneratorSpec>(m, "GeneratorSpec")
      .def(py::init(&make_spec), py::arg("vocab_size") = 2000, py::arg("n_labels") = 50, py::arg("n_docs") = 3000,
           py::arg("min_len") = 64, py::arg("max_len") = 256, py::arg("tokens_per_label") = 3,
           py::arg("label_prevalence") = 0.08, py::arg("noise_rate") = 0.1, py::arg("seed") = 42)
      .def_readwrite("vocab_size", &synth::GeneratorSpec::vocab_size)
      .def_readwrite("n_labels", &synth::GeneratorSpec::n_labels)
      .def_readwrite("n_docs", &synth::GeneratorSpec::n_docs)
      .def_readwrite("label_prevalence", &synth::GeneratorSpec::label_prevalence)
      .def_readwrite("noise_rate", &synth::GeneratorSpec::noise_rate)
      .def_readwrite("seed", &synth::GeneratorSpec::seed);

  py::class_<synth::Document>(m, "Document")
      .def_readonly("doc_id", &synth::Document::doc_id)
      .def_property_readonly("split", [](const synth::Document& d) { return synth::split_name(d.split); })
      .def_readonly("labels", &synth::Document::labels)
      .def_readonly("tokens", &synth::Document::tokens);

  py::class_<synth::Corpus>(m, "Corpus")
      .def_readonly("vocab_size", &synth::Corpus::vocab_size)
      .def_readonly("n_labels", &synth::Corpus::n_labels)
      .def_readonly("documents", &synth::Corpus::documents)
      .def("to_text", [](const synth::Corpus& c) {
        std::ostringstream os;
        synth::write_corpus(c, os);
        return os.str();
      });

  m.def("generate", &synth::generate, py::arg("spec"));
  m.def("load_corpus", [](const std::string& path) { return synth::load_corpus(path); });
  m.def("bayes_oracle", [](const std::vector<std::uint32_t>& tokens, const synth::GeneratorSpec& spec) {
    return synth::bayes_oracle(tokens, spec);
  });

  m.def(
      "encode",
      [](const std::vector<std::uint32_t>& tokens, std::size_t vocab_size, std::size_t model_dim,
         std::size_t n_layers, std::size_t n_heads, std::uint64_t seed) {
        encoder::EncoderConfig cfg;
        cfg.vocab_size = vocab_size;
        cfg.model_dim = model_dim;
        cfg.n_layers = n_layers;
        cfg.n_heads = n_heads;
        cfg.seed = seed;
        return to_numpy(encoder::encode_document(tokens, cfg).matrix);
      },
      py::arg("tokens"), py::arg("vocab_size") = 2000, py::arg("model_dim") = 64, py::arg("n_layers") = 2,
      py::arg("n_heads") = 2, py::arg("seed") = 1234);

  m.def(
      "rope_apply",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const std::vector<std::size_t>& positions, double alpha, const std::string& mode) {
        posenc::PosEncConfig cfg;
        cfg.head_dim = static_cast<std::size_t>(x.shape(x.ndim() - 1));
        cfg.alpha = alpha;
        cfg.mode = posenc::parse_mode(mode);
        return to_numpy(posenc::rope_apply(from_numpy(x), positions, cfg));
      },
      py::arg("x"), py::arg("positions"), py::arg("alpha") = 1.0, py::arg("mode") = "standard");

  m.def(
      "paper_pe",
      [](std::size_t pos, double alpha, double rho) {
        posenc::PosEncConfig cfg;
        cfg.alpha = alpha;
        cfg.rho = rho;
        cfg.mode = posenc::Mode::kPaperLiteral;
        return posenc::paper_pe(pos, cfg);
      },
      py::arg("pos"), py::arg("alpha"), py::arg("rho") = 1.0);

  m.def(
      "metrics_report",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& scores,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& gold, double threshold) {
        metrics::EvalBatch b{from_numpy(scores), from_numpy(gold), threshold};
        const auto r = metrics::full_report(b);
        py::dict d;
        d["f1_macro"] = r.f1_macro;
        d["f1_micro"] = r.f1_micro;
        d["auc_macro"] = r.auc_macro ? py::cast(*r.auc_macro) : py::none();
        d["auc_micro"] = r.auc_micro ? py::cast(*r.auc_micro) : py::none();
        for (const auto& [k, v] : r.p_at) d[py::str("p_at_" + std::to_string(k))] = v;
        d["n_labels_scored_macro"] = r.n_labels_scored_macro;
        d["text"] = metrics::render_report(r);
        return d;
      },
      py::arg("scores"), py::arg("gold"), py::arg("threshold") = 0.5);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI command line in-process; returns (exit_code, stdout, stderr).");
}
