#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "irpo/cli.hpp"
#include "irpo/evalmetrics.hpp"
#include "irpo/gradient.hpp"
#include "irpo/instances.hpp"
#include "irpo/objective.hpp"
#include "irpo/trainer.hpp"

namespace py = pybind11;
using namespace irpo;

namespace {

using Batch = std::vector<RankedExample>;

void set_params(Policy& p, const std::vector<double>& values) {
  if (values.size() != p.num_params()) throw ValidationError("params: expected " + std::to_string(p.num_params()) +
                                                             " values, got " + std::to_string(values.size()));
  std::copy(values.begin(), values.end(), p.mutable_params().begin());
}

}  // namespace

PYBIND11_MODULE(irpo, m) {
  m.doc() = "Listwise preference optimization with importance-weighted gradients";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  // Data model.
  py::class_<CandidateItem>(m, "CandidateItem")
      .def(py::init<>())
      .def(py::init([](std::string id, std::vector<double> f) { return CandidateItem{std::move(id), std::move(f)}; }),
           py::arg("item_id"), py::arg("features") = std::vector<double>{})
      .def_readwrite("item_id", &CandidateItem::item_id)
      .def_readwrite("features", &CandidateItem::features);

  py::class_<RankedExample>(m, "RankedExample")
      .def(py::init([](std::string prompt_id, std::vector<CandidateItem> candidates, std::vector<int> relevance,
                       std::optional<std::vector<std::size_t>> target_perm) {
             RankedExample ex{std::move(prompt_id), std::move(candidates), std::move(relevance), {}};
             ex.target_perm = target_perm ? *target_perm : derive_target_perm(ex.relevance);
             validate(ex);
             return ex;
           }),
           py::arg("prompt_id"), py::arg("candidates"), py::arg("relevance"), py::arg("target_perm") = py::none())
      .def_readwrite("prompt_id", &RankedExample::prompt_id)
      .def_readwrite("candidates", &RankedExample::candidates)
      .def_readwrite("relevance", &RankedExample::relevance)
      .def_readwrite("target_perm", &RankedExample::target_perm)
      .def("ranked_relevance", &RankedExample::ranked_relevance)
      .def("__len__", &RankedExample::size)
      .def("to_jsonl", &to_jsonl_line);

  m.def("derive_target_perm", [](const std::vector<int>& r) { return derive_target_perm(r); });
  m.def("validate", &validate);

  py::enum_<PolicyKind>(m, "PolicyKind").value("tabular", PolicyKind::kTabular).value("linear", PolicyKind::kLinear);

  py::class_<Policy>(m, "Policy")
      .def_static("tabular", [](const Batch& b, double init) { return Policy::tabular(b, init); }, py::arg("examples"),
                  py::arg("init") = 0.0)
      .def_static("linear", &Policy::linear, py::arg("dim"), py::arg("init") = 0.0)
      .def_static("from_json", &Policy::from_json)
      .def_property_readonly("kind", &Policy::kind)
      .def_property("params", [](const Policy& p) { return std::vector<double>(p.params().begin(), p.params().end()); },
                    &set_params)
      .def("scores", &Policy::scores)
      .def("log_probs", &Policy::log_probs)
      .def("tabular_index", &Policy::tabular_index)
      .def("to_json", &Policy::to_json)
      .def("__eq__", &Policy::operator==);

  m.def("log_prob", &log_prob, py::arg("policy"), py::arg("example"), py::arg("j"));
  m.def("ingest_jsonl", &ingest_jsonl);
  m.def("write_jsonl", [](const std::filesystem::path& p, const Batch& b) { write_jsonl(p, b); });

  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("num_prompts", &SynthConfig::num_prompts)
      .def_readwrite("num_eval_prompts", &SynthConfig::num_eval_prompts)
      .def_readwrite("num_candidates", &SynthConfig::num_candidates)
      .def_property(
          "grade_counts",
          [](const SynthConfig& c) { return std::map<int, std::size_t>(c.grade_counts.begin(), c.grade_counts.end()); },
          [](SynthConfig& c, const std::map<int, std::size_t>& g) {
            c.grade_counts = std::map<int, std::size_t, std::greater<int>>(g.begin(), g.end());
          })
      .def_readwrite("feature_dim", &SynthConfig::feature_dim)
      .def_readwrite("feature_noise", &SynthConfig::feature_noise)
      .def_readwrite("separation", &SynthConfig::separation);

  py::class_<SynthDataset>(m, "SynthDataset")
      .def_readonly("train", &SynthDataset::train)
      .def_readonly("eval", &SynthDataset::eval)
      .def_readonly("planted_weights", &SynthDataset::planted_weights);

  m.def("synthesize", &synthesize, py::arg("config"), py::arg("seed"));
  m.def("grade_histogram", &grade_histogram);
  m.def("random_tabular_instance",
        [](std::uint64_t seed, std::size_t examples, std::size_t n, double scale) {
          auto inst = random_tabular_instance(seed, examples, n, scale);
          return py::make_tuple(inst.examples, inst.theta, inst.ref);
        },
        py::arg("seed"), py::arg("examples"), py::arg("n"), py::arg("scale") = 1.0);

  // Gains.
  py::class_<GainScheme>(m, "GainScheme")
      .def(py::init([](const std::string& name, std::size_t k, double lambda, bool mrr_all) {
             return GainScheme::parse(name, k, lambda, mrr_all);
           }),
           py::arg("name") = "ndcg", py::arg("k") = 1, py::arg("lambda_") = 0.5, py::arg("mrr_all_relevant") = false)
      .def_property_readonly("name", &GainScheme::name)
      .def_readonly("k", &GainScheme::k)
      .def_readonly("lambda_", &GainScheme::lambda);
  m.def("weight", py::overload_cast<const GainScheme&, const std::vector<int>&, std::size_t>(&weight),
        py::arg("scheme"), py::arg("ranked_relevance"), py::arg("rank"));

  // Objectives.
  py::class_<ExampleDiagnostics>(m, "ExampleDiagnostics")
      .def_readonly("prompt_id", &ExampleDiagnostics::prompt_id)
      .def_readonly("weights", &ExampleDiagnostics::weights)
      .def_readonly("z", &ExampleDiagnostics::z)
      .def_readonly("sigma_z", &ExampleDiagnostics::sigma_z)
      .def_readonly("rho", &ExampleDiagnostics::rho)
      .def_readonly("loss", &ExampleDiagnostics::loss)
      .def_readonly("degenerate", &ExampleDiagnostics::degenerate);
  py::class_<LossReport>(m, "LossReport")
      .def_readonly("loss", &LossReport::loss)
      .def_readonly("per_example", &LossReport::per_example)
      .def_readonly("policy_eval_count", &LossReport::policy_eval_count)
      .def_readonly("skipped", &LossReport::skipped)
      .def("to_json", &LossReport::to_json);

  m.def("margin_z", py::overload_cast<const Policy&, const Policy&, const RankedExample&, std::size_t, double>(&margin_z),
        py::arg("theta"), py::arg("ref"), py::arg("example"), py::arg("rank"), py::arg("beta") = 1.0);
  m.def("irpo_loss", [](const Policy& t, const Policy& r, const Batch& b, const GainScheme& g,
                        double beta) { return irpo_loss(t, r, b, g, beta); },
        py::arg("theta"), py::arg("ref"), py::arg("batch"), py::arg("scheme") = GainScheme{}, py::arg("beta") = 1.0);
  m.def("dpo_loss", [](const Policy& t, const Policy& r, const Batch& b, double beta) { return dpo_loss(t, r, b, beta); },
        py::arg("theta"), py::arg("ref"), py::arg("batch"), py::arg("beta") = 1.0);
  m.def("sdpo_loss", [](const Policy& t, const Policy& r, const Batch& b, double beta) { return sdpo_loss(t, r, b, beta); },
        py::arg("theta"), py::arg("ref"), py::arg("batch"), py::arg("beta") = 1.0);
  m.def("sft_loss", [](const Policy& t, const Batch& b) { return sft_loss(t, b); }, py::arg("theta"), py::arg("batch"));

  // Gradients.
  m.def("irpo_grad",
        [](const Policy& t, const Policy& r, const Batch& b, const GainScheme& g, double beta) {
          return irpo_grad(t, r, b, g, beta).values;
        },
        py::arg("theta"), py::arg("ref"), py::arg("batch"), py::arg("scheme") = GainScheme{}, py::arg("beta") = 1.0);
  m.def("dpo_grad", [](const Policy& t, const Policy& r, const Batch& b, double beta) { return dpo_grad(t, r, b, beta).values; },
        py::arg("theta"), py::arg("ref"), py::arg("batch"), py::arg("beta") = 1.0);
  m.def("sdpo_grad", [](const Policy& t, const Policy& r, const Batch& b, double beta) { return sdpo_grad(t, r, b, beta).values; },
        py::arg("theta"), py::arg("ref"), py::arg("batch"), py::arg("beta") = 1.0);
  m.def("sft_grad", [](const Policy& t, const Batch& b) { return sft_grad(t, b).values; }, py::arg("theta"),
        py::arg("batch"));
  m.def("importance_weights",
        py::overload_cast<const Policy&, const Policy&, const RankedExample&, std::size_t, double>(&importance_weights),
        py::arg("theta"), py::arg("ref"), py::arg("example"), py::arg("rank"), py::arg("beta") = 1.0);

  py::class_<EstimatorReport>(m, "EstimatorReport")
      .def_property_readonly("g_exact", [](const EstimatorReport& r) { return r.g_exact.values; })
      .def_property_readonly("g_sampled_mean", [](const EstimatorReport& r) { return r.g_sampled_mean.values; })
      .def_readonly("samples", &EstimatorReport::samples)
      .def_readonly("rank", &EstimatorReport::rank)
      .def_readonly("max_abs_dev", &EstimatorReport::max_abs_dev)
      .def_readonly("l2_dev", &EstimatorReport::l2_dev)
      .def_readonly("rho_max", &EstimatorReport::rho_max)
      .def_readonly("clip_L", &EstimatorReport::clip_L)
      .def_readonly("true_max_norm", &EstimatorReport::true_max_norm)
      .def_readonly("bound", &EstimatorReport::bound)
      .def("to_json", &EstimatorReport::to_json);
  m.def("sampled_grad", &sampled_grad, py::arg("theta"), py::arg("ref"), py::arg("example"), py::arg("rank"),
        py::arg("beta"), py::arg("m"), py::arg("seed"), py::arg("clip_L") = 10.0);

  py::class_<DeviationStudy>(m, "DeviationStudy")
      .def_readonly("repetitions", &DeviationStudy::repetitions)
      .def_readonly("samples", &DeviationStudy::samples)
      .def_readonly("mean_l2_dev", &DeviationStudy::mean_l2_dev)
      .def_readonly("max_l2_dev", &DeviationStudy::max_l2_dev)
      .def_readonly("bound", &DeviationStudy::bound)
      .def_readonly("true_max_norm", &DeviationStudy::true_max_norm);
  m.def("deviation_study", &deviation_study, py::arg("theta"), py::arg("ref"), py::arg("example"), py::arg("rank"),
        py::arg("beta"), py::arg("m"), py::arg("repetitions"), py::arg("seed"), py::arg("clip_L") = 10.0);
  m.def("finite_difference", &finite_difference, py::arg("f"), py::arg("at"), py::arg("step") = 1e-5);

  // Metrics.
  m.def("dcg", [](const std::vector<int>& y, std::size_t k) { return dcg(y, k); });
  m.def("ndcg_at_k", [](const std::vector<std::size_t>& p, const std::vector<int>& r, std::size_t k) {
    return ndcg_at_k(p, r, k);
  }, py::arg("predicted"), py::arg("relevance"), py::arg("k"));
  m.def("recall_at_k", [](const std::vector<std::size_t>& p, const std::vector<int>& r, std::size_t k) {
    return recall_at_k(p, r, k);
  }, py::arg("predicted"), py::arg("relevance"), py::arg("k"));
  m.def("evaluate",
        [](const Policy& p, const Batch& data, const std::vector<std::size_t>& ks) {
          const auto r = evaluate(p, data, ks);
          py::dict out;
          for (std::size_t k : r.ks) {
            out[py::str("ndcg@" + std::to_string(k))] = r.mean_ndcg.at(k);
            out[py::str("recall@" + std::to_string(k))] = r.mean_recall.at(k);
          }
          return out;
        },
        py::arg("policy"), py::arg("dataset"), py::arg("ks") = std::vector<std::size_t>{1, 5, 10});

  // Training.
  py::enum_<Method>(m, "Method")
      .value("irpo", Method::kIrpo)
      .value("dpo", Method::kDpo)
      .value("sdpo", Method::kSdpo)
      .value("sft", Method::kSft)
      .value("reinforce", Method::kReinforce)
      .value("iterative_irpo", Method::kIterativeIrpo);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("method", &TrainConfig::method)
      .def_readwrite("policy", &TrainConfig::policy)
      .def_readwrite("beta", &TrainConfig::beta)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("gain", &TrainConfig::gain)
      .def_readwrite("clip_L", &TrainConfig::clip_L)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("eval_every", &TrainConfig::eval_every)
      .def_readwrite("eval_ks", &TrainConfig::eval_ks)
      .def_readwrite("refresh_reference", &TrainConfig::refresh_reference)
      .def_readwrite("baseline_window", &TrainConfig::baseline_window);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("policy", &TrainResult::policy)
      .def_readonly("reference", &TrainResult::reference)
      .def_readonly("diverged", &TrainResult::diverged)
      .def_readonly("message", &TrainResult::message)
      .def_readonly("steps", &TrainResult::steps)
      .def_readonly("policy_eval_count", &TrainResult::policy_eval_count)
      .def_property_readonly("evals_per_example", &TrainResult::evals_per_example)
      .def_property_readonly("trace_csv", [](const TrainResult& r) { return r.trace.to_csv(); });

  m.def("train", [](const TrainConfig& c, const Batch& tr, const Batch& ev) { return train(c, tr, ev); },
        py::arg("config"), py::arg("train_set"), py::arg("eval_set"));
  m.def("sample_ranking_pl",
        py::overload_cast<const Policy&, const RankedExample&, std::uint64_t>(&sample_ranking_pl), py::arg("policy"),
        py::arg("example"), py::arg("seed"));
  m.def("pl_log_prob", [](const std::vector<double>& s, const std::vector<std::size_t>& r) { return pl_log_prob(s, r); });

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          const int code = run_cli(args, out, err);
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
