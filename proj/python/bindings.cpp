// Python bindings for the main operations: prior sampling, training,
// training-free prediction, baselines and the exact oracle, dataset files.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nodepfn/checkpoint.hpp"
#include "nodepfn/config_json.hpp"
#include "nodepfn/dataset_io.hpp"
#include "nodepfn/sweep.hpp"

namespace py = pybind11;
using namespace nodepfn;

namespace {

json parse_json(const std::string& text) {
  return text.empty() ? json::object() : json::parse(text);
}

py::array_t<double> tensor_to_numpy(const Tensor& t) {
  py::array_t<double> out({t.rows(), t.cols()});
  auto buf = out.mutable_unchecked<2>();
  for (int i = 0; i < t.rows(); ++i)
    for (int j = 0; j < t.cols(); ++j) buf(i, j) = static_cast<double>(t(i, j));
  return out;
}

Tensor numpy_to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 2) throw ValidationError("expected a 2-D float array");
  Tensor t = Tensor::zeros({static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1))});
  auto buf = arr.unchecked<2>();
  for (py::ssize_t i = 0; i < arr.shape(0); ++i)
    for (py::ssize_t j = 0; j < arr.shape(1); ++j)
      t(static_cast<int>(i), static_cast<int>(j)) = static_cast<real>(buf(i, j));
  return t;
}

EdgeList numpy_to_edges(const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& arr,
                        int n) {
  if (arr.size() == 0) return {};
  if (arr.ndim() != 2 || arr.shape(1) != 2) throw ValidationError("edges must be an (m, 2) int array");
  EdgeList edges;
  auto buf = arr.unchecked<2>();
  for (py::ssize_t i = 0; i < arr.shape(0); ++i)
    edges.emplace_back(static_cast<int>(buf(i, 0)), static_cast<int>(buf(i, 1)));
  canonicalize_edges(edges, n);
  return edges;
}

py::array_t<int64_t> edges_to_numpy(const EdgeList& edges) {
  py::array_t<int64_t> out({static_cast<py::ssize_t>(edges.size()), py::ssize_t(2)});
  auto buf = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    buf(static_cast<py::ssize_t>(i), 0) = edges[i].first;
    buf(static_cast<py::ssize_t>(i), 1) = edges[i].second;
  }
  return out;
}

py::dict task_to_dict(const Task& task) {
  py::dict out;
  out["x"] = tensor_to_numpy(task.graph.x);
  out["y"] = py::cast(task.graph.y);
  out["edges"] = edges_to_numpy(task.graph.edges);
  out["n_classes"] = task.graph.n_classes;
  out["train_ids"] = py::cast(task.train_ids);
  out["test_ids"] = py::cast(task.test_ids);
  return out;
}

Graph build_graph(const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
                  const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& edges,
                  const std::vector<int>& y, int n_classes) {
  Graph g;
  g.x = numpy_to_tensor(x);
  g.n = g.x.rows();
  g.edges = numpy_to_edges(edges, g.n);
  g.y = y.empty() ? std::vector<int>(static_cast<std::size_t>(g.n), -1) : y;
  g.n_classes = n_classes;
  return g;
}

py::dict ppd_to_dict(const PpdMatrix& ppd) {
  py::dict out;
  out["probs"] = tensor_to_numpy(ppd.probs);
  out["class_labels"] = py::cast(ppd.class_labels);
  out["argmax"] = py::cast(ppd.argmax_labels());
  return out;
}

}  // namespace

PYBIND11_MODULE(_nodepfn, m) {
  m.doc() = "Prior-fitted node classification: priors, training, inference, baselines";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def(
      "sample_task",
      [](const std::string& prior_json, uint64_t seed) {
        PriorConfig cfg;
        prior_from_json(parse_json(prior_json), cfg);
        return task_to_dict(task_for_seed(cfg, seed));
      },
      py::arg("prior_json") = "", py::arg("seed") = 0,
      "Sample one synthetic task; deterministic in (config, seed).");

  m.def(
      "edge_homophily",
      [](const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& edges,
         const std::vector<int>& y) {
        Graph g;
        g.n = static_cast<int>(y.size());
        g.y = y;
        g.n_classes = *std::max_element(y.begin(), y.end()) + 1;
        g.edges = numpy_to_edges(edges, g.n);
        return edge_homophily(g);
      },
      py::arg("edges"), py::arg("y"));

  m.def(
      "train",
      [](const std::string& prior_json, const std::string& model_json, const std::string& train_json,
         const std::string& checkpoint_out) {
        PriorConfig prior;
        prior_from_json(parse_json(prior_json), prior);
        ModelConfig model;
        model_from_json(parse_json(model_json), model);
        TrainConfig cfg;
        train_from_json(parse_json(train_json), cfg);
        TrainCallbacks callbacks;
        if (!checkpoint_out.empty()) {
          callbacks.on_checkpoint = [&](const ModelParams& params, const OptimizerState& opt,
                                        int next_epoch, int next_step, const std::string& tag) {
            if (tag != "final") return;
            Checkpoint ckpt;
            ckpt.params = params;
            ckpt.optimizer = opt;
            ckpt.next_epoch = next_epoch;
            ckpt.next_step = next_step;
            ckpt.train_seed = cfg.seed;
            save_checkpoint(ckpt, checkpoint_out);
          };
        }
        const TrainResult result = train(prior, model, cfg, callbacks);
        return result.step_losses;
      },
      py::arg("prior_json") = "", py::arg("model_json") = "", py::arg("train_json") = "",
      py::arg("checkpoint_out") = "",
      "Pre-train on streamed synthetic tasks; returns per-step losses.");

  m.def(
      "predict",
      [](const std::string& checkpoint_path,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& edges,
         const std::vector<int>& train_ids, const std::vector<int>& train_labels,
         const std::string& inference_json) {
        const Checkpoint ckpt = load_checkpoint(checkpoint_path);
        InferenceConfig icfg;
        inference_from_json(parse_json(inference_json), icfg);
        const Graph g = build_graph(x, edges, {}, 0);
        return ppd_to_dict(predict(g, train_ids, train_labels, ckpt.params, icfg));
      },
      py::arg("checkpoint_path"), py::arg("x"), py::arg("edges"), py::arg("train_ids"),
      py::arg("train_labels"), py::arg("inference_json") = "",
      "Training-free PPD for every node outside train_ids (ascending order).");

  m.def(
      "label_propagation",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& edges,
         const std::vector<int>& train_ids, const std::vector<int>& train_labels, double alpha,
         int iters) {
        const Graph g = build_graph(x, edges, {}, 0);
        return ppd_to_dict(label_propagation(g, train_ids, train_labels, alpha, iters));
      },
      py::arg("x"), py::arg("edges"), py::arg("train_ids"), py::arg("train_labels"),
      py::arg("alpha") = 0.9, py::arg("iters") = 100);

  m.def(
      "closed_form_classify",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& edges,
         const std::vector<int>& train_ids, const std::vector<int>& train_labels,
         const std::string& filter, double ridge) {
        const Graph g = build_graph(x, edges, {}, 0);
        FilterMatrix fm;
        fm.kind = filter == "linear"  ? FilterKind::identity
                  : filter == "sgc" ? FilterKind::low_pass
                  : filter == "hgc" ? FilterKind::high_pass
                                    : throw ValidationError("filter must be linear|sgc|hgc");
        return closed_form_classify(g, train_ids, train_labels, fm, ridge);
      },
      py::arg("x"), py::arg("edges"), py::arg("train_ids"), py::arg("train_labels"),
      py::arg("filter") = "linear", py::arg("ridge") = 1e-4);

  m.def(
      "exact_ppd",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& edges,
         const std::vector<int>& y, const std::vector<int>& train_ids,
         const std::vector<int>& test_ids, const std::string& hypotheses_json) {
        const HypothesisSet hyps = hypotheses_from_json(json::parse(hypotheses_json));
        Task task;
        task.graph = build_graph(x, edges, y, hyps.hypotheses.front().n_classes());
        task.train_ids = train_ids;
        task.test_ids = test_ids;
        return ppd_to_dict(exact_ppd(task, hyps));
      },
      py::arg("x"), py::arg("edges"), py::arg("y"), py::arg("train_ids"), py::arg("test_ids"),
      py::arg("hypotheses_json"),
      "Exact transductive posterior predictive over an enumerable hypothesis set.");

  m.def(
      "write_dataset",
      [](const std::string& path,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
         const std::vector<int>& y,
         const py::array_t<int64_t, py::array::c_style | py::array::forcecast>& edges,
         const std::vector<int>& train_ids, const std::vector<int>& test_ids, int n_classes) {
        DatasetFile data;
        data.graph = build_graph(x, edges, y, n_classes);
        data.train_ids = train_ids;
        data.test_ids = test_ids;
        data.to_task().validate();
        save_dataset(data, path);
      },
      py::arg("path"), py::arg("x"), py::arg("y"), py::arg("edges"), py::arg("train_ids"),
      py::arg("test_ids"), py::arg("n_classes"));

  m.def(
      "read_dataset",
      [](const std::string& path) {
        const DatasetFile data = load_dataset(path);
        py::dict out = task_to_dict(data.to_task());
        if (data.prediction) out["prediction"] = ppd_to_dict(*data.prediction);
        out["provenance"] = data.provenance;
        return out;
      },
      py::arg("path"));

  m.def(
      "inspect_checkpoint",
      [](const std::string& path) {
        const Checkpoint ckpt = load_checkpoint(path);
        py::dict out;
        out["model"] = model_to_json(ckpt.params.config).dump();
        out["parameter_count"] = ckpt.params.parameter_count();
        out["next_epoch"] = ckpt.next_epoch;
        out["next_step"] = ckpt.next_step;
        return out;
      },
      py::arg("path"));
}
