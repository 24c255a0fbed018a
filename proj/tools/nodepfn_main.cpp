// nodepfn command-line interface: prior generation, pre-training, inference,
// baselines, the homophily sweep and complexity measurements behind one
// binary. Exit codes: 0 success, 2 validation failure, 3 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nodepfn/checkpoint.hpp"
#include "nodepfn/config_json.hpp"
#include "nodepfn/dataset_io.hpp"
#include "nodepfn/sweep.hpp"

namespace {

using namespace nodepfn;

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  json j;
  in >> j;
  return j;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  atomic_write_file(path, std::vector<unsigned char>(text.begin(), text.end()));
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

// ---- generate-priors --------------------------------------------------------

struct GeneratePriorsArgs {
  std::string config_path, out_dir, stats_path, prefix = "task";
  int count = 100;
  uint64_t seed = 0;
};

int run_generate_priors(const GeneratePriorsArgs& args, const json& file_cfg) {
  PriorConfig prior;
  prior_from_json(file_cfg.value("prior", json::object()), prior);
  prior.validate();
  if (args.count < 1) throw ValidationError("generate-priors: --count must be >= 1");
  std::filesystem::create_directories(args.out_dir);

  const json effective{{"command", "generate-priors"},
                       {"prior", prior_to_json(prior)},
                       {"count", args.count},
                       {"seed", args.seed}};
  const std::string provenance = effective.dump();

  std::vector<double> edge_counts, class_counts, homophilies;
  for (int i = 0; i < args.count; ++i) {
    const Task task = task_for_seed(prior, derive_seed(args.seed, "priors", {static_cast<uint64_t>(i)}));
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%06d.npfd", args.prefix.c_str(), i);
    save_dataset(DatasetFile::from_task(task, provenance),
                 (std::filesystem::path(args.out_dir) / name).string());
    edge_counts.push_back(static_cast<double>(task.graph.edges.size()));
    class_counts.push_back(task.graph.n_classes);
    if (!task.graph.edges.empty()) homophilies.push_back(edge_homophily(task.graph));
  }

  auto mean_of = [](const std::vector<double>& v) {
    double acc = 0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
  };
  auto histogram = [](const std::vector<double>& v, double lo, double hi, int bins) {
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    for (double x : v) {
      int b = static_cast<int>((x - lo) / (hi - lo) * bins);
      b = std::min(std::max(b, 0), bins - 1);
      ++counts[b];
    }
    return counts;
  };

  std::ostringstream report;
  report << "# generate-priors statistics\n# config: " << provenance << "\n";
  report << "tasks\t" << args.count << "\n";
  report << "mean_edges\t" << format_double(mean_of(edge_counts)) << "\n";
  report << "mean_classes\t" << format_double(mean_of(class_counts)) << "\n";
  report << "mean_edge_homophily\t" << format_double(mean_of(homophilies)) << "\n";
  const double max_edges = edge_counts.empty() ? 1 : *std::max_element(edge_counts.begin(), edge_counts.end());
  report << "histogram\tmetric\tbin_lo\tbin_hi\tcount\n";
  const auto edge_hist = histogram(edge_counts, 0, max_edges + 1, 10);
  for (int b = 0; b < 10; ++b)
    report << "histogram\tedges\t" << format_double(b * (max_edges + 1) / 10) << '\t'
           << format_double((b + 1) * (max_edges + 1) / 10) << '\t' << edge_hist[b] << "\n";
  const auto class_hist = histogram(class_counts, 1, prior.max_classes + 1, prior.max_classes);
  for (int b = 0; b < prior.max_classes; ++b)
    report << "histogram\tclasses\t" << b + 1 << '\t' << b + 2 << '\t' << class_hist[b] << "\n";
  const auto hom_hist = histogram(homophilies, 0, 1, 10);
  for (int b = 0; b < 10; ++b)
    report << "histogram\tedge_homophily\t" << format_double(b / 10.0) << '\t'
           << format_double((b + 1) / 10.0) << '\t' << hom_hist[b] << "\n";

  if (args.stats_path.empty())
    std::cout << report.str();
  else
    write_text_atomic(args.stats_path, report.str());
  return 0;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config_path, out_path, metrics_path, resume_path, prior_kind = "scm";
  uint64_t seed = 0;
  bool seed_given = false;
};

int run_train(const TrainArgs& args, const json& file_cfg) {
  PriorConfig prior;
  prior_from_json(file_cfg.value("prior", json::object()), prior);
  ModelConfig model;
  model_from_json(file_cfg.value("model", json::object()), model);
  TrainConfig train_cfg;
  train_from_json(file_cfg.value("train", json::object()), train_cfg);
  if (args.seed_given) train_cfg.seed = args.seed;

  HypothesisSet oracle;
  TaskSampler sampler;
  if (args.prior_kind == "scm") {
    prior.validate();
    sampler = prior_task_sampler(prior);
  } else if (args.prior_kind == "oracle-csbm") {
    if (!file_cfg.contains("hypotheses"))
      throw ValidationError("train: --prior-kind oracle-csbm needs a 'hypotheses' config section");
    oracle = hypotheses_from_json(file_cfg.at("hypotheses"));
    const int n_nodes = file_cfg.value("oracle_n_nodes", 16);
    const double lo = file_cfg.value("oracle_split_lo", 0.3);
    const double hi = file_cfg.value("oracle_split_hi", 0.7);
    sampler = [oracle, n_nodes, lo, hi](uint64_t seed) {
      Rng rng(seed);
      return sample_hypothesis_task(oracle, n_nodes, lo, hi, rng);
    };
  } else {
    throw ValidationError("train: unknown --prior-kind " + args.prior_kind);
  }

  int start_epoch = 0, start_step = 0;
  std::optional<ModelParams> resume_params;
  std::optional<OptimizerState> resume_opt;
  if (!args.resume_path.empty()) {
    Checkpoint ckpt = load_checkpoint(args.resume_path);
    model = ckpt.params.config;
    train_cfg.seed = ckpt.train_seed;
    start_epoch = ckpt.next_epoch;
    start_step = ckpt.next_step;
    resume_params = std::move(ckpt.params);
    resume_opt = std::move(ckpt.optimizer);
    if (!resume_opt) throw ValidationError("train: checkpoint lacks optimizer state; cannot resume");
    std::cerr << "resuming at epoch " << start_epoch << " step " << start_step << "\n";
  }

  const json effective{{"command", "train"},      {"prior", prior_to_json(prior)},
                       {"model", model_to_json(model)}, {"train", train_to_json(train_cfg)},
                       {"prior_kind", args.prior_kind}};
  const std::string provenance = effective.dump();

  std::ofstream metrics;
  if (!args.metrics_path.empty()) {
    metrics.open(args.metrics_path, args.resume_path.empty() ? std::ios::trunc : std::ios::app);
    if (!metrics) throw ValidationError("train: cannot open metrics log " + args.metrics_path);
    metrics << json{{"config", effective}}.dump() << "\n";
  }

  const auto started = std::chrono::steady_clock::now();
  TrainCallbacks callbacks;
  callbacks.on_step = [&](int step, double loss, double lr) {
    if (metrics.is_open()) {
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
      metrics << "{\"step\":" << step << ",\"loss\":" << format_double(loss) << ",\"lr\":"
              << format_double(lr) << ",\"wallclock_ms\":" << format_double(ms) << "}\n";
      if (step % 50 == 0) metrics.flush();
    }
    if (step % 100 == 0) std::cerr << "step " << step << " loss " << loss << " lr " << lr << "\n";
  };
  callbacks.on_checkpoint = [&](const ModelParams& params, const OptimizerState& opt, int next_epoch,
                                int next_step, const std::string& tag) {
    Checkpoint ckpt;
    ckpt.params = params;
    ckpt.optimizer = opt;
    ckpt.next_epoch = next_epoch;
    ckpt.next_step = next_step;
    ckpt.train_seed = train_cfg.seed;
    ckpt.provenance = provenance;
    const std::string path =
        tag == "final" ? args.out_path : args.out_path + ".step" + tag;
    save_checkpoint(ckpt, path);
    std::cerr << "checkpoint written: " << path << "\n";
  };

  train(sampler, model, train_cfg, callbacks, std::move(resume_params), std::move(resume_opt),
        start_epoch, start_step);
  return 0;
}

// ---- predict / eval / baseline ------------------------------------------------

struct PredictArgs {
  std::string config_path, checkpoint_path, dataset_path, out_path;
  int components = -1;
  int smoothing = -1;
  int ensemble = -1;
  uint64_t seed = 0;
  bool seed_given = false;
};

InferenceConfig build_inference_config(const json& file_cfg, int components, int smoothing,
                                       int ensemble, bool seed_given, uint64_t seed) {
  InferenceConfig icfg;
  inference_from_json(file_cfg.value("inference", json::object()), icfg);
  if (components >= 0) icfg.n_components = components;
  if (smoothing >= 0) icfg.smoothing_steps = smoothing;
  if (ensemble >= 0) icfg.ensemble_size = ensemble;
  if (seed_given) icfg.seed = seed;
  return icfg;
}

int run_predict(const PredictArgs& args, const json& file_cfg) {
  const InferenceConfig icfg = build_inference_config(file_cfg, args.components, args.smoothing,
                                                      args.ensemble, args.seed_given, args.seed);
  const Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
  DatasetFile data = load_dataset(args.dataset_path);

  std::vector<int> train_labels;
  for (int id : data.train_ids) train_labels.push_back(data.graph.y[id]);
  const PpdMatrix ppd = predict(data.graph, data.train_ids, train_labels, ckpt.params, icfg);

  const json effective{{"command", "predict"},
                       {"inference", inference_to_json(icfg)},
                       {"checkpoint", args.checkpoint_path},
                       {"dataset", args.dataset_path}};
  data.prediction = ppd;
  data.provenance = effective.dump();
  save_dataset(data, args.out_path);
  std::cout << effective.dump() << "\n";
  return 0;
}

struct EvalArgs {
  std::string config_path, checkpoint_path, dataset_path, out_path;
  std::vector<uint64_t> seeds = {1, 2, 3};
  int components = -1, smoothing = -1, ensemble = -1;
};

int run_eval(const EvalArgs& args, const json& file_cfg) {
  const InferenceConfig icfg =
      build_inference_config(file_cfg, args.components, args.smoothing, args.ensemble, false, 0);
  const Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
  const DatasetFile data = load_dataset(args.dataset_path);
  const EvalResult result = evaluate(data.to_task(), ckpt.params, icfg, args.seeds);
  json record{{"command", "eval"},
              {"dataset", args.dataset_path},
              {"inference", inference_to_json(icfg)},
              {"seeds", args.seeds},
              {"mean_accuracy", result.mean_accuracy},
              {"std_accuracy", result.std_accuracy},
              {"per_seed", result.per_seed}};
  const std::string text = record.dump() + "\n";
  std::cout << text;
  if (!args.out_path.empty()) write_text_atomic(args.out_path, text);
  return 0;
}

struct BaselineArgs {
  std::string config_path, method = "labelprop", dataset_path, out_path;
  double alpha = 0.9, ridge = 1e-4;
  int iters = 100, filter_k = 2;
  bool exact_pinv = false;
};

int run_baseline(const BaselineArgs& args, const json& file_cfg) {
  DatasetFile data = load_dataset(args.dataset_path);
  std::vector<int> train_labels;
  for (int id : data.train_ids) train_labels.push_back(data.graph.y[id]);

  PpdMatrix ppd;
  if (args.method == "labelprop") {
    ppd = label_propagation(data.graph, data.train_ids, train_labels, args.alpha, args.iters);
  } else if (args.method == "exact") {
    if (!file_cfg.contains("hypotheses"))
      throw ValidationError("baseline: method 'exact' needs a 'hypotheses' config section");
    ppd = exact_ppd(data.to_task(), hypotheses_from_json(file_cfg.at("hypotheses")));
  } else if (args.method == "linear" || args.method == "sgc" || args.method == "hgc") {
    FilterMatrix filter;
    filter.kind = args.method == "linear"  ? FilterKind::identity
                  : args.method == "sgc" ? FilterKind::low_pass
                                         : FilterKind::high_pass;
    filter.k = args.filter_k;
    const std::vector<int> pred = closed_form_classify(data.graph, data.train_ids, train_labels,
                                                       filter, args.ridge, args.exact_pinv);
    const LabelCanonicalization lc = canonicalize_labels(train_labels);
    ppd.probs = Tensor::zeros({static_cast<int>(pred.size()), lc.n_classes});
    for (std::size_t i = 0; i < pred.size(); ++i)
      ppd.probs(static_cast<int>(i), lc.canonical_of[pred[i]]) = real(1);
    ppd.class_labels = lc.original_of;
  } else {
    throw ValidationError("baseline: unknown method " + args.method);
  }

  const json effective{{"command", "baseline"}, {"method", args.method},
                       {"alpha", args.alpha},   {"iters", args.iters},
                       {"ridge", args.ridge},   {"filter_k", args.filter_k},
                       {"dataset", args.dataset_path}};
  data.prediction = ppd;
  data.provenance = effective.dump();
  save_dataset(data, args.out_path);
  std::cout << effective.dump() << "\n";
  return 0;
}

// ---- sweep-homophily / measure-scaling / inspect-checkpoint --------------------

struct SweepArgs {
  std::string config_path, checkpoint_path, out_path, per_graph_path;
  std::vector<double> levels;
  std::vector<std::string> methods;
  std::vector<uint64_t> seeds;
  int graphs_per_level = -1;
  int ensemble = -1;
};

int run_sweep(const SweepArgs& args, const json& file_cfg) {
  SweepConfig cfg;
  const json sj = file_cfg.value("sweep", json::object());
  if (sj.contains("h_levels")) cfg.h_levels = sj.at("h_levels").get<std::vector<double>>();
  merge_field(sj, "graphs_per_level", cfg.graphs_per_level);
  if (sj.contains("seeds")) cfg.seeds = sj.at("seeds").get<std::vector<uint64_t>>();
  merge_field(sj, "n_nodes", cfg.n_nodes);
  merge_field(sj, "max_classes", cfg.max_classes);
  merge_field(sj, "feature_dim_range", cfg.feature_dim_range);
  merge_field(sj, "p_in", cfg.p_in);
  merge_field(sj, "split_fraction", cfg.split_fraction);
  inference_from_json(file_cfg.value("inference", json::object()), cfg.inference);
  if (sj.contains("methods")) {
    cfg.methods.clear();
    for (const auto& name : sj.at("methods")) cfg.methods.push_back(method_from_name(name));
  }
  if (!args.levels.empty()) cfg.h_levels = args.levels;
  if (args.graphs_per_level > 0) cfg.graphs_per_level = args.graphs_per_level;
  if (!args.seeds.empty()) cfg.seeds = args.seeds;
  if (args.ensemble > 0) cfg.inference.ensemble_size = args.ensemble;
  if (!args.methods.empty()) {
    cfg.methods.clear();
    for (const std::string& name : args.methods) cfg.methods.push_back(method_from_name(name));
  }

  const bool needs_model =
      std::find(cfg.methods.begin(), cfg.methods.end(), SweepMethod::nodepfn) != cfg.methods.end();
  std::optional<Checkpoint> ckpt;
  if (needs_model) {
    if (args.checkpoint_path.empty())
      throw ValidationError("sweep-homophily: nodepfn requested but --checkpoint missing");
    ckpt = load_checkpoint(args.checkpoint_path);
  }

  const SweepReport report = sweep_homophily(ckpt ? &ckpt->params : nullptr, cfg);

  json methods_json = json::array();
  for (SweepMethod m : cfg.methods) methods_json.push_back(method_name(m));
  const json effective{{"command", "sweep-homophily"},
                       {"h_levels", cfg.h_levels},
                       {"graphs_per_level", cfg.graphs_per_level},
                       {"seeds", cfg.seeds},
                       {"methods", methods_json},
                       {"n_nodes", cfg.n_nodes},
                       {"p_in", cfg.p_in},
                       {"inference", inference_to_json(cfg.inference)}};
  std::ostringstream text;
  text << "# sweep-homophily report\n# config: " << effective.dump() << "\n" << report.to_table();
  if (args.out_path.empty())
    std::cout << text.str();
  else
    write_text_atomic(args.out_path, text.str());
  const std::string log_path =
      args.per_graph_path.empty()
          ? (args.out_path.empty() ? std::string() : args.out_path + ".per-graph.jsonl")
          : args.per_graph_path;
  if (!log_path.empty()) write_text_atomic(log_path, report.per_graph_log());
  return 0;
}

struct ScalingArgs {
  std::string out_path;
  std::vector<int> attention_sizes;
  std::vector<int> mpnn_edges;
  int mpnn_n = -1, repeats = -1, d_embed = -1, n_layers = -1;
};

int run_scaling(const ScalingArgs& args) {
  ScalingConfig cfg;
  if (!args.attention_sizes.empty()) cfg.attention_sizes = args.attention_sizes;
  if (!args.mpnn_edges.empty()) cfg.mpnn_edges = args.mpnn_edges;
  if (args.mpnn_n > 0) cfg.mpnn_n = args.mpnn_n;
  if (args.repeats > 0) cfg.repeats = args.repeats;
  if (args.d_embed > 0) cfg.d_embed = args.d_embed;
  if (args.n_layers > 0) cfg.n_layers = args.n_layers;
  const ScalingTable table = measure_scaling(cfg);
  const json effective{{"command", "measure-scaling"},
                       {"attention_sizes", cfg.attention_sizes},
                       {"mpnn_edges", cfg.mpnn_edges},
                       {"mpnn_n", cfg.mpnn_n},
                       {"repeats", cfg.repeats}};
  std::ostringstream text;
  text << "# measure-scaling report\n# config: " << effective.dump() << "\n" << table.to_table();
  if (args.out_path.empty())
    std::cout << text.str();
  else
    write_text_atomic(args.out_path, text.str());
  return 0;
}

int run_inspect(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  json tensors = json::array();
  std::size_t total = 0;
  ckpt.params.for_each([&](const std::string& name, const Tensor& t) {
    tensors.push_back(json{{"name", name}, {"shape", t.shape()}, {"size", t.size()}});
    total += t.size();
  });
  json out{{"model", model_to_json(ckpt.params.config)},
           {"parameter_count", total},
           {"has_optimizer_state", ckpt.optimizer.has_value()},
           {"next_epoch", ckpt.next_epoch},
           {"next_step", ckpt.next_step},
           {"train_seed", ckpt.train_seed},
           {"tensors", tensors}};
  if (!ckpt.provenance.empty()) {
    try {
      out["provenance"] = json::parse(ckpt.provenance);
    } catch (...) {
      out["provenance"] = ckpt.provenance;
    }
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nodepfn: prior-fitted node classification at desk scale"};
  app.require_subcommand(1);

  GeneratePriorsArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("generate-priors", "Sample synthetic tasks to dataset files");
  gen_cmd->add_option("--config", gen.config_path, "JSON config file (section: prior)");
  gen_cmd->add_option("--count", gen.count, "Number of tasks");
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--prefix", gen.prefix, "File name prefix");
  gen_cmd->add_option("--seed", gen.seed, "Root seed");
  gen_cmd->add_option("--stats", gen.stats_path, "Write the statistics report here instead of stdout");

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Pre-train on streamed synthetic tasks");
  train_cmd->add_option("--config", train_args.config_path, "JSON config (sections: prior, model, train)");
  train_cmd->add_option("--out", train_args.out_path, "Checkpoint output path")->required();
  train_cmd->add_option("--metrics", train_args.metrics_path, "JSONL metrics log");
  train_cmd->add_option("--resume", train_args.resume_path, "Resume from this checkpoint");
  train_cmd->add_option("--prior-kind", train_args.prior_kind, "scm | oracle-csbm");
  auto* seed_opt = train_cmd->add_option("--seed", train_args.seed, "Training seed");

  PredictArgs pred;
  CLI::App* pred_cmd = app.add_subcommand("predict", "Training-free prediction on a dataset file");
  pred_cmd->add_option("--config", pred.config_path, "JSON config (section: inference)");
  pred_cmd->add_option("--checkpoint", pred.checkpoint_path, "Model checkpoint")->required();
  pred_cmd->add_option("--dataset", pred.dataset_path, "Input dataset file")->required();
  pred_cmd->add_option("--components", pred.components, "Truncated-SVD target width");
  pred_cmd->add_option("--smoothing-steps", pred.smoothing, "Feature smoothing rounds");
  pred_cmd->add_option("--ensemble", pred.ensemble, "Ensemble size");
  auto* pred_seed = pred_cmd->add_option("--seed", pred.seed, "Ensemble seed");
  pred_cmd->add_option("--out", pred.out_path, "Output dataset file with prediction block")->required();

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Accuracy of a checkpoint on a labeled dataset");
  eval_cmd->add_option("--config", eval_args.config_path, "JSON config (section: inference)");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint_path, "Model checkpoint")->required();
  eval_cmd->add_option("--dataset", eval_args.dataset_path, "Labeled dataset file")->required();
  eval_cmd->add_option("--seeds", eval_args.seeds, "Ensemble seeds (accuracy mean/std over these)");
  eval_cmd->add_option("--components", eval_args.components, "Truncated-SVD target width");
  eval_cmd->add_option("--smoothing-steps", eval_args.smoothing, "Feature smoothing rounds");
  eval_cmd->add_option("--ensemble", eval_args.ensemble, "Ensemble size");
  eval_cmd->add_option("--out", eval_args.out_path, "Also write the metrics record here");

  BaselineArgs base;
  CLI::App* base_cmd = app.add_subcommand("baseline", "Training-free baselines and the exact oracle");
  base_cmd->add_option("--config", base.config_path, "JSON config (section: hypotheses, for 'exact')");
  base_cmd->add_option("--method", base.method, "labelprop | linear | sgc | hgc | exact")->required();
  base_cmd->add_option("--dataset", base.dataset_path, "Input dataset file")->required();
  base_cmd->add_option("--alpha", base.alpha, "Label propagation mixing");
  base_cmd->add_option("--iters", base.iters, "Label propagation iterations");
  base_cmd->add_option("--ridge", base.ridge, "Closed-form ridge");
  base_cmd->add_option("--filter-k", base.filter_k, "Low-pass filter depth");
  base_cmd->add_flag("--exact-pinv", base.exact_pinv, "ridge=0 via exact pseudo-inverse");
  base_cmd->add_option("--out", base.out_path, "Output dataset file with prediction block")->required();

  SweepArgs sweep_args;
  CLI::App* sweep_cmd = app.add_subcommand("sweep-homophily", "Accuracy across controlled homophily levels");
  sweep_cmd->add_option("--config", sweep_args.config_path, "JSON config (sections: sweep, inference)");
  sweep_cmd->add_option("--checkpoint", sweep_args.checkpoint_path, "Checkpoint (for method nodepfn)");
  sweep_cmd->add_option("--levels", sweep_args.levels, "Homophily levels");
  sweep_cmd->add_option("--methods", sweep_args.methods, "nodepfn labelprop linear sgc hgc majority");
  sweep_cmd->add_option("--seeds", sweep_args.seeds, "Evaluation seeds (>= 3 for the std)");
  sweep_cmd->add_option("--graphs-per-level", sweep_args.graphs_per_level, "Graphs per level");
  sweep_cmd->add_option("--ensemble", sweep_args.ensemble, "nodepfn ensemble size");
  sweep_cmd->add_option("--out", sweep_args.out_path, "Report path (stdout if omitted)");
  sweep_cmd->add_option("--per-graph-log", sweep_args.per_graph_path, "Per-graph JSONL path");

  ScalingArgs scaling;
  CLI::App* scale_cmd = app.add_subcommand("measure-scaling", "Branch wall-clock vs N and E");
  scale_cmd->add_option("--attention-sizes", scaling.attention_sizes, "Node counts (edgeless)");
  scale_cmd->add_option("--mpnn-edges", scaling.mpnn_edges, "Edge targets at fixed N");
  scale_cmd->add_option("--mpnn-n", scaling.mpnn_n, "Node count for the edge sweep");
  scale_cmd->add_option("--repeats", scaling.repeats, "Timing repeats (median)");
  scale_cmd->add_option("--d-embed", scaling.d_embed, "Embedding width");
  scale_cmd->add_option("--n-layers", scaling.n_layers, "Layer count");
  scale_cmd->add_option("--out", scaling.out_path, "Table path (stdout if omitted)");

  std::string inspect_path;
  CLI::App* inspect_cmd = app.add_subcommand("inspect-checkpoint", "Describe a checkpoint file");
  inspect_cmd->add_option("--checkpoint", inspect_path, "Checkpoint path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) return run_generate_priors(gen, load_config_file(gen.config_path));
    if (*train_cmd) {
      train_args.seed_given = seed_opt->count() > 0;
      return run_train(train_args, load_config_file(train_args.config_path));
    }
    if (*pred_cmd) {
      pred.seed_given = pred_seed->count() > 0;
      return run_predict(pred, load_config_file(pred.config_path));
    }
    if (*eval_cmd) return run_eval(eval_args, load_config_file(eval_args.config_path));
    if (*base_cmd) return run_baseline(base, load_config_file(base.config_path));
    if (*sweep_cmd) return run_sweep(sweep_args, load_config_file(sweep_args.config_path));
    if (*scale_cmd) return run_scaling(scaling);
    if (*inspect_cmd) return run_inspect(inspect_path);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
