#include "nodepfn/sweep.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace nodepfn {

std::string method_name(SweepMethod m) {
  switch (m) {
    case SweepMethod::nodepfn: return "nodepfn";
    case SweepMethod::labelprop: return "labelprop";
    case SweepMethod::linear: return "linear";
    case SweepMethod::sgc: return "sgc";
    case SweepMethod::hgc: return "hgc";
    case SweepMethod::majority: return "majority";
  }
  return "?";
}

SweepMethod method_from_name(const std::string& name) {
  for (SweepMethod m : {SweepMethod::nodepfn, SweepMethod::labelprop, SweepMethod::linear,
                        SweepMethod::sgc, SweepMethod::hgc, SweepMethod::majority})
    if (method_name(m) == name) return m;
  throw ValidationError("unknown sweep method: " + name);
}

void SweepConfig::validate() const {
  if (h_levels.empty()) throw ValidationError("sweep config: no homophily levels");
  for (double h : h_levels)
    if (!(h > 0 && h <= 1)) throw ValidationError("sweep config: h levels must be in (0,1]");
  if (graphs_per_level < 1) throw ValidationError("sweep config: graphs_per_level must be >= 1");
  if (seeds.size() < 1) throw ValidationError("sweep config: at least one seed required");
  if (methods.empty()) throw ValidationError("sweep config: no methods selected");
  if (n_nodes < 4) throw ValidationError("sweep config: n_nodes too small");
  if (!(split_fraction > 0 && split_fraction < 1))
    throw ValidationError("sweep config: split_fraction must be in (0,1)");
}

Task controlled_homophily_task(const SweepConfig& cfg, double h, uint64_t seed) {
  PriorConfig prior;
  prior.n_nodes = cfg.n_nodes;
  prior.max_classes = cfg.max_classes;
  prior.feature_dim_range = cfg.feature_dim_range;
  for (int attempt = 0; attempt < prior.max_retries; ++attempt) {
    Rng rng(derive_seed(seed, "sweep_task", {static_cast<uint64_t>(attempt)}));
    try {
      const int n_classes = std::max(2, sample_class_count(prior, rng));
      int d = rng.uniform_int(cfg.feature_dim_range.lo, cfg.feature_dim_range.hi);
      ScmSpec spec = sample_scm(prior, rng);
      d = std::min(d, static_cast<int>(spec.feature_nodes.size()));
      Graph g;
      g.n = cfg.n_nodes;
      g.n_classes = n_classes;
      run_scm(spec, cfg.n_nodes, n_classes, d, rng, g.x, g.y);
      g.edges = sample_csbm_edges(g.y, h, cfg.p_in, rng);
      canonicalize_edges(g.edges, g.n);

      const int k = std::min(std::max(static_cast<int>(std::lround(cfg.split_fraction * cfg.n_nodes)), 1),
                             cfg.n_nodes - 1);
      std::vector<int> perm(static_cast<std::size_t>(cfg.n_nodes));
      for (int i = 0; i < cfg.n_nodes; ++i) perm[i] = i;
      rng.shuffle(perm);
      std::vector<int> train(perm.begin(), perm.begin() + k);
      std::vector<int> test(perm.begin() + k, perm.end());
      // coverage, matching the pre-training contract
      std::vector<int> count(static_cast<std::size_t>(n_classes), 0);
      for (int id : train) ++count[g.y[id]];
      for (std::size_t t = 0; t < test.size();) {
        if (count[g.y[test[t]]] > 0) {
          ++t;
          continue;
        }
        int donor = -1;
        for (std::size_t kk = 0; kk < train.size(); ++kk)
          if (count[g.y[train[kk]]] >= 2) {
            donor = static_cast<int>(kk);
            break;
          }
        if (donor < 0) throw NumericalError("controlled task: no safe donor");
        --count[g.y[train[donor]]];
        ++count[g.y[test[t]]];
        std::swap(train[donor], test[t]);
        ++t;
      }
      std::sort(train.begin(), train.end());
      std::sort(test.begin(), test.end());
      Task task{std::move(g), std::move(train), std::move(test)};
      task.validate();
      return task;
    } catch (const NumericalError&) {
      continue;
    }
  }
  throw NumericalError("controlled_homophily_task: retry budget exhausted");
}

namespace {

double run_method(SweepMethod method, const Task& task, const ModelParams* params,
                  const SweepConfig& cfg, uint64_t seed) {
  std::vector<int> train_labels;
  train_labels.reserve(task.train_ids.size());
  for (int id : task.train_ids) train_labels.push_back(task.graph.y[id]);
  switch (method) {
    case SweepMethod::nodepfn: {
      if (!params) throw ValidationError("sweep: nodepfn requested without a checkpoint");
      InferenceConfig icfg = cfg.inference;
      icfg.seed = seed;
      return ppd_accuracy(predict_task(task, *params, icfg), task);
    }
    case SweepMethod::labelprop:
      return ppd_accuracy(label_propagation(task.graph, task.train_ids, train_labels), task);
    case SweepMethod::linear:
    case SweepMethod::sgc:
    case SweepMethod::hgc: {
      FilterMatrix filter;
      filter.kind = method == SweepMethod::linear  ? FilterKind::identity
                    : method == SweepMethod::sgc ? FilterKind::low_pass
                                                 : FilterKind::high_pass;
      const std::vector<int> pred =
          closed_form_classify(task.graph, task.train_ids, train_labels, filter);
      int correct = 0;
      for (std::size_t i = 0; i < task.test_ids.size(); ++i)
        if (pred[i] == task.graph.y[task.test_ids[i]]) ++correct;
      return static_cast<double>(correct) / static_cast<double>(task.test_ids.size());
    }
    case SweepMethod::majority:
      return majority_class_accuracy(task);
  }
  throw ValidationError("sweep: unknown method");
}

}  // namespace

const SweepCell& SweepReport::cell(double h, SweepMethod m) const {
  for (const SweepCell& c : cells)
    if (std::abs(c.h - h) < 1e-12 && c.method == m) return c;
  throw ValidationError("sweep report: missing cell");
}

std::string SweepReport::to_table() const {
  std::ostringstream out;
  out << "h\tmethod\tmean_accuracy\tstd_accuracy\tn_graphs\n";
  out.precision(17);
  for (const SweepCell& c : cells)
    out << c.h << '\t' << method_name(c.method) << '\t' << c.mean_accuracy << '\t' << c.std_accuracy
        << '\t' << c.n_graphs << '\n';
  return out.str();
}

std::string SweepReport::per_graph_log() const {
  std::ostringstream out;
  out.precision(17);
  for (const SweepGraphRecord& r : per_graph)
    out << "{\"h\":" << r.h << ",\"seed\":" << r.seed << ",\"graph\":" << r.graph_index
        << ",\"method\":\"" << method_name(r.method) << "\",\"accuracy\":" << r.accuracy << "}\n";
  return out.str();
}

SweepReport sweep_homophily(const ModelParams* params, const SweepConfig& cfg) {
  cfg.validate();
  SweepReport report;
  for (double h : cfg.h_levels) {
    for (SweepMethod method : cfg.methods) {
      std::vector<double> seed_means;
      int n_graphs = 0;
      for (uint64_t seed : cfg.seeds) {
        double acc_sum = 0;
        for (int gi = 0; gi < cfg.graphs_per_level; ++gi) {
          const uint64_t task_seed =
              derive_seed(seed, "sweep", {static_cast<uint64_t>(std::llround(h * 1000)),
                                          static_cast<uint64_t>(gi)});
          const Task task = controlled_homophily_task(cfg, h, task_seed);
          const double acc = run_method(method, task, params, cfg, derive_seed(task_seed, "icl"));
          report.per_graph.push_back({h, seed, gi, method, acc});
          acc_sum += acc;
          ++n_graphs;
        }
        seed_means.push_back(acc_sum / cfg.graphs_per_level);
      }
      double mean = 0;
      for (double m : seed_means) mean += m;
      mean /= static_cast<double>(seed_means.size());
      double var = 0;
      for (double m : seed_means) var += (m - mean) * (m - mean);
      var /= static_cast<double>(seed_means.size());
      report.cells.push_back({h, method, mean, std::sqrt(var), n_graphs});
    }
  }
  return report;
}

EvalResult evaluate(const Task& task, const ModelParams& params, const InferenceConfig& icfg,
                    const std::vector<uint64_t>& seeds) {
  for (int id : task.test_ids)
    if (task.graph.y[id] < 0) throw ValidationError("evaluate: unlabeled test set");
  EvalResult result;
  for (uint64_t seed : seeds) {
    InferenceConfig cfg = icfg;
    cfg.seed = seed;
    result.per_seed.push_back(ppd_accuracy(predict_task(task, params, cfg), task));
  }
  double mean = 0;
  for (double a : result.per_seed) mean += a;
  mean /= static_cast<double>(result.per_seed.size());
  double var = 0;
  for (double a : result.per_seed) var += (a - mean) * (a - mean);
  var /= static_cast<double>(result.per_seed.size());
  result.mean_accuracy = mean;
  result.std_accuracy = std::sqrt(var);
  return result;
}

// ---- complexity measurements ------------------------------------------------

double fit_log_log_slope(const std::vector<ScalingRow>& rows) {
  if (rows.size() < 2) throw ValidationError("fit_log_log_slope: need >= 2 rows");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const ScalingRow& r : rows) {
    const double x = std::log(static_cast<double>(r.size));
    const double y = std::log(std::max(r.median_ms, 1e-6));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(rows.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

namespace {

double median_forward_ms(const Task& task, const ModelParams& params, BranchMode branch, int repeats) {
  ForwardOptions opts;
  opts.branch_mode = branch;
  std::vector<double> times;
  forward(task, params, nullptr, opts);  // warm-up
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    forward(task, params, nullptr, opts);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

Task timing_task(int n, const EdgeList& edges, int d_feat, Rng& rng) {
  Task task;
  task.graph.n = n;
  task.graph.n_classes = 2;
  task.graph.edges = edges;
  task.graph.x = Tensor::uniform({n, d_feat}, -1, 1, rng);
  task.graph.y.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) task.graph.y[i] = static_cast<int>(rng.uniform_int(uint64_t(2)));
  for (int i = 0; i < n; ++i) (i < n / 2 ? task.train_ids : task.test_ids).push_back(i);
  return task;
}

}  // namespace

ScalingTable measure_scaling(const ScalingConfig& cfg) {
  for (std::size_t i = 1; i < cfg.attention_sizes.size(); ++i)
    if (cfg.attention_sizes[i] <= cfg.attention_sizes[i - 1])
      throw ValidationError("measure_scaling: sizes must be strictly increasing");
  for (std::size_t i = 1; i < cfg.mpnn_edges.size(); ++i)
    if (cfg.mpnn_edges[i] <= cfg.mpnn_edges[i - 1])
      throw ValidationError("measure_scaling: sizes must be strictly increasing");

  ModelConfig mc;
  mc.d_embed = cfg.d_embed;
  mc.n_layers = cfg.n_layers;
  mc.n_heads = 4;
  mc.d_feat_max = 16;
  mc.max_classes = 4;
  Rng rng(7);
  ModelParams params = init_params(mc, rng);

  ScalingTable table;
  for (int n : cfg.attention_sizes) {
    Task task = timing_task(n, {}, mc.d_feat_max, rng);
    table.attention.push_back({n, median_forward_ms(task, params, BranchMode::attention_only, cfg.repeats)});
  }
  for (int target_edges : cfg.mpnn_edges) {
    const double pairs = 0.5 * cfg.mpnn_n * (cfg.mpnn_n - 1);
    const double p = std::min(1.0, static_cast<double>(target_edges) / pairs);
    Rng er(derive_seed(11, {static_cast<uint64_t>(target_edges)}));
    EdgeList edges = sample_er_edges(cfg.mpnn_n, p, er);
    Task task = timing_task(cfg.mpnn_n, edges, mc.d_feat_max, rng);
    table.mpnn.push_back(
        {static_cast<int>(edges.size()), median_forward_ms(task, params, BranchMode::mpnn_only, cfg.repeats)});
  }
  if (table.attention.size() >= 2) table.attention_exponent = fit_log_log_slope(table.attention);
  if (table.mpnn.size() >= 2) table.mpnn_exponent = fit_log_log_slope(table.mpnn);
  return table;
}

std::string ScalingTable::to_table() const {
  std::ostringstream out;
  out.precision(6);
  out << "branch\tsize\tmedian_ms\n";
  for (const ScalingRow& r : attention) out << "attention\t" << r.size << '\t' << r.median_ms << '\n';
  for (const ScalingRow& r : mpnn) out << "mpnn\t" << r.size << '\t' << r.median_ms << '\n';
  out << "# attention exponent (N): " << attention_exponent << '\n';
  out << "# mpnn exponent (E): " << mpnn_exponent << '\n';
  return out.str();
}

}  // namespace nodepfn
