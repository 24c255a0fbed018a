#pragma once

#include <string>
#include <vector>

#include "nodepfn/baselines.hpp"
#include "nodepfn/inference.hpp"
#include "nodepfn/prior.hpp"
#include "nodepfn/training.hpp"

namespace nodepfn {

enum class SweepMethod { nodepfn, labelprop, linear, sgc, hgc, majority };

std::string method_name(SweepMethod m);
SweepMethod method_from_name(const std::string& name);

struct SweepConfig {
  std::vector<double> h_levels = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int graphs_per_level = 25;
  std::vector<uint64_t> seeds = {1, 2, 3};
  std::vector<SweepMethod> methods = {SweepMethod::nodepfn, SweepMethod::labelprop};
  // evaluation-task shape: cSBM structure with SCM features at fixed h
  int n_nodes = 128;
  int max_classes = 5;
  IntRange feature_dim_range{3, 16};
  double p_in = 0.1;
  double split_fraction = 0.5;
  InferenceConfig inference;  // for the nodepfn method

  void validate() const;
};

struct SweepCell {
  double h = 0;
  SweepMethod method = SweepMethod::labelprop;
  double mean_accuracy = 0;
  double std_accuracy = 0;  // over seeds
  int n_graphs = 0;
};

struct SweepGraphRecord {
  double h;
  uint64_t seed;
  int graph_index;
  SweepMethod method;
  double accuracy;
};

struct SweepReport {
  std::vector<SweepCell> cells;
  std::vector<SweepGraphRecord> per_graph;  // aggregation is recomputable from these

  const SweepCell& cell(double h, SweepMethod m) const;
  // plot-data table: one row per (h, method)
  std::string to_table() const;
  std::string per_graph_log() const;  // one JSON line per record
};

// Fresh cSBM evaluation task at a controlled homophily level: SCM features
// and labels, cSBM edges at exactly (h, p_in), fixed split fraction.
Task controlled_homophily_task(const SweepConfig& cfg, double h, uint64_t seed);

// Runs every requested method over the same tasks. `params` may be null when
// nodepfn is not among the methods.
SweepReport sweep_homophily(const ModelParams* params, const SweepConfig& cfg);

struct EvalResult {
  double mean_accuracy = 0;
  double std_accuracy = 0;
  std::vector<double> per_seed;
};

// Accuracy of the checkpoint on a labeled task; seeds vary only the ensemble
// member transforms.
EvalResult evaluate(const Task& task, const ModelParams& params, const InferenceConfig& icfg,
                    const std::vector<uint64_t>& seeds);

struct ScalingRow {
  int size = 0;         // N for attention sweeps, E for mpnn sweeps
  double median_ms = 0; // median-of-5 forward wall clock
};

struct ScalingTable {
  std::vector<ScalingRow> attention;  // edgeless graphs, N varies
  std::vector<ScalingRow> mpnn;       // fixed N, E varies
  double attention_exponent = 0;      // log-log slope fits
  double mpnn_exponent = 0;
  std::string to_table() const;
};

struct ScalingConfig {
  std::vector<int> attention_sizes = {128, 256, 512, 1024};
  int mpnn_n = 2048;
  std::vector<int> mpnn_edges = {262144, 524288, 1048576, 2097152};
  int d_embed = 32;
  int n_layers = 2;
  int repeats = 5;
};

ScalingTable measure_scaling(const ScalingConfig& cfg);

double fit_log_log_slope(const std::vector<ScalingRow>& rows);

}  // namespace nodepfn
