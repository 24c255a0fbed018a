#pragma once

// JSON (de)serialization for the config structs, used by the CLI and the
// python module. Kept out of the core library so nodepfn_core has no json
// dependency.

#include <json.hpp>

#include "nodepfn/baselines.hpp"
#include "nodepfn/inference.hpp"
#include "nodepfn/prior.hpp"
#include "nodepfn/sweep.hpp"
#include "nodepfn/training.hpp"

namespace nodepfn {

using json = nlohmann::json;

inline void merge_field(const json& j, const char* key, double& v) {
  if (j.contains(key)) v = j.at(key).get<double>();
}
inline void merge_field(const json& j, const char* key, int& v) {
  if (j.contains(key)) v = j.at(key).get<int>();
}
inline void merge_field(const json& j, const char* key, bool& v) {
  if (j.contains(key)) v = j.at(key).get<bool>();
}
inline void merge_field(const json& j, const char* key, uint64_t& v) {
  if (j.contains(key)) v = j.at(key).get<uint64_t>();
}
inline void merge_field(const json& j, const char* key, Interval& v) {
  if (j.contains(key)) {
    const auto& arr = j.at(key);
    v = {arr.at(0).get<double>(), arr.at(1).get<double>()};
  }
}
inline void merge_field(const json& j, const char* key, IntRange& v) {
  if (j.contains(key)) {
    const auto& arr = j.at(key);
    v = {arr.at(0).get<int>(), arr.at(1).get<int>()};
  }
}

inline json prior_to_json(const PriorConfig& c) {
  return json{{"n_nodes", c.n_nodes},
              {"max_classes", c.max_classes},
              {"feature_dim_range", {c.feature_dim_range.lo, c.feature_dim_range.hi}},
              {"er_fraction", c.er_fraction},
              {"h_range", {c.csbm.h_range.lo, c.csbm.h_range.hi}},
              {"p_in_range", {c.csbm.p_in_range.lo, c.csbm.p_in_range.hi}},
              {"p_er_range", {c.er.p_er_range.lo, c.er.p_er_range.hi}},
              {"ba_enabled", c.ba.enabled},
              {"ba_m_range", {c.ba.attachment_m_range.lo, c.ba.attachment_m_range.hi}},
              {"scm_layer_mu", c.scm.layer_mu},
              {"scm_layer_sigma", c.scm.layer_sigma},
              {"scm_hidden_mu", c.scm.hidden_mu},
              {"scm_hidden_sigma", c.scm.hidden_sigma},
              {"scm_edge_drop_alpha", c.scm.edge_drop_alpha},
              {"scm_edge_drop_beta", c.scm.edge_drop_beta},
              {"scm_noise_mu", c.scm.noise_mu},
              {"scm_noise_sigma", c.scm.noise_sigma},
              {"split_fraction_range", {c.split_fraction_range.lo, c.split_fraction_range.hi}},
              {"class_geometric_p", c.class_geometric_p},
              {"max_retries", c.max_retries}};
}

inline void prior_from_json(const json& j, PriorConfig& c) {
  merge_field(j, "n_nodes", c.n_nodes);
  merge_field(j, "max_classes", c.max_classes);
  merge_field(j, "feature_dim_range", c.feature_dim_range);
  merge_field(j, "er_fraction", c.er_fraction);
  merge_field(j, "h_range", c.csbm.h_range);
  merge_field(j, "p_in_range", c.csbm.p_in_range);
  merge_field(j, "p_er_range", c.er.p_er_range);
  merge_field(j, "ba_enabled", c.ba.enabled);
  merge_field(j, "ba_m_range", c.ba.attachment_m_range);
  merge_field(j, "scm_layer_mu", c.scm.layer_mu);
  merge_field(j, "scm_layer_sigma", c.scm.layer_sigma);
  merge_field(j, "scm_hidden_mu", c.scm.hidden_mu);
  merge_field(j, "scm_hidden_sigma", c.scm.hidden_sigma);
  merge_field(j, "scm_edge_drop_alpha", c.scm.edge_drop_alpha);
  merge_field(j, "scm_edge_drop_beta", c.scm.edge_drop_beta);
  merge_field(j, "scm_noise_mu", c.scm.noise_mu);
  merge_field(j, "scm_noise_sigma", c.scm.noise_sigma);
  merge_field(j, "split_fraction_range", c.split_fraction_range);
  merge_field(j, "class_geometric_p", c.class_geometric_p);
  merge_field(j, "max_retries", c.max_retries);
}

inline json model_to_json(const ModelConfig& c) {
  return json{{"d_embed", c.d_embed},
              {"n_layers", c.n_layers},
              {"n_heads", c.n_heads},
              {"dropout", c.dropout},
              {"d_feat_max", c.d_feat_max},
              {"max_classes", c.max_classes},
              {"fusion_mode", c.fusion_mode == FusionMode::sequential ? "sequential" : "parallel"},
              {"mpnn_enabled", c.mpnn_enabled},
              {"ffn_enabled", c.ffn_enabled},
              {"adjacency_self_loops", c.adjacency_self_loops}};
}

inline void model_from_json(const json& j, ModelConfig& c) {
  merge_field(j, "d_embed", c.d_embed);
  merge_field(j, "n_layers", c.n_layers);
  merge_field(j, "n_heads", c.n_heads);
  merge_field(j, "dropout", c.dropout);
  merge_field(j, "d_feat_max", c.d_feat_max);
  merge_field(j, "max_classes", c.max_classes);
  if (j.contains("fusion_mode"))
    c.fusion_mode = j.at("fusion_mode").get<std::string>() == "sequential" ? FusionMode::sequential
                                                                           : FusionMode::parallel;
  merge_field(j, "mpnn_enabled", c.mpnn_enabled);
  merge_field(j, "ffn_enabled", c.ffn_enabled);
  merge_field(j, "adjacency_self_loops", c.adjacency_self_loops);
}

inline json train_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"steps_per_epoch", c.steps_per_epoch},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"weight_decay", c.weight_decay},
              {"epsilon", c.epsilon},
              {"lr_schedule", c.lr_schedule == LrSchedule::constant ? "constant" : "cosine_warmup"},
              {"warmup_steps", c.warmup_steps},
              {"seed", c.seed},
              {"checkpoint_every", c.checkpoint_every},
              {"clip_norm", c.clip_norm}};
}

inline void train_from_json(const json& j, TrainConfig& c) {
  merge_field(j, "epochs", c.epochs);
  merge_field(j, "steps_per_epoch", c.steps_per_epoch);
  merge_field(j, "batch_size", c.batch_size);
  merge_field(j, "learning_rate", c.learning_rate);
  merge_field(j, "beta1", c.beta1);
  merge_field(j, "beta2", c.beta2);
  merge_field(j, "weight_decay", c.weight_decay);
  merge_field(j, "epsilon", c.epsilon);
  if (j.contains("lr_schedule"))
    c.lr_schedule = j.at("lr_schedule").get<std::string>() == "constant" ? LrSchedule::constant
                                                                         : LrSchedule::cosine_warmup;
  merge_field(j, "warmup_steps", c.warmup_steps);
  merge_field(j, "seed", c.seed);
  merge_field(j, "checkpoint_every", c.checkpoint_every);
  merge_field(j, "clip_norm", c.clip_norm);
}

inline json inference_to_json(const InferenceConfig& c) {
  json j{{"smoothing_steps", c.smoothing_steps}, {"ensemble_size", c.ensemble_size}, {"seed", c.seed}};
  if (c.n_components) j["n_components"] = *c.n_components;
  return j;
}

inline void inference_from_json(const json& j, InferenceConfig& c) {
  merge_field(j, "smoothing_steps", c.smoothing_steps);
  merge_field(j, "ensemble_size", c.ensemble_size);
  merge_field(j, "seed", c.seed);
  if (j.contains("n_components")) c.n_components = j.at("n_components").get<int>();
}

// Enumerable hypothesis mixture for oracle-prior training and the baseline
// CLI's exact method.
inline HypothesisSet hypotheses_from_json(const json& j) {
  HypothesisSet set;
  for (const json& hj : j) {
    CsbmHypothesis hyp;
    hyp.weight = hj.value("weight", 1.0);
    hyp.h = hj.at("h").get<double>();
    hyp.p_in = hj.at("p_in").get<double>();
    hyp.feature_std = hj.value("feature_std", 1.0);
    const auto& means = hj.at("class_means");
    const int c = static_cast<int>(means.size());
    const int d = static_cast<int>(means.at(0).size());
    hyp.class_means = Tensor::zeros({c, d});
    for (int a = 0; a < c; ++a)
      for (int b = 0; b < d; ++b) hyp.class_means(a, b) = means.at(a).at(b).get<double>();
    if (hj.contains("class_prior")) {
      hyp.class_prior = hj.at("class_prior").get<std::vector<double>>();
    } else {
      hyp.class_prior.assign(static_cast<std::size_t>(c), 1.0 / c);
    }
    set.hypotheses.push_back(std::move(hyp));
  }
  set.validate();
  return set;
}

inline json hypotheses_to_json(const HypothesisSet& set) {
  json out = json::array();
  for (const CsbmHypothesis& hyp : set.hypotheses) {
    json means = json::array();
    for (int a = 0; a < hyp.n_classes(); ++a) {
      json row = json::array();
      for (int b = 0; b < hyp.class_means.cols(); ++b) row.push_back(static_cast<double>(hyp.class_means(a, b)));
      means.push_back(row);
    }
    out.push_back(json{{"weight", hyp.weight},
                       {"h", hyp.h},
                       {"p_in", hyp.p_in},
                       {"feature_std", hyp.feature_std},
                       {"class_means", means},
                       {"class_prior", hyp.class_prior}});
  }
  return out;
}

}  // namespace nodepfn
