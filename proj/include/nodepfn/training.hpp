#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nodepfn/model.hpp"
#include "nodepfn/prior.hpp"

namespace nodepfn {

enum class LrSchedule { constant, cosine_warmup };

struct TrainConfig {
  int epochs = 30;
  int steps_per_epoch = 1024;
  int batch_size = 8;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.01;
  double epsilon = 1e-8;
  LrSchedule lr_schedule = LrSchedule::cosine_warmup;
  int warmup_steps = -1;  // -1: 2% of total steps
  uint64_t seed = 0;
  int checkpoint_every = 0;  // in steps; 0 = final checkpoint only
  double clip_norm = 1.0;    // global-norm gradient clip; <= 0 disables
  int task_retry_budget = 5;

  void validate() const;
  int total_steps() const { return epochs * steps_per_epoch; }
  double lr_at(int step) const;
};

struct OptimizerState {
  struct Moments {
    Tensor m, v;
  };
  std::vector<Moments> slots;  // aligned with ModelParams::for_each order
  int64_t step_count = 0;
  int64_t skipped_steps = 0;

  static OptimizerState init(ModelParams& params);
};

// Mean negative log-likelihood of the test rows under the restricted
// softmax (first task.graph.n_classes columns of the logits).
Tensor task_loss(const Tensor& logits, const Task& task, GradTape* tape = nullptr);

// Decoupled-weight-decay Adam with bias correction, applied in the fixed
// parameter order. Skips the update (and logs it on the state) when any
// gradient is non-finite.
void adamw_step(ModelParams& params, OptimizerState& state, const TrainConfig& cfg, double lr);

double global_grad_norm(ModelParams& params);
void clip_gradients(ModelParams& params, double max_norm);

struct TrainCallbacks {
  // invoked after each optimizer step with the batch loss
  std::function<void(int step, double loss, double lr)> on_step;
  // invoked whenever a checkpoint should be persisted (checkpoint_every and
  // end of training); `tag` is "final" or the step number
  std::function<void(const ModelParams&, const OptimizerState&, int next_epoch, int next_step,
                     const std::string& tag)> on_checkpoint;
};

struct TrainResult {
  ModelParams params;
  OptimizerState opt;
  std::vector<double> step_losses;
  int64_t degenerate_task_retries = 0;
};

// Streams fresh tasks (seed = hash(seed, epoch, step, batch_index); no task
// is ever revisited), minimizes the mean test cross-entropy per batch.
// `start_epoch`/`start_step` support exact resume together with restored
// params/opt state.
TrainResult train(const TaskSampler& sampler, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks = {},
                  std::optional<ModelParams> resume_params = std::nullopt,
                  std::optional<OptimizerState> resume_opt = std::nullopt, int start_epoch = 0,
                  int start_step = 0);

// Spec-level convenience: sample tasks straight from a synthetic prior.
TrainResult train(const PriorConfig& prior_cfg, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks = {});

// Features padded (and rescaled) to the model's capacity, matching the
// inference-time flexible encoder; applied to every task the training loop
// and the evaluation helpers feed to the model.
Task padded_for_model(Task task, int d_feat_max);

// Frozen pool of validation tasks drawn from a reserved seed branch; never
// collides with the training stream.
std::vector<Task> validation_pool(const TaskSampler& sampler, uint64_t seed, int size);

double mean_loss(const std::vector<Task>& tasks, const ModelParams& params);
double mean_accuracy(const std::vector<Task>& tasks, const ModelParams& params);

}  // namespace nodepfn
