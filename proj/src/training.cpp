#include "nodepfn/training.hpp"

#include "nodepfn/inference.hpp"

#include <algorithm>
#include <cmath>

namespace nodepfn {

void TrainConfig::validate() const {
  if (epochs < 1 || steps_per_epoch < 1 || batch_size < 1)
    throw ValidationError("train config: counts must be positive");
  // lr = 0 is tolerated as a degenerate no-update run (useful in tests)
  if (learning_rate < 0) throw ValidationError("train config: learning_rate must be >= 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
    throw ValidationError("train config: betas must be in [0,1)");
  if (epsilon <= 0) throw ValidationError("train config: epsilon must be > 0");
  if (weight_decay < 0) throw ValidationError("train config: weight_decay must be >= 0");
}

double TrainConfig::lr_at(int step) const {
  if (lr_schedule == LrSchedule::constant) return learning_rate;
  const int total = total_steps();
  int warmup = warmup_steps >= 0 ? warmup_steps : std::max(1, total / 50);
  warmup = std::min(warmup, total);
  if (step < warmup) return learning_rate * (step + 1) / static_cast<double>(warmup);
  if (total <= warmup) return learning_rate;
  const double t = (step - warmup) / static_cast<double>(total - warmup);
  return learning_rate * 0.5 * (1.0 + std::cos(3.14159265358979323846 * std::min(t, 1.0)));
}

OptimizerState OptimizerState::init(ModelParams& params) {
  OptimizerState st;
  params.for_each([&st](const std::string&, Tensor& t) {
    st.slots.push_back({Tensor::zeros(t.shape()), Tensor::zeros(t.shape())});
  });
  return st;
}

Tensor task_loss(const Tensor& logits, const Task& task, GradTape* tape) {
  if (task.test_ids.empty()) throw ValidationError("task_loss: empty test set");
  if (logits.rows() != static_cast<int>(task.test_ids.size()))
    throw ValidationError("task_loss: logits do not cover the test set");
  std::vector<int> labels;
  labels.reserve(task.test_ids.size());
  for (int id : task.test_ids) labels.push_back(task.graph.y[id]);
  return softmax_cross_entropy(logits, labels, task.graph.n_classes, tape);
}

double global_grad_norm(ModelParams& params) {
  double sq = 0;
  params.for_each([&sq](const std::string&, Tensor& t) {
    for (real g : t.grad()) sq += static_cast<double>(g) * g;
  });
  return std::sqrt(sq);
}

void clip_gradients(ModelParams& params, double max_norm) {
  if (max_norm <= 0) return;
  const double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0) return;
  const real factor = static_cast<real>(max_norm / norm);
  params.for_each([factor](const std::string&, Tensor& t) {
    for (real& g : t.grad_mut()) g *= factor;
  });
}

void adamw_step(ModelParams& params, OptimizerState& state, const TrainConfig& cfg, double lr) {
  bool finite = true;
  params.for_each([&finite](const std::string&, Tensor& t) {
    for (real g : t.grad())
      if (!std::isfinite(g)) finite = false;
  });
  if (!finite) {
    ++state.skipped_steps;
    return;
  }
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));
  std::size_t slot = 0;
  params.for_each([&](const std::string&, Tensor& t) {
    auto& mom = state.slots.at(slot++);
    auto m = mom.m.values_mut();
    auto v = mom.v.values_mut();
    auto w = t.values_mut();
    const auto g = t.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<real>(mi);
      v[i] = static_cast<real>(vi);
      const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.epsilon);
      w[i] = static_cast<real>(w[i] * (1.0 - lr * cfg.weight_decay) - lr * update);
    }
  });
}

TrainResult train(const TaskSampler& sampler, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks, std::optional<ModelParams> resume_params,
                  std::optional<OptimizerState> resume_opt, int start_epoch, int start_step) {
  cfg.validate();
  model_cfg.validate();

  TrainResult result;
  if (resume_params) {
    result.params = std::move(*resume_params);
    result.opt = resume_opt ? std::move(*resume_opt) : OptimizerState::init(result.params);
  } else {
    Rng init_rng(derive_seed(cfg.seed, "init"));
    result.params = init_params(model_cfg, init_rng);
    result.opt = OptimizerState::init(result.params);
  }

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    for (int step = (epoch == start_epoch ? start_step : 0); step < cfg.steps_per_epoch; ++step) {
      const int global_step = epoch * cfg.steps_per_epoch + step;
      const double lr = cfg.lr_at(global_step);

      GradTape tape;
      Tensor batch_loss;
      ForwardOptions opts;
      Rng dropout_rng(derive_seed(cfg.seed, "dropout", {static_cast<uint64_t>(global_step)}));
      if (model_cfg.dropout > 0) opts.dropout_rng = &dropout_rng;

      for (int b = 0; b < cfg.batch_size; ++b) {
        Tensor loss;
        for (int attempt = 0;; ++attempt) {
          const uint64_t task_seed =
              attempt == 0
                  ? derive_seed(cfg.seed, {static_cast<uint64_t>(epoch), static_cast<uint64_t>(step),
                                           static_cast<uint64_t>(b)})
                  : derive_seed(cfg.seed, "task_retry",
                                {static_cast<uint64_t>(epoch), static_cast<uint64_t>(step),
                                 static_cast<uint64_t>(b), static_cast<uint64_t>(attempt)});
          try {
            Task task = padded_for_model(sampler(task_seed), model_cfg.d_feat_max);
            loss = task_loss(forward(task, result.params, &tape, opts), task, &tape);
            break;
          } catch (const NumericalError&) {
            ++result.degenerate_task_retries;
            if (attempt >= cfg.task_retry_budget)
              throw NumericalError("train: non-finite loss beyond retry budget at step " +
                                   std::to_string(global_step));
          }
        }
        batch_loss = batch_loss.defined() ? add(batch_loss, loss, &tape) : loss;
      }
      batch_loss = scale(batch_loss, real(1) / cfg.batch_size, &tape);

      result.params.zero_grad();
      backward(batch_loss, tape);
      clip_gradients(result.params, cfg.clip_norm);
      adamw_step(result.params, result.opt, cfg, lr);

      const double loss_value = static_cast<double>(batch_loss.item());
      result.step_losses.push_back(loss_value);
      if (callbacks.on_step) callbacks.on_step(global_step, loss_value, lr);
      if (callbacks.on_checkpoint && cfg.checkpoint_every > 0 &&
          (global_step + 1) % cfg.checkpoint_every == 0 && global_step + 1 < cfg.total_steps()) {
        const int next = global_step + 1;
        callbacks.on_checkpoint(result.params, result.opt, next / cfg.steps_per_epoch,
                                next % cfg.steps_per_epoch, std::to_string(next));
      }
    }
  }
  if (callbacks.on_checkpoint)
    callbacks.on_checkpoint(result.params, result.opt, cfg.epochs, 0, "final");
  return result;
}

TrainResult train(const PriorConfig& prior_cfg, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainCallbacks& callbacks) {
  prior_cfg.validate();
  return train(prior_task_sampler(prior_cfg), model_cfg, cfg, callbacks);
}

Task padded_for_model(Task task, int d_feat_max) {
  if (task.graph.feature_dim() < d_feat_max)
    task.graph.x = pad_features(task.graph.x, d_feat_max);
  return task;
}

std::vector<Task> validation_pool(const TaskSampler& sampler, uint64_t seed, int size) {
  std::vector<Task> pool;
  pool.reserve(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i)
    pool.push_back(sampler(derive_seed(seed, "valpool", {static_cast<uint64_t>(i)})));
  return pool;
}

double mean_loss(const std::vector<Task>& tasks, const ModelParams& params) {
  double total = 0;
  for (const Task& t : tasks) {
    const Task padded = padded_for_model(t, params.config.d_feat_max);
    total += static_cast<double>(task_loss(forward(padded, params), padded).item());
  }
  return total / static_cast<double>(tasks.size());
}

double mean_accuracy(const std::vector<Task>& tasks, const ModelParams& params) {
  double total = 0;
  for (const Task& raw : tasks) {
    const Task t = padded_for_model(raw, params.config.d_feat_max);
    const Tensor ppd = forward_ppd(t, params);
    int correct = 0;
    for (std::size_t i = 0; i < t.test_ids.size(); ++i) {
      int best = 0;
      for (int c = 1; c < t.graph.n_classes; ++c)
        if (ppd(static_cast<int>(i), c) > ppd(static_cast<int>(i), best)) best = c;
      if (best == t.graph.y[t.test_ids[i]]) ++correct;
    }
    total += static_cast<double>(correct) / static_cast<double>(t.test_ids.size());
  }
  return total / static_cast<double>(tasks.size());
}

}  // namespace nodepfn
