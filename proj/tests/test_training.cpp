#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "nodepfn/dataset_io.hpp"
#include "nodepfn/training.hpp"
#include "test_support.hpp"

using namespace nodepfn;

namespace {

Task tiny_task(uint64_t seed) {
  PriorConfig cfg;
  cfg.n_nodes = 24;
  cfg.max_classes = 3;
  cfg.feature_dim_range = {3, 5};
  return task_for_seed(cfg, seed);
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.d_embed = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.d_feat_max = 5;
  cfg.max_classes = 3;
  return cfg;
}

TrainConfig tiny_train(int epochs, int steps, uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.steps_per_epoch = steps;
  cfg.batch_size = 2;
  cfg.learning_rate = 3e-3;
  cfg.lr_schedule = LrSchedule::constant;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("task_loss: perfect, uniform, hand-computed") {
  Task task = tiny_task(1);
  const int n_test = static_cast<int>(task.test_ids.size());
  const int c = task.graph.n_classes;

  // near-one-hot logits on the true labels
  Tensor perfect = Tensor::zeros({n_test, 3});
  for (int i = 0; i < n_test; ++i) perfect(i, task.graph.y[task.test_ids[i]]) = 200;
  CHECK(task_loss(perfect, task).item() == doctest::Approx(0.0).epsilon(1e-12));

  Tensor uniform = Tensor::zeros({n_test, 3});
  CHECK(task_loss(uniform, task).item() == doctest::Approx(std::log(static_cast<double>(c))));

  // 3 hand-set rows
  Task hand = task;
  hand.test_ids = {task.test_ids[0], task.test_ids[1], task.test_ids[2]};
  std::vector<real> probs = {real(0.7), real(0.2), real(0.1)};
  Tensor logits = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < c; ++j) logits(i, j) = std::log(probs[(j + i) % 3]);
  double expected = 0;
  for (int i = 0; i < 3; ++i) {
    const int y = hand.graph.y[hand.test_ids[i]];
    expected += -std::log(static_cast<double>(probs[(y + i) % 3]));
  }
  expected /= 3;
  CHECK(task_loss(logits, hand).item() == doctest::Approx(expected).epsilon(1e-9));

  Task empty = task;
  empty.test_ids.clear();
  Tensor none = Tensor::zeros({0, 3});
  CHECK_THROWS_AS(task_loss(none, empty), ValidationError);
}

TEST_CASE("adamw: zero grad, closed-form first step, decoupled decay") {
  ModelConfig mc = tiny_model();
  Rng rng(3);
  ModelParams params = init_params(mc, rng);
  OptimizerState state = OptimizerState::init(params);
  TrainConfig cfg = tiny_train(1, 1, 0);
  cfg.weight_decay = 0;

  // zero gradient, zero weight decay: parameters unchanged
  ModelParams before = params;
  std::vector<real> snapshot(params.w_x.values().begin(), params.w_x.values().end());
  params.zero_grad();
  adamw_step(params, state, cfg, cfg.learning_rate);
  // m=v=0 and g=0 keeps the update at exactly zero
  for (std::size_t i = 0; i < snapshot.size(); ++i) CHECK(params.w_x.values()[i] == snapshot[i]);

  // one step from zero moments: delta = -lr * g / (|g| + eps)
  ModelParams p2 = init_params(mc, rng);
  OptimizerState s2 = OptimizerState::init(p2);
  p2.zero_grad();
  std::vector<real> w_before(p2.w_x.values().begin(), p2.w_x.values().end());
  Rng grad_rng(5);
  for (real& g : p2.w_x.grad_mut()) g = static_cast<real>(grad_rng.normal());
  std::vector<real> g_copy(p2.w_x.grad().begin(), p2.w_x.grad().end());
  adamw_step(p2, s2, cfg, cfg.learning_rate);
  for (std::size_t i = 0; i < w_before.size(); ++i) {
    const double g = g_copy[i];
    const double expected = w_before[i] - cfg.learning_rate * g / (std::sqrt(g * g) + cfg.epsilon);
    CHECK(std::abs(static_cast<double>(p2.w_x.values()[i]) - expected) < 1e-12);
  }

  // weight decay only: multiplicative shrink by (1 - lr*wd)
  TrainConfig wd_cfg = cfg;
  wd_cfg.weight_decay = 0.5;
  ModelParams p3 = init_params(mc, rng);
  OptimizerState s3 = OptimizerState::init(p3);
  p3.zero_grad();
  std::vector<real> w3(p3.w_x.values().begin(), p3.w_x.values().end());
  adamw_step(p3, s3, wd_cfg, wd_cfg.learning_rate);
  for (std::size_t i = 0; i < w3.size(); ++i)
    CHECK(static_cast<double>(p3.w_x.values()[i]) ==
          doctest::Approx(w3[i] * (1.0 - wd_cfg.learning_rate * wd_cfg.weight_decay)).epsilon(1e-12));
}

TEST_CASE("adamw: non-finite gradient skips the step") {
  ModelConfig mc = tiny_model();
  Rng rng(7);
  ModelParams params = init_params(mc, rng);
  OptimizerState state = OptimizerState::init(params);
  TrainConfig cfg = tiny_train(1, 1, 0);
  params.zero_grad();
  params.w_x.grad_mut()[0] = std::numeric_limits<real>::quiet_NaN();
  std::vector<real> snapshot(params.w_x.values().begin(), params.w_x.values().end());
  adamw_step(params, state, cfg, cfg.learning_rate);
  CHECK(state.skipped_steps == 1);
  CHECK(state.step_count == 0);
  for (std::size_t i = 0; i < snapshot.size(); ++i) CHECK(params.w_x.values()[i] == snapshot[i]);
}

TEST_CASE("gradient clipping: norm never exceeds the cap") {
  ModelConfig mc = tiny_model();
  Rng rng(11);
  ModelParams params = init_params(mc, rng);
  params.zero_grad();
  Rng grad_rng(13);
  params.for_each([&grad_rng](const std::string&, Tensor& t) {
    for (real& g : t.grad_mut()) g = static_cast<real>(grad_rng.normal() * 10);
  });
  CHECK(global_grad_norm(params) > 1.0);
  clip_gradients(params, 1.0);
  CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("lr schedule: warmup then cosine decay to zero") {
  TrainConfig cfg = tiny_train(2, 100, 0);
  cfg.lr_schedule = LrSchedule::cosine_warmup;
  cfg.warmup_steps = 10;
  CHECK(cfg.lr_at(0) == doctest::Approx(cfg.learning_rate * 0.1));
  CHECK(cfg.lr_at(9) == doctest::Approx(cfg.learning_rate));
  CHECK(cfg.lr_at(199) < cfg.lr_at(100));
  CHECK(cfg.lr_at(199) >= 0);
  TrainConfig flat = tiny_train(1, 10, 0);
  CHECK(flat.lr_at(5) == doctest::Approx(flat.learning_rate));
}

TEST_CASE("train: lr=0 leaves parameters identical") {
  PriorConfig prior;
  prior.n_nodes = 24;
  prior.max_classes = 3;
  prior.feature_dim_range = {3, 5};
  TrainConfig cfg = tiny_train(1, 4, 17);
  cfg.learning_rate = 0;
  TrainResult result = train(prior, tiny_model(), cfg);

  Rng init_rng(derive_seed(cfg.seed, "init"));
  ModelParams fresh = init_params(tiny_model(), init_rng);
  bool identical = true;
  std::vector<std::pair<std::string, Tensor>> trained;
  result.params.for_each([&trained](const std::string& name, Tensor& t) { trained.emplace_back(name, t); });
  std::size_t i = 0;
  fresh.for_each([&](const std::string&, Tensor& t) {
    if (max_abs_diff(t, trained[i++].second) != 0) identical = false;
  });
  CHECK(identical);
}

TEST_CASE("train: deterministic rerun and fresh-task streaming") {
  PriorConfig prior;
  prior.n_nodes = 24;
  prior.max_classes = 3;
  prior.feature_dim_range = {3, 5};
  const TrainConfig cfg = tiny_train(2, 3, 23);

  TrainResult a = train(prior, tiny_model(), cfg);
  TrainResult b = train(prior, tiny_model(), cfg);
  REQUIRE(a.step_losses.size() == b.step_losses.size());
  for (std::size_t i = 0; i < a.step_losses.size(); ++i) CHECK(a.step_losses[i] == b.step_losses[i]);

  // no task presented twice: hash the serialized bytes of every streamed task
  std::set<std::vector<unsigned char>> seen;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch)
    for (int step = 0; step < cfg.steps_per_epoch; ++step)
      for (int slot = 0; slot < cfg.batch_size; ++slot) {
        const uint64_t task_seed = derive_seed(cfg.seed, {static_cast<uint64_t>(epoch),
                                                          static_cast<uint64_t>(step),
                                                          static_cast<uint64_t>(slot)});
        const Task task = task_for_seed(prior, task_seed);
        CHECK(seen.insert(serialize_dataset(DatasetFile::from_task(task))).second);
      }
}

TEST_CASE("train: resume reproduces the uninterrupted run bitwise") {
  PriorConfig prior;
  prior.n_nodes = 24;
  prior.max_classes = 3;
  prior.feature_dim_range = {3, 5};
  ModelConfig mc = tiny_model();
  TrainConfig cfg = tiny_train(1, 10, 29);

  TrainResult full = train(prior, mc, cfg);

  // first half
  TrainConfig half_cfg = cfg;
  half_cfg.epochs = 1;
  half_cfg.steps_per_epoch = 10;
  ModelParams mid_params;
  OptimizerState mid_opt;
  {
    TrainConfig first = cfg;
    first.steps_per_epoch = 5;  // same derivation path for steps 0..4 of epoch 0
    // run 5 steps manually through the sampler-based entry point
    TrainResult part = train(prior_task_sampler(prior), mc, first);
    mid_params = part.params;
    mid_opt = part.opt;
  }
  // resume from (epoch 0, step 5) of the 10-step schedule
  TrainResult resumed = train(prior_task_sampler(prior), mc, cfg, {}, mid_params, mid_opt, 0, 5);
  REQUIRE(resumed.step_losses.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(resumed.step_losses[i] == full.step_losses[5 + i]);

  bool identical = true;
  std::vector<Tensor> full_tensors;
  full.params.for_each([&full_tensors](const std::string&, Tensor& t) { full_tensors.push_back(t); });
  std::size_t i = 0;
  resumed.params.for_each([&](const std::string&, Tensor& t) {
    if (std::memcmp(t.values().data(), full_tensors[i++].values().data(), t.size() * sizeof(real)) != 0)
      identical = false;
  });
  CHECK(identical);
}

TEST_CASE("train: constant-lr schedule interacts correctly with resume") {
  // lr depends only on the global step, so cosine must also resume exactly
  TrainConfig cfg = tiny_train(2, 50, 31);
  cfg.lr_schedule = LrSchedule::cosine_warmup;
  for (int step : {0, 10, 70, 99}) CHECK(cfg.lr_at(step) == cfg.lr_at(step));
}

TEST_CASE("validation pool is disjoint from the training stream") {
  PriorConfig prior;
  prior.n_nodes = 24;
  prior.max_classes = 3;
  prior.feature_dim_range = {3, 5};
  const TaskSampler sampler = prior_task_sampler(prior);
  const std::vector<Task> pool = validation_pool(sampler, 37, 8);
  CHECK(pool.size() == 8);
  std::set<std::vector<unsigned char>> pool_bytes;
  for (const Task& t : pool) pool_bytes.insert(serialize_dataset(DatasetFile::from_task(t)));
  for (int epoch = 0; epoch < 2; ++epoch)
    for (int step = 0; step < 3; ++step)
      for (int slot = 0; slot < 2; ++slot) {
        const Task t = sampler(derive_seed(37, {static_cast<uint64_t>(epoch), static_cast<uint64_t>(step),
                                                static_cast<uint64_t>(slot)}));
        CHECK(pool_bytes.count(serialize_dataset(DatasetFile::from_task(t))) == 0);
      }
}

TEST_CASE("short training run reduces loss on a frozen pool") {
  PriorConfig prior;
  prior.n_nodes = 32;
  prior.max_classes = 3;
  prior.feature_dim_range = {3, 5};
  ModelConfig mc = tiny_model();
  TrainConfig cfg = tiny_train(1, 60, 41);
  cfg.batch_size = 4;
  cfg.learning_rate = 2e-3;

  const std::vector<Task> pool = validation_pool(prior_task_sampler(prior), cfg.seed, 16);
  Rng init_rng(derive_seed(cfg.seed, "init"));
  const double before = mean_loss(pool, init_params(mc, init_rng));
  TrainResult result = train(prior, mc, cfg);
  const double after = mean_loss(pool, result.params);
  CHECK(after < before);
}
