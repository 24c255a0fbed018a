#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "nodepfn/checkpoint.hpp"
#include "nodepfn/dataset_io.hpp"
#include "nodepfn/prior.hpp"
#include "test_support.hpp"

using namespace nodepfn;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / ("nodepfn_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("dataset: save(load(f)) reproduces the bytes exactly") {
  PriorConfig cfg;
  cfg.n_nodes = 64;
  cfg.max_classes = 4;
  cfg.feature_dim_range = {3, 6};
  const Task task = task_for_seed(cfg, 5);
  DatasetFile data = DatasetFile::from_task(task, "{\"origin\":\"test\"}");

  const std::vector<unsigned char> bytes = serialize_dataset(data);
  const DatasetFile loaded = deserialize_dataset(bytes);
  CHECK(serialize_dataset(loaded) == bytes);
  CHECK(loaded.provenance == "{\"origin\":\"test\"}");
  CHECK(loaded.graph.n == task.graph.n);
  CHECK(loaded.train_ids == data.train_ids);
}

TEST_CASE("dataset: file round trip through disk") {
  TempDir tmp;
  PriorConfig cfg;
  cfg.n_nodes = 32;
  cfg.max_classes = 3;
  cfg.feature_dim_range = {3, 4};
  const Task task = task_for_seed(cfg, 7);
  save_dataset(DatasetFile::from_task(task), tmp.file("t.npfd"));
  const DatasetFile loaded = load_dataset(tmp.file("t.npfd"));
  const Task back = loaded.to_task();
  back.validate();
  CHECK(back.graph.edges == task.graph.edges);
  CHECK(back.graph.y == task.graph.y);
}

TEST_CASE("dataset: homophily preserved through a 1024-node round trip") {
  PriorConfig cfg;  // defaults: 1024 nodes
  cfg.er_fraction = 0.0;
  const Task task = task_for_seed(cfg, 11);
  const double before = edge_homophily(task.graph);
  const DatasetFile loaded = deserialize_dataset(serialize_dataset(DatasetFile::from_task(task)));
  CHECK(std::abs(edge_homophily(loaded.graph) - before) < 1e-12);
}

TEST_CASE("dataset: overlapping masks rejected with a mask error") {
  PriorConfig cfg;
  cfg.n_nodes = 16;
  cfg.max_classes = 2;
  cfg.feature_dim_range = {3, 3};
  Task task = task_for_seed(cfg, 13);
  DatasetFile data = DatasetFile::from_task(task);
  data.train_ids.push_back(data.test_ids.front());  // overlap
  const std::vector<unsigned char> bytes = serialize_dataset(data);
  bool threw = false;
  try {
    deserialize_dataset(bytes);
  } catch (const ValidationError& e) {
    threw = true;
    CHECK(std::string(e.what()).find("overlap") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("dataset: unknown version and truncation rejected with offsets") {
  PriorConfig cfg;
  cfg.n_nodes = 8;
  cfg.max_classes = 2;
  cfg.feature_dim_range = {3, 3};
  std::vector<unsigned char> bytes = serialize_dataset(DatasetFile::from_task(task_for_seed(cfg, 17)));
  std::vector<unsigned char> bad_version = bytes;
  bad_version[4] = 9;  // format_version field
  CHECK_THROWS_AS(deserialize_dataset(bad_version), ValidationError);

  std::vector<unsigned char> truncated(bytes.begin(), bytes.begin() + 40);
  bool threw = false;
  try {
    deserialize_dataset(truncated);
  } catch (const ValidationError& e) {
    threw = true;
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("dataset: prediction block round trips") {
  PriorConfig cfg;
  cfg.n_nodes = 20;
  cfg.max_classes = 3;
  cfg.feature_dim_range = {3, 3};
  const Task task = task_for_seed(cfg, 19);
  DatasetFile data = DatasetFile::from_task(task);
  PpdMatrix ppd;
  const int n_test = static_cast<int>(data.test_ids.size());
  ppd.probs = Tensor::zeros({n_test, 3});
  for (int i = 0; i < n_test; ++i) {
    ppd.probs(i, 0) = real(0.2);
    ppd.probs(i, 1) = real(0.5);
    ppd.probs(i, 2) = real(0.3);
  }
  ppd.class_labels = {0, 1, 2};
  data.prediction = ppd;
  const std::vector<unsigned char> bytes = serialize_dataset(data);
  const DatasetFile loaded = deserialize_dataset(bytes);
  REQUIRE(loaded.prediction.has_value());
  CHECK(max_abs_diff(loaded.prediction->probs, ppd.probs) == doctest::Approx(0.0));
  CHECK(loaded.prediction->class_labels == ppd.class_labels);
  CHECK(serialize_dataset(loaded) == bytes);
}

TEST_CASE("checkpoint: byte-stable round trip with optimizer state") {
  ModelConfig mc;
  mc.d_embed = 16;
  mc.n_layers = 2;
  mc.n_heads = 4;
  mc.d_feat_max = 5;
  mc.max_classes = 3;
  Rng rng(23);
  Checkpoint ckpt;
  ckpt.params = init_params(mc, rng);
  OptimizerState opt = OptimizerState::init(ckpt.params);
  opt.step_count = 17;
  for (auto& slot : opt.slots)
    for (real& v : slot.m.values_mut()) v = real(0.25);
  ckpt.optimizer = std::move(opt);
  ckpt.next_epoch = 1;
  ckpt.next_step = 9;
  ckpt.train_seed = 998877;
  ckpt.provenance = "{\"run\":1}";

  const std::vector<unsigned char> bytes = serialize_checkpoint(ckpt);
  Checkpoint loaded = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(loaded) == bytes);  // loading then saving is identity
  CHECK(loaded.next_epoch == 1);
  CHECK(loaded.next_step == 9);
  CHECK(loaded.train_seed == 998877);
  REQUIRE(loaded.optimizer.has_value());
  CHECK(loaded.optimizer->step_count == 17);
  CHECK(loaded.optimizer->slots.front().m.values()[0] == real(0.25));

  bool same = true;
  std::vector<Tensor> original;
  ckpt.params.for_each([&original](const std::string&, Tensor& t) { original.push_back(t); });
  std::size_t i = 0;
  loaded.params.for_each([&](const std::string&, Tensor& t) {
    if (max_abs_diff(t, original[i++]) != 0) same = false;
  });
  CHECK(same);
}

TEST_CASE("checkpoint: corruption is caught by the checksum") {
  ModelConfig mc;
  mc.d_embed = 8;
  mc.n_layers = 1;
  mc.n_heads = 2;
  mc.d_feat_max = 4;
  mc.max_classes = 2;
  Rng rng(29);
  Checkpoint ckpt;
  ckpt.params = init_params(mc, rng);
  std::vector<unsigned char> bytes = serialize_checkpoint(ckpt);
  bytes[bytes.size() / 2] ^= 0xFF;
  CHECK_THROWS_AS(deserialize_checkpoint(bytes), ValidationError);
}

TEST_CASE("checkpoint: file round trip and atomic write") {
  TempDir tmp;
  ModelConfig mc;
  mc.d_embed = 8;
  mc.n_layers = 1;
  mc.n_heads = 2;
  mc.d_feat_max = 4;
  mc.max_classes = 2;
  Rng rng(31);
  Checkpoint ckpt;
  ckpt.params = init_params(mc, rng);
  save_checkpoint(ckpt, tmp.file("model.npfc"));
  CHECK(!std::filesystem::exists(tmp.file("model.npfc") + ".tmp"));
  const Checkpoint loaded = load_checkpoint(tmp.file("model.npfc"));
  CHECK(serialize_checkpoint(loaded) == serialize_checkpoint(ckpt));
}

TEST_CASE("checkpoint: byte-stable under fixed params across saves") {
  ModelConfig mc;
  mc.d_embed = 8;
  mc.n_layers = 1;
  mc.n_heads = 2;
  mc.d_feat_max = 4;
  mc.max_classes = 2;
  Rng rng(37);
  Checkpoint ckpt;
  ckpt.params = init_params(mc, rng);
  CHECK(serialize_checkpoint(ckpt) == serialize_checkpoint(ckpt));
}
