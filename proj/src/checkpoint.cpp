#include "nodepfn/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <map>

#include "nodepfn/bytes.hpp"
#include "nodepfn/dataset_io.hpp"

namespace nodepfn {

namespace {

constexpr char kMagic[4] = {'N', 'P', 'F', 'C'};
constexpr uint32_t kVersion = 1;

void put_tensor_values(ByteWriter& w, const Tensor& t) {
  w.put<uint64_t>(t.size());
  w.put_bytes(t.values().data(), t.size() * sizeof(real));
}

std::vector<real> get_tensor_values(ByteReader& r, const char* field) {
  const uint64_t n = r.get<uint64_t>(field);
  if (n > (1ull << 32)) r.reject(field, "absurd tensor size");
  std::vector<real> values(static_cast<std::size_t>(n));
  r.get_bytes(values.data(), values.size() * sizeof(real), field);
  return values;
}

void put_config(ByteWriter& w, const ModelConfig& cfg) {
  w.put<int32_t>(cfg.d_embed);
  w.put<int32_t>(cfg.n_layers);
  w.put<int32_t>(cfg.n_heads);
  w.put<double>(cfg.dropout);
  w.put<int32_t>(cfg.d_feat_max);
  w.put<int32_t>(cfg.max_classes);
  w.put<uint8_t>(cfg.fusion_mode == FusionMode::sequential ? 1 : 0);
  w.put<uint8_t>(cfg.mpnn_enabled ? 1 : 0);
  w.put<uint8_t>(cfg.ffn_enabled ? 1 : 0);
  w.put<uint8_t>(cfg.adjacency_self_loops ? 1 : 0);
}

ModelConfig get_config(ByteReader& r) {
  ModelConfig cfg;
  cfg.d_embed = r.get<int32_t>("config.d_embed");
  cfg.n_layers = r.get<int32_t>("config.n_layers");
  cfg.n_heads = r.get<int32_t>("config.n_heads");
  cfg.dropout = r.get<double>("config.dropout");
  cfg.d_feat_max = r.get<int32_t>("config.d_feat_max");
  cfg.max_classes = r.get<int32_t>("config.max_classes");
  cfg.fusion_mode = r.get<uint8_t>("config.fusion_mode") ? FusionMode::sequential : FusionMode::parallel;
  cfg.mpnn_enabled = r.get<uint8_t>("config.mpnn_enabled") != 0;
  cfg.ffn_enabled = r.get<uint8_t>("config.ffn_enabled") != 0;
  cfg.adjacency_self_loops = r.get<uint8_t>("config.self_loops") != 0;
  cfg.validate();
  return cfg;
}

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<uint32_t>(kVersion);
  w.put<uint32_t>(static_cast<uint32_t>(sizeof(real)));
  put_config(w, ckpt.params.config);

  uint64_t count = 0;
  ckpt.params.for_each([&count](const std::string&, const Tensor&) { ++count; });
  w.put<uint64_t>(count);
  ckpt.params.for_each([&w](const std::string& name, const Tensor& t) {
    w.put_string(name);
    w.put<uint32_t>(static_cast<uint32_t>(t.shape().size()));
    for (int dim : t.shape()) w.put<int64_t>(dim);
    put_tensor_values(w, t);
  });

  w.put<uint8_t>(ckpt.optimizer ? 1 : 0);
  if (ckpt.optimizer) {
    const OptimizerState& st = *ckpt.optimizer;
    w.put<int64_t>(st.step_count);
    w.put<int64_t>(st.skipped_steps);
    w.put<uint64_t>(st.slots.size());
    for (const auto& slot : st.slots) {
      put_tensor_values(w, slot.m);
      put_tensor_values(w, slot.v);
    }
  }
  w.put<int32_t>(ckpt.next_epoch);
  w.put<int32_t>(ckpt.next_step);
  w.put<uint64_t>(ckpt.train_seed);
  w.put_string(ckpt.provenance);
  const uint32_t checksum = crc32(w.bytes().data(), w.size());
  w.put<uint32_t>(checksum);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8) throw ValidationError("checkpoint: file too small");
  const uint32_t stored = [&] {
    uint32_t v;
    std::memcpy(&v, bytes.data() + bytes.size() - 4, 4);
    return v;
  }();
  if (crc32(bytes.data(), bytes.size() - 4) != stored)
    throw ValidationError("checkpoint: checksum mismatch (corrupt file)");

  ByteReader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) r.reject("magic", "not a checkpoint file");
  const uint32_t version = r.get<uint32_t>("format_version");
  if (version != kVersion) r.reject("format_version", "unknown version " + std::to_string(version));
  const uint32_t dtype = r.get<uint32_t>("dtype");
  if (dtype != sizeof(real))
    r.reject("dtype", "checkpoint precision (" + std::to_string(dtype * 8) +
                          "-bit) does not match this build (" + std::to_string(sizeof(real) * 8) + "-bit)");

  Checkpoint ckpt;
  const ModelConfig cfg = get_config(r);

  const uint64_t count = r.get<uint64_t>("tensor_count");
  std::map<std::string, Tensor> table;
  for (uint64_t i = 0; i < count; ++i) {
    const std::string name = r.get_string("tensor.name");
    const uint32_t rank = r.get<uint32_t>("tensor.rank");
    if (rank > 4) r.reject("tensor.rank", "absurd rank");
    std::vector<int> shape;
    for (uint32_t j = 0; j < rank; ++j) shape.push_back(static_cast<int>(r.get<int64_t>("tensor.dim")));
    std::vector<real> values = get_tensor_values(r, "tensor.values");
    Tensor t = Tensor::from(shape, std::move(values), true);
    if (!table.emplace(name, t).second) r.reject("tensor.name", "duplicate tensor " + name);
  }

  // rebuild the parameter skeleton and fill by name
  Rng stub(0);
  ckpt.params = init_params(cfg, stub);
  std::size_t matched = 0;
  ckpt.params.for_each([&table, &matched](const std::string& name, Tensor& t) {
    auto it = table.find(name);
    if (it == table.end()) throw ValidationError("checkpoint: missing tensor " + name);
    if (it->second.shape() != t.shape()) throw ValidationError("checkpoint: shape mismatch for " + name);
    t = it->second;
    ++matched;
  });
  if (matched != table.size()) throw ValidationError("checkpoint: unexpected extra tensors in table");
  ckpt.params.for_each([](const std::string& name, Tensor& t) {
    ensure_all_finite(t.values(), ("checkpoint tensor " + name).c_str());
  });

  if (r.get<uint8_t>("has_optimizer")) {
    OptimizerState st = OptimizerState::init(ckpt.params);
    st.step_count = r.get<int64_t>("optimizer.step_count");
    st.skipped_steps = r.get<int64_t>("optimizer.skipped_steps");
    const uint64_t slots = r.get<uint64_t>("optimizer.slots");
    if (slots != st.slots.size()) r.reject("optimizer.slots", "slot count mismatch");
    for (auto& slot : st.slots) {
      std::vector<real> m = get_tensor_values(r, "optimizer.m");
      std::vector<real> v = get_tensor_values(r, "optimizer.v");
      if (m.size() != slot.m.size() || v.size() != slot.v.size())
        r.reject("optimizer", "moment size mismatch");
      std::copy(m.begin(), m.end(), slot.m.values_mut().begin());
      std::copy(v.begin(), v.end(), slot.v.values_mut().begin());
    }
    ckpt.optimizer = std::move(st);
  }
  ckpt.next_epoch = r.get<int32_t>("position.epoch");
  ckpt.next_step = r.get<int32_t>("position.step");
  ckpt.train_seed = r.get<uint64_t>("position.train_seed");
  ckpt.provenance = r.get_string("provenance");
  r.get<uint32_t>("checksum");
  if (!r.exhausted()) r.reject("trailer", "unexpected trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  atomic_write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(read_file_bytes(path));
}

}  // namespace nodepfn
