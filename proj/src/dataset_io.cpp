#include "nodepfn/dataset_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nodepfn/bytes.hpp"

namespace nodepfn {

namespace {

constexpr char kMagic[4] = {'N', 'P', 'F', 'D'};
constexpr uint32_t kVersion = 1;

std::vector<unsigned char> bitmap_from_ids(const std::vector<int>& ids, int n) {
  std::vector<unsigned char> bits((static_cast<std::size_t>(n) + 7) / 8, 0);
  for (int id : ids) bits[static_cast<std::size_t>(id) / 8] |= static_cast<unsigned char>(1u << (id % 8));
  return bits;
}

std::vector<int> ids_from_bitmap(const std::vector<unsigned char>& bits, int n) {
  std::vector<int> ids;
  for (int i = 0; i < n; ++i)
    if (bits[static_cast<std::size_t>(i) / 8] & (1u << (i % 8))) ids.push_back(i);
  return ids;
}

}  // namespace

uint32_t crc32(const unsigned char* data, std::size_t n) {
  static uint32_t table[256];
  static bool ready = false;
  if (!ready) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    ready = true;
  }
  uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

DatasetFile DatasetFile::from_task(const Task& task, std::string provenance) {
  DatasetFile f;
  f.graph = task.graph;
  f.train_ids = task.train_ids;
  f.test_ids = task.test_ids;
  std::sort(f.train_ids.begin(), f.train_ids.end());
  std::sort(f.test_ids.begin(), f.test_ids.end());
  f.provenance = std::move(provenance);
  return f;
}

std::vector<unsigned char> serialize_dataset(const DatasetFile& data) {
  const Graph& g = data.graph;
  ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<uint32_t>(kVersion);
  w.put<uint32_t>(static_cast<uint32_t>(sizeof(real)));
  w.put<uint64_t>(static_cast<uint64_t>(g.n));
  w.put<uint64_t>(static_cast<uint64_t>(g.feature_dim()));
  w.put<uint64_t>(static_cast<uint64_t>(g.n_classes));
  w.put<uint8_t>(0);  // directed=false, reserved
  if (g.n > 0) w.put_bytes(g.x.values().data(), g.x.size() * sizeof(real));
  for (int label : g.y) w.put<int32_t>(label);
  w.put<uint64_t>(g.edges.size());
  for (const auto& [u, v] : g.edges) {
    w.put<uint32_t>(static_cast<uint32_t>(u));
    w.put<uint32_t>(static_cast<uint32_t>(v));
  }
  const auto train_bits = bitmap_from_ids(data.train_ids, g.n);
  const auto test_bits = bitmap_from_ids(data.test_ids, g.n);
  w.put_bytes(train_bits.data(), train_bits.size());
  w.put_bytes(test_bits.data(), test_bits.size());
  w.put<uint8_t>(data.prediction ? 1 : 0);
  if (data.prediction) {
    const PpdMatrix& p = *data.prediction;
    w.put<uint64_t>(static_cast<uint64_t>(p.probs.rows()));
    w.put<uint64_t>(static_cast<uint64_t>(p.probs.cols()));
    for (int label : p.class_labels) w.put<int32_t>(label);
    w.put_bytes(p.probs.values().data(), p.probs.size() * sizeof(real));
    for (int label : p.argmax_labels()) w.put<int32_t>(label);
  }
  w.put_string(data.provenance);
  return w.take();
}

DatasetFile deserialize_dataset(const std::vector<unsigned char>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) r.reject("magic", "not a dataset file");
  const uint32_t version = r.get<uint32_t>("format_version");
  if (version != kVersion) r.reject("format_version", "unknown version " + std::to_string(version));
  const uint32_t dtype = r.get<uint32_t>("dtype");
  if (dtype != 4 && dtype != 8) r.reject("dtype", "expected 4 or 8");
  const uint64_t n64 = r.get<uint64_t>("n");
  const uint64_t d64 = r.get<uint64_t>("d");
  const uint64_t c64 = r.get<uint64_t>("C");
  if (n64 > (1ull << 31) || d64 > (1ull << 20) || c64 > (1ull << 20)) r.reject("header", "absurd sizes");
  const int n = static_cast<int>(n64), d = static_cast<int>(d64), c = static_cast<int>(c64);
  const uint8_t directed = r.get<uint8_t>("directed");
  if (directed != 0) r.reject("directed", "directed graphs unsupported");

  DatasetFile f;
  Graph& g = f.graph;
  g.n = n;
  g.n_classes = c;
  g.x = Tensor::zeros({n, d});
  if (dtype == sizeof(real)) {
    r.get_bytes(g.x.values_mut().data(), g.x.size() * sizeof(real), "features");
  } else if (dtype == 8) {
    std::vector<double> tmp(g.x.size());
    r.get_bytes(tmp.data(), tmp.size() * sizeof(double), "features");
    for (std::size_t i = 0; i < tmp.size(); ++i) g.x.values_mut()[i] = static_cast<real>(tmp[i]);
  } else {
    std::vector<float> tmp(g.x.size());
    r.get_bytes(tmp.data(), tmp.size() * sizeof(float), "features");
    for (std::size_t i = 0; i < tmp.size(); ++i) g.x.values_mut()[i] = static_cast<real>(tmp[i]);
  }
  ensure_all_finite(g.x.values(), "dataset features");

  g.y.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int32_t label = r.get<int32_t>("labels");
    if (label < -1 || label >= c) r.reject("labels", "label " + std::to_string(label) + " at node " + std::to_string(i));
    g.y[i] = label;
  }
  const uint64_t m = r.get<uint64_t>("edge_count");
  g.edges.reserve(m);
  int prev_u = -1, prev_v = -1;
  for (uint64_t e = 0; e < m; ++e) {
    const int u = static_cast<int>(r.get<uint32_t>("edge.u"));
    const int v = static_cast<int>(r.get<uint32_t>("edge.v"));
    if (u >= v) r.reject("edge", "not in i<j form: (" + std::to_string(u) + "," + std::to_string(v) + ")");
    if (v >= n) r.reject("edge", "endpoint out of range");
    if (std::make_pair(u, v) <= std::make_pair(prev_u, prev_v)) r.reject("edge", "edges not sorted unique");
    prev_u = u;
    prev_v = v;
    g.edges.emplace_back(u, v);
  }

  const std::size_t bitmap_len = (static_cast<std::size_t>(n) + 7) / 8;
  std::vector<unsigned char> train_bits(bitmap_len), test_bits(bitmap_len);
  r.get_bytes(train_bits.data(), bitmap_len, "train_mask");
  r.get_bytes(test_bits.data(), bitmap_len, "test_mask");
  for (int i = 0; i < n; ++i) {
    const bool in_train = train_bits[static_cast<std::size_t>(i) / 8] & (1u << (i % 8));
    const bool in_test = test_bits[static_cast<std::size_t>(i) / 8] & (1u << (i % 8));
    if (in_train && in_test) r.reject("masks", "train/test overlap at node " + std::to_string(i));
    if (!in_train && !in_test) r.reject("masks", "node " + std::to_string(i) + " in neither mask");
    if (in_train && g.y[i] < 0) r.reject("masks", "train node " + std::to_string(i) + " lacks a label");
  }
  f.train_ids = ids_from_bitmap(train_bits, n);
  f.test_ids = ids_from_bitmap(test_bits, n);
  if (f.train_ids.empty()) r.reject("masks", "empty train mask");

  if (r.get<uint8_t>("has_prediction")) {
    PpdMatrix p;
    const uint64_t rows = r.get<uint64_t>("prediction.rows");
    const uint64_t cols = r.get<uint64_t>("prediction.cols");
    if (rows != f.test_ids.size()) r.reject("prediction.rows", "does not match test mask count");
    if (cols == 0 || cols > (1u << 20)) r.reject("prediction.cols", "absurd class count");
    p.class_labels.resize(cols);
    for (uint64_t i = 0; i < cols; ++i) p.class_labels[i] = r.get<int32_t>("prediction.class_labels");
    p.probs = Tensor::zeros({static_cast<int>(rows), static_cast<int>(cols)});
    if (dtype == sizeof(real)) {
      r.get_bytes(p.probs.values_mut().data(), p.probs.size() * sizeof(real), "prediction.probs");
    } else if (dtype == 8) {
      std::vector<double> tmp(p.probs.size());
      r.get_bytes(tmp.data(), tmp.size() * sizeof(double), "prediction.probs");
      for (std::size_t i = 0; i < tmp.size(); ++i) p.probs.values_mut()[i] = static_cast<real>(tmp[i]);
    } else {
      std::vector<float> tmp(p.probs.size());
      r.get_bytes(tmp.data(), tmp.size() * sizeof(float), "prediction.probs");
      for (std::size_t i = 0; i < tmp.size(); ++i) p.probs.values_mut()[i] = static_cast<real>(tmp[i]);
    }
    for (uint64_t i = 0; i < rows; ++i) r.get<int32_t>("prediction.argmax");  // derived, re-computed on demand
    f.prediction = std::move(p);
  }
  f.provenance = r.get_string("provenance");
  if (!r.exhausted()) r.reject("trailer", "unexpected trailing bytes");
  return f;
}

void atomic_write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open for writing: " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ValidationError("rename failed for " + path + ": " + ec.message());
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw ValidationError("cannot open: " + path);
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw ValidationError("read failed: " + path);
  return bytes;
}

void save_dataset(const DatasetFile& data, const std::string& path) {
  atomic_write_file(path, serialize_dataset(data));
}

DatasetFile load_dataset(const std::string& path) {
  return deserialize_dataset(read_file_bytes(path));
}

}  // namespace nodepfn
