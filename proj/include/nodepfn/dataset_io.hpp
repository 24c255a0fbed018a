#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nodepfn/graph.hpp"
#include "nodepfn/inference.hpp"

namespace nodepfn {

// On-disk dataset: header {version, dtype, n, d, C, directed}, feature block,
// label block (-1 = unknown), canonical edge block, train/test bitmaps, an
// optional prediction block and a provenance string. Little-endian throughout,
// fixed-width header fields; the feature dtype always matches the build's
// `real`. Loaders validate every invariant and report field + byte offset.
struct DatasetFile {
  Graph graph;
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  std::optional<PpdMatrix> prediction;
  std::string provenance;  // JSON text, may be empty

  Task to_task() const { return Task{graph, train_ids, test_ids}; }
  static DatasetFile from_task(const Task& task, std::string provenance = {});
};

std::vector<unsigned char> serialize_dataset(const DatasetFile& data);
DatasetFile deserialize_dataset(const std::vector<unsigned char>& bytes);

void save_dataset(const DatasetFile& data, const std::string& path);  // atomic (temp + rename)
DatasetFile load_dataset(const std::string& path);

// Atomic byte-level file helpers shared by all writers.
void atomic_write_file(const std::string& path, const std::vector<unsigned char>& bytes);
std::vector<unsigned char> read_file_bytes(const std::string& path);

}  // namespace nodepfn
