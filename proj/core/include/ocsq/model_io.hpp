#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ocsq/graph.hpp"
#include "ocsq/ocs.hpp"
#include "ocsq/tensor.hpp"

namespace ocsq {

inline constexpr int kFormatVersion = 1;

// .qnt container: UTF-8 JSON header, a NUL byte, then a contiguous
// little-endian blob. Tensors are 32-bit floats unless the header marks an
// entry "f64".

enum class Dtype { f32, f64 };

struct StoredTensor {
  Tensor value;
  Dtype dtype = Dtype::f32;
};

/// Named tensors plus a free-form JSON metadata object (serialized text).
struct TensorFile {
  std::map<std::string, StoredTensor> tensors;
  std::string metadata_json = "{}";
};

std::vector<std::byte> serialize_tensors(const TensorFile& file);
TensorFile parse_tensors(std::span<const std::byte> bytes);
void save_tensors(const TensorFile& file, const std::filesystem::path& path);
TensorFile load_tensors(const std::filesystem::path& path);

std::vector<std::byte> serialize_model(const ModelGraph& model, const std::string& metadata_json = "{}");
ModelGraph parse_model(std::span<const std::byte> bytes);
void save_model(const ModelGraph& model, const std::filesystem::path& path, const std::string& metadata_json = "{}");
ModelGraph load_model(const std::filesystem::path& path);

/// Metadata object stored in a .qnt header (serialized JSON text).
std::string read_metadata(const std::filesystem::path& path);

// --- datasets ----------------------------------------------------------------

enum class SplitRole : int { profile = 0, eval = 1 };

/// Stored as tensors "inputs" [N, ...], optional "labels" [N] and "split" [N]
/// (0 = profiling, 1 = evaluation).
struct Dataset {
  std::vector<Tensor> inputs;
  std::vector<int> labels;  // empty when the set is unlabeled
  std::vector<SplitRole> split;
  std::string metadata_json = "{}";

  std::vector<std::size_t> indices(SplitRole role) const;
};

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// --- split plans -------------------------------------------------------------

/// {"ratio": r, "target": "...", "qa": bool, "records": [{"layer", "source", "new"}]}
std::string split_plan_to_json(const SplitPlan& plan);
SplitPlan split_plan_from_json(const std::string& text);
void save_split_plan(const SplitPlan& plan, const std::filesystem::path& path);
SplitPlan load_split_plan(const std::filesystem::path& path);

// --- reports -----------------------------------------------------------------

struct ReportRow {
  std::string model;
  std::string target;
  int bits = 8;
  std::string clip_method;
  double ocs_ratio = 0.0;
  bool qa = false;
  double accuracy_or_mse = 0.0;
  double rel_weight_size = 1.0;
  double rel_act_size = 1.0;
};

std::string format_report(std::span<const ReportRow> rows);
void save_report(std::span<const ReportRow> rows, const std::filesystem::path& path);

}  // namespace ocsq
