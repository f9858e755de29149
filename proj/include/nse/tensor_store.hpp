#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nse/types.hpp"

namespace nse {

enum class DType { f32, f64 };

std::size_t dtype_width(DType dtype);
/// NPY descriptor string, e.g. "<f8".
const char* dtype_descr(DType dtype);

/// A dense matrix as it lives on disk. Values are held widened to double;
/// an f32 record holds only f32-representable values.
struct MatrixRecord {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  DType dtype = DType::f64;
  std::vector<double> data;  // row-major

  /// Throws ValidationError unless rows*cols == data.size() and every value is finite.
  void validate() const;

  Matrix to_matrix() const;
  static MatrixRecord from_matrix(std::string name, const Matrix& m, DType dtype = DType::f64);
};

/// Read an NPY v1.0 file (little-endian <f4/<f8, C order, 1-D or 2-D).
/// A 1-D array of length n is read as an n x 1 column.
MatrixRecord read_matrix(const std::filesystem::path& path);

void write_matrix(const MatrixRecord& record, const std::filesystem::path& path);

// Convenience wrappers over Eigen matrices.
Matrix read_eigen(const std::filesystem::path& path);
void write_eigen(const Matrix& m, const std::filesystem::path& path, DType dtype = DType::f64);

struct LayerEntry {
  std::string id;
  std::filesystem::path path;
};

/// The parsed manifest before any matrix is loaded. Paths are resolved
/// against the manifest's directory.
struct TaskManifest {
  std::vector<LayerEntry> layers;
  std::filesystem::path erase;
  std::filesystem::path anchor;
  std::filesystem::path retain;
  std::filesystem::path invariants;  // empty when absent
  Hyperparams hp;
  std::uint64_t seed = 0;
};

TaskManifest parse_manifest(const std::filesystem::path& manifest_path);

/// Parse the manifest, load every matrix and validate all dimension rules.
EraseTask load_task(const std::filesystem::path& manifest_path);

/// Write every matrix of `task` into `dir` plus a manifest.json referencing them.
/// Returns the manifest path.
std::filesystem::path save_task(const EraseTask& task, const std::filesystem::path& dir,
                                DType dtype = DType::f64);

/// File-name-safe form of a layer id.
std::string sanitize_id(const std::string& layer_id);

}  // namespace nse
