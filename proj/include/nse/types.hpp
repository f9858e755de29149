#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace nse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ConceptRole { erase, anchor, retain, invariant };

std::string_view to_string(ConceptRole role);

/// Concept embeddings stacked as columns (d0 x N).
struct ConceptMatrix {
  Matrix embeddings;
  ConceptRole role = ConceptRole::retain;

  ConceptMatrix() = default;
  ConceptMatrix(Matrix m, ConceptRole r) : embeddings(std::move(m)), role(r) {}

  Eigen::Index dim() const { return embeddings.rows(); }
  Eigen::Index count() const { return embeddings.cols(); }
};

/// One editable projection matrix W (d_v x d0).
struct LayerWeights {
  std::string layer_id;
  Matrix W;
};

/// Solver and refinement knobs. Defaults follow the engine's documented presets.
struct Hyperparams {
  double alpha = 1.0;         // erasure weight (UCE)
  double beta = 1.0;          // preservation weight (UCE)
  double lambda_reg = 1.0;    // Tikhonov term (UCE)
  double svd_tol = 1e-4;      // null-space cutoff on singular values of C0 C0^T
  std::size_t r = 1;          // augmentation ranks
  std::size_t n_aug = 10;     // augmentation draws per retained concept
  double filter_scale = 1.0;  // multiplier on the mean prior shift
  double lambda_inv = 0.0;    // ridge on the invariant Gram matrix
  std::uint64_t seed = 0;

  /// Throws ValidationError when a field is out of range.
  void validate() const;

  /// Set a field by name from its textual value; unknown names throw ValidationError.
  void set(std::string_view key, std::string_view value);

  static const std::vector<std::string>& field_names();
};

struct EraseTask {
  std::vector<LayerWeights> layers;
  ConceptMatrix C1;      // erase set
  ConceptMatrix C_star;  // anchors, one per erased concept
  ConceptMatrix C0;      // retain set
  ConceptMatrix C2;      // invariants, possibly zero columns
  Hyperparams hp;

  Eigen::Index d0() const { return C1.dim(); }

  /// Enforces every cross-matrix dimension rule; throws ValidationError.
  void validate() const;
};

struct Diagnostics {
  double e1 = 0.0;
  double e0 = 0.0;
  double invariant_residual = 0.0;
  std::chrono::duration<double> solve_wall_time{0.0};
};

/// The update added to a layer's weights, plus how well it did.
struct EditDelta {
  std::string layer_id;
  Matrix delta;
  Diagnostics diagnostics;
};

bool all_finite(const Matrix& m);

}  // namespace nse
