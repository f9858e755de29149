#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "nse/linalg.hpp"
#include "nse/types.hpp"

namespace nse {

/// Where a retained column came from. `parent` always indexes the caller's
/// original retain matrix; `draw` is the augmentation draw (0 for originals).
struct Provenance {
  enum class Kind { original, augmented };
  Kind kind = Kind::original;
  std::size_t parent = 0;
  std::size_t draw = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct RetainSet {
  Matrix concepts;  // d0 x N
  std::vector<Provenance> provenance;

  static RetainSet from_original(const Matrix& C0);

  std::size_t size() const { return provenance.size(); }
  /// Keep the listed columns, in the given order.
  RetainSet select(const std::vector<std::size_t>& indices) const;
  /// Columns of *this followed by the columns of `other`.
  RetainSet concat(const RetainSet& other) const;
};

struct ShiftReport {
  std::vector<double> shifts;  // prior shift of every input column
  double mu = 0.0;             // mean shift, 0 for an empty input
  double threshold = 0.0;      // filter_scale * mu
  std::vector<std::size_t> kept_indices;
};

/// Influence-based filtering: keep the columns whose prior shift under
/// `delta_erase` is strictly above filter_scale times the mean shift.
std::pair<RetainSet, ShiftReport> ipf_filter(const RetainSet& R, const EditDelta& delta_erase, double filter_scale);

/// Directed augmentation: for every column c and k < n_aug emit c + P_min eps,
/// eps ~ N(0, I) drawn from a stream keyed by (seed, parent, k).
RetainSet dpa_augment(const RetainSet& R, const Projector& P_min, std::size_t n_aug, std::uint64_t seed);

/// The d0-dimensional standard normal vector used for (seed, parent, draw).
Vector gaussian_draw(std::uint64_t seed, std::size_t parent, std::size_t draw, Eigen::Index d0);

/// Stack the [SOT] and null-text embeddings as invariant columns. Zero vectors
/// are dropped and near-duplicates (cosine > 1 - 1e-9) collapsed, each with a warning.
ConceptMatrix build_invariants(const Vector& sot, const Vector& null_text);

struct RefineResult {
  RetainSet refined;             // R_f followed by the filtered augmentations
  RetainSet filtered;            // R_f
  ShiftReport original_report;   // IPF on R
  ShiftReport augmented_report;  // IPF on the augmentations (empty when n_aug == 0)
  std::size_t augmented_total = 0;
};

/// Erase-only update, IPF, DPA on the survivors, IPF again, union.
RefineResult refine_pipeline(const RetainSet& R, const LayerWeights& layer, const ConceptMatrix& C1,
                             const ConceptMatrix& C_star, const Hyperparams& hp);

}  // namespace nse
