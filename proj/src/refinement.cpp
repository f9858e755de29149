#include "nse/refinement.hpp"

#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "nse/errors.hpp"
#include "nse/solvers.hpp"

namespace nse {

RetainSet RetainSet::from_original(const Matrix& C0) {
  RetainSet out;
  out.concepts = C0;
  out.provenance.reserve(static_cast<std::size_t>(C0.cols()));
  for (Eigen::Index j = 0; j < C0.cols(); ++j) {
    out.provenance.push_back({Provenance::Kind::original, static_cast<std::size_t>(j), 0});
  }
  return out;
}

RetainSet RetainSet::select(const std::vector<std::size_t>& indices) const {
  RetainSet out;
  out.concepts.resize(concepts.rows(), static_cast<Eigen::Index>(indices.size()));
  out.provenance.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.concepts.col(static_cast<Eigen::Index>(i)) = concepts.col(static_cast<Eigen::Index>(indices[i]));
    out.provenance.push_back(provenance.at(indices[i]));
  }
  return out;
}

RetainSet RetainSet::concat(const RetainSet& other) const {
  if (size() > 0 && other.size() > 0 && concepts.rows() != other.concepts.rows()) {
    throw ValidationError("cannot concatenate retain sets of different dimension");
  }
  RetainSet out;
  const Eigen::Index rows = size() > 0 ? concepts.rows() : other.concepts.rows();
  out.concepts.resize(rows, concepts.cols() + other.concepts.cols());
  out.concepts << concepts, other.concepts;
  out.provenance = provenance;
  out.provenance.insert(out.provenance.end(), other.provenance.begin(), other.provenance.end());
  return out;
}

std::pair<RetainSet, ShiftReport> ipf_filter(const RetainSet& R, const EditDelta& delta_erase, double filter_scale) {
  if (!(filter_scale > 0.0)) throw ValidationError("filter_scale must be positive");
  ShiftReport report;
  const std::size_t n = R.size();
  if (n == 0) return {R, report};
  if (R.concepts.rows() != delta_erase.delta.cols()) {
    throw ValidationError(fmt::format("retain set has dimension {}, erase update expects {}", R.concepts.rows(),
                                      delta_erase.delta.cols()));
  }

  const Matrix mapped = delta_erase.delta * R.concepts;
  report.shifts.resize(n);
  // Extended-precision accumulation keeps the mean of equal shifts equal to them.
  long double sum = 0.0L;
  for (std::size_t j = 0; j < n; ++j) {
    report.shifts[j] = mapped.col(static_cast<Eigen::Index>(j)).squaredNorm();
    sum += report.shifts[j];
  }
  report.mu = static_cast<double>(sum / static_cast<long double>(n));
  report.threshold = filter_scale * report.mu;
  for (std::size_t j = 0; j < n; ++j) {
    if (report.shifts[j] > report.threshold) report.kept_indices.push_back(j);
  }
  return {R.select(report.kept_indices), report};
}

Vector gaussian_draw(std::uint64_t seed, std::size_t parent, std::size_t draw, Eigen::Index d0) {
  const auto p = static_cast<std::uint64_t>(parent);
  const auto k = static_cast<std::uint64_t>(draw);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(p),    static_cast<std::uint32_t>(p >> 32),
                    static_cast<std::uint32_t>(k),    static_cast<std::uint32_t>(k >> 32)};
  std::mt19937_64 gen(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector eps(d0);
  for (Eigen::Index i = 0; i < d0; ++i) eps(i) = normal(gen);
  return eps;
}

RetainSet dpa_augment(const RetainSet& R, const Projector& P_min, std::size_t n_aug, std::uint64_t seed) {
  if (P_min.kind != ProjectorKind::least_variation) {
    throw ValidationError("directed augmentation needs a least-variation projector");
  }
  const Eigen::Index d0 = P_min.dim();
  RetainSet out;
  out.concepts.resize(d0, static_cast<Eigen::Index>(R.size() * n_aug));
  if (R.size() == 0 || n_aug == 0) return out;
  if (R.concepts.rows() != d0) {
    throw ValidationError(
        fmt::format("retain set has dimension {}, projector is {}x{}", R.concepts.rows(), d0, d0));
  }

  out.provenance.reserve(R.size() * n_aug);
  Eigen::Index col = 0;
  for (std::size_t j = 0; j < R.size(); ++j) {
    const std::size_t parent = R.provenance[j].parent;
    for (std::size_t k = 0; k < n_aug; ++k) {
      const Vector eps = gaussian_draw(seed, parent, k, d0);
      const Vector noise = P_min.basis.cols() > 0 ? Vector(P_min.basis * (P_min.basis.transpose() * eps))
                                                  : Vector(P_min.P * eps);
      out.concepts.col(col++) = R.concepts.col(static_cast<Eigen::Index>(j)) + noise;
      out.provenance.push_back({Provenance::Kind::augmented, parent, k});
    }
  }
  return out;
}

ConceptMatrix build_invariants(const Vector& sot, const Vector& null_text) {
  if (sot.size() != null_text.size()) {
    throw ValidationError(
        fmt::format("invariant embeddings differ in length: [SOT] has {}, null-text has {}", sot.size(), null_text.size()));
  }
  std::vector<const Vector*> kept;
  for (const Vector* v : {&sot, &null_text}) {
    if (v->norm() == 0.0) {
      spdlog::warn("dropping an all-zero invariant embedding (it constrains nothing)");
      continue;
    }
    kept.push_back(v);
  }
  if (kept.size() == 2) {
    const double cosine = sot.dot(null_text) / (sot.norm() * null_text.norm());
    if (cosine > 1.0 - 1e-9) {
      spdlog::warn("[SOT] and null-text embeddings coincide (cosine {:.12f}); keeping one invariant column", cosine);
      kept.pop_back();
    }
  }
  ConceptMatrix out{Matrix(sot.size(), static_cast<Eigen::Index>(kept.size())), ConceptRole::invariant};
  for (std::size_t i = 0; i < kept.size(); ++i) out.embeddings.col(static_cast<Eigen::Index>(i)) = *kept[i];
  return out;
}

RefineResult refine_pipeline(const RetainSet& R, const LayerWeights& layer, const ConceptMatrix& C1,
                             const ConceptMatrix& C_star, const Hyperparams& hp) {
  hp.validate();
  RefineResult out;
  const EditDelta delta_erase = solve_erase_only(layer, C1, C_star);
  auto [filtered, report] = ipf_filter(R, delta_erase, hp.filter_scale);
  out.filtered = std::move(filtered);
  out.original_report = std::move(report);

  if (hp.n_aug == 0 || out.filtered.size() == 0) {
    out.refined = out.filtered;
    return out;
  }
  const Projector P_min = least_variation_projector(layer.W, hp.r);
  const RetainSet augmented = dpa_augment(out.filtered, P_min, hp.n_aug, hp.seed);
  out.augmented_total = augmented.size();
  auto [kept_aug, aug_report] = ipf_filter(augmented, delta_erase, hp.filter_scale);
  out.augmented_report = std::move(aug_report);
  out.refined = out.filtered.concat(kept_aug);
  return out;
}

}  // namespace nse
