#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <vector>

#include "nse/linalg.hpp"
#include "nse/refinement.hpp"
#include "nse/types.hpp"

namespace nse {

struct EditOptions {
  bool refine = true;                       // run IPF + DPA to build the retain set
  std::size_t threads = 1;                  // layer-level workers
  std::optional<std::size_t> approx_null;   // full-rank fallback, see null_space_projector
};

struct LayerResult {
  EditDelta delta;
  LayerWeights edited;
  std::size_t retain_columns = 0;  // columns of the refined retain set
  std::size_t null_dim = 0;
  NullSpaceStatus null_status = NullSpaceStatus::exact;
};

struct EditResult {
  std::vector<LayerResult> layers;  // same order as task.layers
  std::chrono::duration<double> wall_time{0.0};

  double total_e1() const;
  double max_e0() const;
  double max_invariant_residual() const;
};

/// Edit one layer end to end: refine the retain set, build its null-space
/// projector, solve with invariant constraints and apply the update.
/// e0 in the diagnostics is measured against the task's original retain set.
LayerResult edit_layer(const EraseTask& task, std::size_t layer_index, const EditOptions& options = {});

/// edit_layer over every layer. Results do not depend on options.threads.
EditResult run_edit(const EraseTask& task, const EditOptions& options = {});

/// The refined retain set of one layer (R itself when refinement is off).
RefineResult refine_layer(const EraseTask& task, std::size_t layer_index);

}  // namespace nse
