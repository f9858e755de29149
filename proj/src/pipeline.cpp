#include "nse/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include <spdlog/spdlog.h>

#include "nse/solvers.hpp"

namespace nse {

double EditResult::total_e1() const {
  double total = 0.0;
  for (const auto& l : layers) total += l.delta.diagnostics.e1;
  return total;
}

double EditResult::max_e0() const {
  double m = 0.0;
  for (const auto& l : layers) m = std::max(m, l.delta.diagnostics.e0);
  return m;
}

double EditResult::max_invariant_residual() const {
  double m = 0.0;
  for (const auto& l : layers) m = std::max(m, l.delta.diagnostics.invariant_residual);
  return m;
}

RefineResult refine_layer(const EraseTask& task, std::size_t layer_index) {
  return refine_pipeline(RetainSet::from_original(task.C0.embeddings), task.layers.at(layer_index), task.C1,
                         task.C_star, task.hp);
}

LayerResult edit_layer(const EraseTask& task, std::size_t layer_index, const EditOptions& options) {
  const LayerWeights& layer = task.layers.at(layer_index);
  LayerResult out;

  Matrix retain = task.C0.embeddings;
  if (options.refine) retain = refine_layer(task, layer_index).refined.concepts;
  out.retain_columns = static_cast<std::size_t>(retain.cols());

  const Projector P = null_space_projector(retain, task.hp.svd_tol, options.approx_null);
  out.null_dim = P.kept_dims;
  out.null_status = P.status;
  if (P.status != NullSpaceStatus::exact) {
    spdlog::warn("layer '{}': null space is {}", layer.layer_id,
                 P.status == NullSpaceStatus::empty ? "empty" : "approximate");
  }

  out.delta = solve_speed(layer, task.C1, task.C_star, P, task.C2, task.hp, task.C0.embeddings);
  out.edited = apply_edit(layer, out.delta);
  spdlog::debug("layer '{}': retain={} null_dim={} e1={:.6e} e0={:.3e} inv={:.3e}", layer.layer_id,
                out.retain_columns, out.null_dim, out.delta.diagnostics.e1, out.delta.diagnostics.e0,
                out.delta.diagnostics.invariant_residual);
  return out;
}

EditResult run_edit(const EraseTask& task, const EditOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  task.validate();
  const std::size_t n = task.layers.size();
  EditResult result;
  result.layers.resize(n);

  const std::size_t workers = std::clamp<std::size_t>(options.threads, 1, n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) result.layers[i] = edit_layer(task, i, options);
  } else {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    {
      std::vector<std::jthread> pool;
      pool.reserve(workers);
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < n; i = next++) {
            try {
              result.layers[i] = edit_layer(task, i, options);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  result.wall_time = std::chrono::steady_clock::now() - start;
  return result;
}

}  // namespace nse
