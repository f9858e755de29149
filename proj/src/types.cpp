#include "nse/types.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <string>

#include <fmt/format.h>

#include "nse/errors.hpp"

namespace nse {

std::string_view to_string(ConceptRole role) {
  switch (role) {
    case ConceptRole::erase: return "erase";
    case ConceptRole::anchor: return "anchor";
    case ConceptRole::retain: return "retain";
    case ConceptRole::invariant: return "invariants";
  }
  return "unknown";
}

bool all_finite(const Matrix& m) { return m.size() == 0 || m.allFinite(); }

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError(fmt::format("hyperparameter '{}': cannot parse '{}'", key, text));
  }
  return value;
}

}  // namespace

const std::vector<std::string>& Hyperparams::field_names() {
  static const std::vector<std::string> names = {"alpha", "beta", "lambda_reg", "svd_tol", "r",
                                                 "n_aug", "filter_scale", "lambda_inv", "seed"};
  return names;
}

void Hyperparams::set(std::string_view key, std::string_view value) {
  if (key == "alpha") alpha = parse_number<double>(key, value);
  else if (key == "beta") beta = parse_number<double>(key, value);
  else if (key == "lambda_reg") lambda_reg = parse_number<double>(key, value);
  else if (key == "svd_tol") svd_tol = parse_number<double>(key, value);
  else if (key == "r") r = parse_number<std::size_t>(key, value);
  else if (key == "n_aug") n_aug = parse_number<std::size_t>(key, value);
  else if (key == "filter_scale") filter_scale = parse_number<double>(key, value);
  else if (key == "lambda_inv") lambda_inv = parse_number<double>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else throw ValidationError(fmt::format("unknown hyperparameter '{}'", key));
}

void Hyperparams::validate() const {
  auto positive = [](std::string_view name, double v) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError(fmt::format("hyperparameter {} must be a positive finite number, got {}", name, v));
    }
  };
  positive("alpha", alpha);
  positive("beta", beta);
  positive("lambda_reg", lambda_reg);
  positive("svd_tol", svd_tol);
  positive("filter_scale", filter_scale);
  if (r < 1) throw ValidationError("hyperparameter r must be at least 1");
  if (!(lambda_inv >= 0.0) || !std::isfinite(lambda_inv)) {
    throw ValidationError(fmt::format("hyperparameter lambda_inv must be non-negative, got {}", lambda_inv));
  }
}

void EraseTask::validate() const {
  hp.validate();
  if (C1.count() < 1) throw ValidationError("erase set must contain at least one concept");
  if (C1.count() != C_star.count()) {
    throw ValidationError(fmt::format("N_E mismatch: erase set has {} columns, anchor set has {}",
                                      C1.count(), C_star.count()));
  }
  const auto d0 = C1.dim();
  auto check_dim = [d0](const ConceptMatrix& c) {
    if (c.dim() != d0) {
      throw ValidationError(fmt::format("d0 mismatch: {} matrix has {} rows, erase set has {}",
                                        to_string(c.role), c.dim(), d0));
    }
    if (!all_finite(c.embeddings)) {
      throw ValidationError(fmt::format("{} matrix contains non-finite values", to_string(c.role)));
    }
  };
  check_dim(C1);
  check_dim(C_star);
  check_dim(C0);
  check_dim(C2);
  if (layers.empty()) throw ValidationError("task lists no layers");
  std::set<std::string> ids;
  for (const auto& layer : layers) {
    if (!ids.insert(layer.layer_id).second) {
      throw ValidationError(fmt::format("layer id '{}' appears more than once", layer.layer_id));
    }
    if (layer.W.cols() != d0) {
      throw ValidationError(fmt::format("layer '{}': W has {} columns, expected d0 = {}",
                                        layer.layer_id, layer.W.cols(), d0));
    }
    if (layer.W.rows() < 1) throw ValidationError(fmt::format("layer '{}': W has no rows", layer.layer_id));
    if (!all_finite(layer.W)) {
      throw ValidationError(fmt::format("layer '{}': W contains non-finite values", layer.layer_id));
    }
  }
}

}  // namespace nse
