#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bricklayer {

struct GradcheckOptions {
  std::size_t instances = 20;  // per component
  std::uint64_t seed = 20240;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Test hook: perturbs one analytic gradient of the named component.
  std::string inject_fault;
};

struct GradcheckRow {
  std::string component;
  std::size_t instances = 0;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  bool pass = false;
};

// Backbone, isolation_loss, distillation_loss, detection_loss, overall_loss.
const std::vector<std::string>& gradcheck_components();

// |a - n| / max(|a|, |n|, 1e-6). The floor keeps gradients that are zero up
// to rounding from dominating the ratio.
double gradcheck_relative_error(double analytic, double numeric);

std::vector<GradcheckRow> run_gradchecks(const GradcheckOptions& opts = {});

}  // namespace bricklayer
