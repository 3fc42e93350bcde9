#pragma once

#include <cstdint>
#include <string>

namespace tempscale {

// Cross-checks the closed-form prototype/feature gradients of the
// temperature cross entropy against reverse-mode autodiff and central finite
// differences on random instances (single samples and batches).
struct GradCheckReport {
  int instances = 0;
  double max_err_closed_vs_autodiff = 0.0;  // tolerance 1e-10
  double max_err_autodiff_vs_fd = 0.0;      // tolerance 1e-6
  bool pass = false;
  std::string summary() const;
};

GradCheckReport run_grad_check(std::uint64_t seed, int instances = 200);

}  // namespace tempscale
