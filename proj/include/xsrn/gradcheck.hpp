#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xsrn/rng.hpp"
#include "xsrn/tensor.hpp"

namespace xsrn {

// Central finite-difference verification of reverse-mode gradients, run in
// 64-bit precision (32-bit differences are too noisy for tight tolerances).
struct GradCheckOptions {
    double step = 1e-4;
    double tolerance = 1e-3;
    // Per-leaf coordinate budget per trial; <= 0 checks every coordinate.
    int max_coords_per_leaf = 0;
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    // A probe stepped a pre-activation across a kink (the halved-step probe
    // agreed with autodiff), so the finite difference is not a valid oracle
    // at this instance; the caller should redraw and retry.
    bool kink_suspected = false;
    bool passed(double tolerance) const { return max_rel_err < tolerance; }
};

// `make_loss` must build a scalar loss from the current values of `leaves`
// (re-invoked for every finite-difference probe). Leaves are temporarily
// perturbed in place and restored.
GradCheckResult check_gradients(std::vector<Tensor<double>> leaves,
                                const std::function<Tensor<double>()>& make_loss,
                                const GradCheckOptions& opts, Rng& rng);

// Named check suites for ops, blocks, and the tiny end-to-end network.
struct GradCheckCase {
    std::string name;
    // Runs `trials` independent randomized trials; returns worst-case result.
    std::function<GradCheckResult(int trials, std::uint64_t seed)> run;
};

std::vector<GradCheckCase> gradcheck_cases();

}  // namespace xsrn
