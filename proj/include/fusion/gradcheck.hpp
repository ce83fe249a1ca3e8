#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fusion/param.hpp"
#include "fusion/tensor.hpp"

namespace fusion {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t samples = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst = 0.0;

    bool passed(double tol) const { return worst <= tol; }
    std::vector<std::string> failing(double tol) const;
};

struct GradCheckOptions {
    double step = 1e-5;
    std::size_t samples_per_tensor = 64;  // all entries when tensor is smaller
    std::uint64_t seed = 0;
    /// Test hook: name of a parameter whose analytic gradient is perturbed
    /// before comparison (fault injection for the CLI exit-code contract).
    std::string corrupt_param;
};

/// Compares analytic gradients of `loss_fn` against central finite
/// differences for every parameter. loss_fn must be deterministic: it is
/// evaluated twice up front and a mismatch is rejected with
/// std::invalid_argument.
GradCheckReport finite_diff_check(ParamList& params,
                                  const std::function<Tensor()>& loss_fn,
                                  const GradCheckOptions& options = {});

}  // namespace fusion
