#include "fusion/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fusion {

std::vector<std::string> GradCheckReport::failing(double tol) const {
    std::vector<std::string> names;
    for (const auto& e : entries)
        if (e.max_rel_err > tol) names.push_back(e.name);
    return names;
}

namespace {

// Relative error with an absolute floor: finite differences carry noise of
// roughly machine-eps * |loss| / step, so gradients near zero compare on an
// absolute scale instead.
double rel_err(double analytic, double numeric) {
    double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
    return std::fabs(analytic - numeric) / denom;
}

}  // namespace

GradCheckReport finite_diff_check(ParamList& params,
                                  const std::function<Tensor()>& loss_fn,
                                  const GradCheckOptions& options) {
    double probe1 = loss_fn().item();
    double probe2 = loss_fn().item();
    if (probe1 != probe2)
        throw std::invalid_argument(
            "finite_diff_check: loss_fn is not deterministic (" +
            std::to_string(probe1) + " vs " + std::to_string(probe2) + ")");

    for (auto& p : params) p.tensor.zero_grad();
    Tensor loss = loss_fn();
    loss.backward();

    Rng rng(options.seed);
    GradCheckReport report;
    for (auto& p : params) {
        GradCheckEntry entry{p.name, 0.0, 0};
        std::vector<std::size_t> indices(p.tensor.size());
        std::iota(indices.begin(), indices.end(), 0);
        if (indices.size() > options.samples_per_tensor) {
            // Fisher-Yates prefix shuffle driven by the deterministic RNG.
            for (std::size_t i = 0; i < options.samples_per_tensor; ++i) {
                std::size_t j =
                    i + static_cast<std::size_t>(rng.next_u64() %
                                                 (indices.size() - i));
                std::swap(indices[i], indices[j]);
            }
            indices.resize(options.samples_per_tensor);
        }

        auto grad = p.tensor.grad();
        auto data = p.tensor.data();
        for (std::size_t idx : indices) {
            double saved = data[idx];
            double analytic = grad[idx];
            if (p.name == options.corrupt_param && idx == indices.front())
                analytic += 1.0;
            data[idx] = saved + options.step;
            double up;
            double down;
            {
                NoGradGuard guard;
                up = loss_fn().item();
                data[idx] = saved - options.step;
                down = loss_fn().item();
            }
            data[idx] = saved;
            double numeric = (up - down) / (2.0 * options.step);
            entry.max_rel_err =
                std::max(entry.max_rel_err, rel_err(analytic, numeric));
            ++entry.samples;
        }
        report.worst = std::max(report.worst, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace fusion
