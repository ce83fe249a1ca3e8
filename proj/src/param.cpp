#include "fusion/param.hpp"

#include <cmath>

namespace fusion {

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> values(numel(shape));
    for (double& v : values) v = rng.uniform(-bound, bound);
    Tensor t = Tensor::from(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    return t;
}

Tensor zeros_param(Shape shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    t.set_requires_grad(true);
    return t;
}

Tensor scalar_param(double value) {
    Tensor t = Tensor::scalar(value);
    t.set_requires_grad(true);
    return t;
}

}  // namespace fusion
