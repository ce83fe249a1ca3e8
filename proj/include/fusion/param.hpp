#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fusion/tensor.hpp"

namespace fusion {

/// Trainable tensor with a dotted ownership path, e.g.
/// "spatial.R.conv.weight".
struct NamedParam {
    std::string name;
    Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

/// Deterministic RNG whose uniform draws do not depend on the standard
/// library's distribution implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    std::uint64_t next_u64() { return gen_(); }

private:
    std::mt19937_64 gen_;
};

/// Kaiming-uniform fan-in init: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);

/// Zero-initialized trainable tensor (biases).
Tensor zeros_param(Shape shape);

/// Constant-initialized trainable scalar (PReLU slopes).
Tensor scalar_param(double value);

}  // namespace fusion
