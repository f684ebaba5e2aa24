// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "sitgru/tensor.hpp"

namespace sitgru {

/// T frames sampled from a sequence at a fixed stride.
///
/// `frames` is the network input ([T x H x W], preprocessed). `target`, when
/// set, is what the network should reproduce for the same frames; otherwise
/// the cuboid reconstructs itself.
struct Cuboid {
    Tensor frames;
    Tensor target;
    std::vector<std::size_t> indices;
    std::size_t stride = 1;

    const Tensor& reconstruction_target() const { return target.empty() ? frames : target; }
    std::size_t timesteps() const { return frames.empty() ? 0 : frames.dim(0); }

    /// Mean source index, used to place the cuboid on the frame axis.
    double center() const {
        double sum = 0.0;
        for (std::size_t i : indices) sum += static_cast<double>(i);
        return indices.empty() ? 0.0 : sum / static_cast<double>(indices.size());
    }
};

}  // namespace sitgru
