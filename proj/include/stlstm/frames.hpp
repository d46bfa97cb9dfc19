#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stlstm/errors.hpp"

namespace stlstm {

/// Frames x joints x 3 coordinates, stored contiguously.
struct FrameTensor {
    std::size_t frames = 0;
    std::size_t joints = 0;
    std::vector<double> xyz;

    FrameTensor() = default;
    FrameTensor(std::size_t frame_count, std::size_t joint_count)
        : frames(frame_count), joints(joint_count), xyz(frame_count * joint_count * 3, 0.0) {}

    std::span<double, 3> at(std::size_t t, std::size_t j) noexcept {
        return std::span<double, 3>(xyz.data() + (t * joints + j) * 3, 3);
    }
    std::span<const double, 3> at(std::size_t t, std::size_t j) const noexcept {
        return std::span<const double, 3>(xyz.data() + (t * joints + j) * 3, 3);
    }

    /// Copies the listed frames, in the given order.
    FrameTensor select(std::span<const std::size_t> frame_indices) const {
        FrameTensor out(frame_indices.size(), joints);
        for (std::size_t k = 0; k < frame_indices.size(); ++k) {
            if (frame_indices[k] >= frames)
                throw DataError("frame index " + std::to_string(frame_indices[k]) + " out of range");
            const auto src = xyz.begin() + static_cast<std::ptrdiff_t>(frame_indices[k] * joints * 3);
            std::copy(src, src + static_cast<std::ptrdiff_t>(joints * 3),
                      out.xyz.begin() + static_cast<std::ptrdiff_t>(k * joints * 3));
        }
        return out;
    }

    bool operator==(const FrameTensor&) const = default;
};

} // namespace stlstm
