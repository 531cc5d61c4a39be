#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "praf/image.hpp"

namespace praf {

enum class Interp { Nearest, Bilinear, Bicubic };

Interp interp_from_string(const std::string& name);
std::string to_string(Interp mode);

/// Per-axis source index for nearest-neighbor sampling with pixel-center
/// mapping: src = floor((i + 0.5) * in / out), clamped to [0, in-1].
std::vector<std::size_t> nearest_axis_map(std::size_t in, std::size_t out);

/// Flat index map for resampling an {H,W,3} image to {out,out,3} with the
/// nearest-neighbor convention above. Shared so callers can cache it.
std::shared_ptr<const std::vector<std::size_t>> nearest_image_map(std::size_t in_h, std::size_t in_w,
                                                                  std::size_t out);

ImageTensor nearest_resize(const ImageTensor& image, std::size_t out_size);
ImageTensor resize(const ImageTensor& image, std::size_t out_size, Interp mode);

/// Stage target synthesis: resample down to R x R then back up to H x H.
/// With the default dual-nearest modes the output pixel values are a subset
/// of the input values (at most R^2 distinct values per channel).
ImageTensor synthesize_stage_target(const ImageTensor& target, std::size_t stage_resolution,
                                    std::size_t image_size, Interp down = Interp::Nearest,
                                    Interp up = Interp::Nearest);

struct StageSchedule {
    std::size_t total_iterations = 300;
    std::size_t stage_count = 3;
    std::vector<std::size_t> resolutions;  // strictly ascending, last == image size

    void validate(std::size_t image_size) const;
};

/// Stage for iteration t in [1, T]: min(floor((t-1) * M / T) + 1, M).
std::size_t stage_index(std::size_t t, const StageSchedule& schedule);

/// Default coarse-to-fine ladder {H/4, H/2, H} truncated/padded to M stages.
std::vector<std::size_t> default_resolutions(std::size_t image_size, std::size_t stage_count);

}  // namespace praf
