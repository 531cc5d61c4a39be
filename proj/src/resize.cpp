#include "praf/resize.hpp"

#include <algorithm>
#include <cmath>

namespace praf {

Interp interp_from_string(const std::string& name) {
    if (name == "nearest") return Interp::Nearest;
    if (name == "bilinear") return Interp::Bilinear;
    if (name == "bicubic") return Interp::Bicubic;
    throw ConfigError("unknown interpolation mode '" + name + "'");
}

std::string to_string(Interp mode) {
    switch (mode) {
        case Interp::Nearest: return "nearest";
        case Interp::Bilinear: return "bilinear";
        case Interp::Bicubic: return "bicubic";
    }
    return "nearest";
}

std::vector<std::size_t> nearest_axis_map(std::size_t in, std::size_t out) {
    if (out == 0) throw ContractError("nearest_axis_map: output size must be >= 1");
    std::vector<std::size_t> map(out);
    for (std::size_t i = 0; i < out; ++i) {
        auto src = static_cast<std::size_t>(
            std::floor((static_cast<double>(i) + 0.5) * static_cast<double>(in) /
                       static_cast<double>(out)));
        map[i] = std::min(src, in - 1);
    }
    return map;
}

std::shared_ptr<const std::vector<std::size_t>> nearest_image_map(std::size_t in_h, std::size_t in_w,
                                                                  std::size_t out) {
    auto ymap = nearest_axis_map(in_h, out);
    auto xmap = nearest_axis_map(in_w, out);
    auto map = std::make_shared<std::vector<std::size_t>>(out * out * 3);
    std::size_t k = 0;
    for (std::size_t y = 0; y < out; ++y)
        for (std::size_t x = 0; x < out; ++x)
            for (std::size_t c = 0; c < 3; ++c) (*map)[k++] = (ymap[y] * in_w + xmap[x]) * 3 + c;
    return map;
}

ImageTensor nearest_resize(const ImageTensor& image, std::size_t out_size) {
    if (out_size == 0) throw ContractError("nearest_resize: output size must be >= 1");
    auto ymap = nearest_axis_map(image.height, out_size);
    auto xmap = nearest_axis_map(image.width, out_size);
    ImageTensor out(out_size, out_size);
    for (std::size_t y = 0; y < out_size; ++y)
        for (std::size_t x = 0; x < out_size; ++x)
            for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = image.at(ymap[y], xmap[x], c);
    return out;
}

namespace {

double sample_clamped(const ImageTensor& img, long y, long x, std::size_t c) {
    y = std::clamp<long>(y, 0, static_cast<long>(img.height) - 1);
    x = std::clamp<long>(x, 0, static_cast<long>(img.width) - 1);
    return img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c);
}

// Keys cubic kernel, a = -0.5.
double cubic_weight(double t) {
    t = std::abs(t);
    if (t <= 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
    if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
    return 0.0;
}

ImageTensor interp_resize(const ImageTensor& image, std::size_t out_size, Interp mode) {
    ImageTensor out(out_size, out_size);
    const double sy = static_cast<double>(image.height) / static_cast<double>(out_size);
    const double sx = static_cast<double>(image.width) / static_cast<double>(out_size);
    for (std::size_t y = 0; y < out_size; ++y) {
        const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        for (std::size_t x = 0; x < out_size; ++x) {
            const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            for (std::size_t c = 0; c < 3; ++c) {
                double v = 0.0;
                if (mode == Interp::Bilinear) {
                    const long y0 = static_cast<long>(std::floor(fy));
                    const long x0 = static_cast<long>(std::floor(fx));
                    const double wy = fy - static_cast<double>(y0);
                    const double wx = fx - static_cast<double>(x0);
                    v = (1 - wy) * ((1 - wx) * sample_clamped(image, y0, x0, c) +
                                    wx * sample_clamped(image, y0, x0 + 1, c)) +
                        wy * ((1 - wx) * sample_clamped(image, y0 + 1, x0, c) +
                              wx * sample_clamped(image, y0 + 1, x0 + 1, c));
                } else {
                    const long y0 = static_cast<long>(std::floor(fy));
                    const long x0 = static_cast<long>(std::floor(fx));
                    for (long dy = -1; dy <= 2; ++dy) {
                        const double wy = cubic_weight(fy - static_cast<double>(y0 + dy));
                        if (wy == 0.0) continue;
                        for (long dx = -1; dx <= 2; ++dx) {
                            const double wx = cubic_weight(fx - static_cast<double>(x0 + dx));
                            if (wx == 0.0) continue;
                            v += wy * wx * sample_clamped(image, y0 + dy, x0 + dx, c);
                        }
                    }
                }
                out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return out;
}

}  // namespace

ImageTensor resize(const ImageTensor& image, std::size_t out_size, Interp mode) {
    if (mode == Interp::Nearest) return nearest_resize(image, out_size);
    if (out_size == 0) throw ContractError("resize: output size must be >= 1");
    return interp_resize(image, out_size, mode);
}

ImageTensor synthesize_stage_target(const ImageTensor& target, std::size_t stage_resolution,
                                    std::size_t image_size, Interp down, Interp up) {
    if (stage_resolution > image_size)
        throw ConfigError("stage resolution " + std::to_string(stage_resolution) +
                          " exceeds image size " + std::to_string(image_size));
    if (stage_resolution == 0) throw ConfigError("stage resolution must be >= 1");
    ImageTensor coarse = resize(target, stage_resolution, down);
    return resize(coarse, image_size, up);
}

void StageSchedule::validate(std::size_t image_size) const {
    if (stage_count == 0) throw ConfigError("schedule: need at least one stage");
    if (total_iterations < stage_count)
        throw ConfigError("schedule: iteration count must be >= stage count");
    if (resolutions.size() != stage_count)
        throw ConfigError("schedule: resolution list length must equal stage count");
    for (std::size_t i = 0; i < resolutions.size(); ++i) {
        if (resolutions[i] == 0) throw ConfigError("schedule: resolutions must be >= 1");
        if (i > 0 && resolutions[i] <= resolutions[i - 1])
            throw ConfigError("schedule: resolutions must be strictly ascending");
    }
    if (resolutions.back() != image_size)
        throw ConfigError("schedule: final resolution must equal the image size");
}

std::size_t stage_index(std::size_t t, const StageSchedule& schedule) {
    if (t < 1 || t > schedule.total_iterations)
        throw ContractError("stage_index: iteration " + std::to_string(t) + " outside [1, " +
                            std::to_string(schedule.total_iterations) + "]");
    const std::size_t m = (t - 1) * schedule.stage_count / schedule.total_iterations + 1;
    return std::min(m, schedule.stage_count);
}

std::vector<std::size_t> default_resolutions(std::size_t image_size, std::size_t stage_count) {
    std::vector<std::size_t> out(stage_count);
    for (std::size_t i = 0; i < stage_count; ++i) {
        const std::size_t shift = stage_count - 1 - i;
        if (shift >= 63 || (image_size >> shift) == 0)
            throw ConfigError("default resolution ladder underflows; give resolutions explicitly");
        out[i] = image_size >> shift;
    }
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i] <= out[i - 1])
            throw ConfigError("default resolution ladder is not strictly ascending; give "
                              "resolutions explicitly");
    return out;
}

}  // namespace praf
