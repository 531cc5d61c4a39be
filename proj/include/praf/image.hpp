#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "praf/errors.hpp"
#include "praf/tensor.hpp"

namespace praf {

/// H x W x 3 image, row-major RGB, values in [0,1].
struct ImageTensor {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(std::size_t h, std::size_t w) : height(h), width(w), data(h * w * 3, 0.0) {}

    double& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * 3 + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c) const {
        return data[(y * width + x) * 3 + c];
    }
    std::size_t size() const { return data.size(); }
    bool square() const { return height == width; }

    bool operator==(const ImageTensor& other) const = default;
};

inline Tensor image_leaf(Tape& tape, const ImageTensor& img, bool requires_grad) {
    return tape.leaf({img.height, img.width, 3}, img.data, requires_grad);
}

inline Tensor image_constant(Tape& tape, const ImageTensor& img) {
    return tape.constant({img.height, img.width, 3}, img.data);
}

/// Random image with 8-bit-quantized channel values (k/255), matching what a
/// PNG round-trip would produce.
inline ImageTensor random_quantized_image(std::size_t side, std::uint64_t seed) {
    ImageTensor img(side, side);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dist(0, 255);
    for (double& v : img.data) v = dist(rng) / 255.0;
    return img;
}

inline double linf_distance(const ImageTensor& a, const ImageTensor& b) {
    if (a.height != b.height || a.width != b.width) throw ShapeError("linf_distance: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] > b.data[i] ? a.data[i] - b.data[i] : b.data[i] - a.data[i];
        if (d > m) m = d;
    }
    return m;
}

}  // namespace praf
