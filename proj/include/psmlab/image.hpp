#pragma once

#include <string>
#include <vector>

#include "psmlab/common.hpp"

namespace psmlab {

/// Planar (channel-major) image with values in [0,1]. Also serves as the
/// feature-map tensor for the model code.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;  // CHW

    Image() = default;
    Image(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          data(static_cast<size_t>(c) * h * w, fill) {}

    double& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    double* plane(int c) { return data.data() + static_cast<size_t>(c) * height * width; }
    const double* plane(int c) const {
        return data.data() + static_cast<size_t>(c) * height * width;
    }
    size_t size() const { return data.size(); }
    bool same_shape(const Image& other) const {
        return channels == other.channels && height == other.height && width == other.width;
    }
    bool empty() const { return data.empty(); }
};

Image mirror_horizontal(const Image& img);
Image to_grayscale(const Image& img);  // Rec.601 luma for 3-channel input
bool all_finite(const Image& img);

/// Bilinear sample of one channel at a fractional position; coordinates are
/// clamped to the image border (edge replication).
double bilinear_sample(const Image& img, int channel, double y, double x);

double mean_abs_difference(const Image& a, const Image& b);  // ShapeMismatch

// Binary PGM (P5, 1 channel) and PPM (P6, 3 channels), 8-bit.
Image load_image(const std::string& path);                  // CorruptImage on parse failure
void save_image(const Image& img, const std::string& path); // IoError on write failure

}  // namespace psmlab
