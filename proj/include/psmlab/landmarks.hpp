#pragma once

#include <array>
#include <string>

#include "psmlab/common.hpp"

namespace psmlab {

inline constexpr int kNumLandmarks = 68;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

/// 68-point landmark set in source-image pixel coordinates, iBUG-style
/// ordering: 0-16 jaw, 17-26 brows, 27-35 nose, 36-41 left-of-image eye,
/// 42-47 right-of-image eye, 48-67 mouth.
struct LandmarkSet {
    std::array<Vec2, kNumLandmarks> points{};

    Vec2 eye_center_a() const;  // mean of points 36..41 (image-left eye)
    Vec2 eye_center_b() const;  // mean of points 42..47 (image-right eye)
    Vec2 mouth_center() const;  // mean of outer-lip points 48..59

    /// All coordinates finite and within image bounds plus a 10% margin.
    bool within_bounds(int width, int height) const;
};

/// Plain-text format: 68 lines of "x y".
LandmarkSet load_landmarks(const std::string& path);  // IoError / SchemaMismatch
void save_landmarks(const LandmarkSet& lm, const std::string& path);

}  // namespace psmlab
