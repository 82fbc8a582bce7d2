#include "psmlab/landmarks.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace psmlab {

namespace {

Vec2 mean_of(const std::array<Vec2, kNumLandmarks>& pts, int first, int last) {
    Vec2 acc;
    for (int i = first; i <= last; ++i) {
        acc.x += pts[static_cast<size_t>(i)].x;
        acc.y += pts[static_cast<size_t>(i)].y;
    }
    double n = static_cast<double>(last - first + 1);
    return {acc.x / n, acc.y / n};
}

}  // namespace

Vec2 LandmarkSet::eye_center_a() const { return mean_of(points, 36, 41); }
Vec2 LandmarkSet::eye_center_b() const { return mean_of(points, 42, 47); }
Vec2 LandmarkSet::mouth_center() const { return mean_of(points, 48, 59); }

bool LandmarkSet::within_bounds(int width, int height) const {
    double mx = 0.1 * width;
    double my = 0.1 * height;
    for (const Vec2& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
        if (p.x < -mx || p.x > width - 1 + mx) return false;
        if (p.y < -my || p.y > height - 1 + my) return false;
    }
    return true;
}

LandmarkSet load_landmarks(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open landmark file: " + path);
    LandmarkSet lm;
    for (int i = 0; i < kNumLandmarks; ++i) {
        if (!(in >> lm.points[static_cast<size_t>(i)].x >> lm.points[static_cast<size_t>(i)].y))
            fail(ErrorCode::SchemaMismatch,
                 "landmark file needs 68 'x y' lines, failed at line " + std::to_string(i + 1) +
                     ": " + path);
    }
    double extra = 0.0;
    if (in >> extra)
        fail(ErrorCode::SchemaMismatch, "landmark file has more than 68 points: " + path);
    return lm;
}

void save_landmarks(const LandmarkSet& lm, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::IoError, "cannot write landmark file: " + path);
    out.precision(8);
    for (const Vec2& p : lm.points) out << p.x << " " << p.y << "\n";
}

}  // namespace psmlab
