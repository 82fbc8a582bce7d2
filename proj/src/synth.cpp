#include "psmlab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace psmlab {

namespace {

// Feature groups, each driven by one (possibly person-permuted) factor.
enum { kBrow = 0, kJaw = 1, kCorner = 2, kCheek = 3 };

FactorVec effective_factors(const PersonTraits& traits, const FactorVec& raw) {
    FactorVec e{};
    for (int g = 0; g < kMotionFactors; ++g)
        e[static_cast<size_t>(g)] = raw[static_cast<size_t>(traits.factor_source[static_cast<size_t>(g)])];
    return e;
}

struct AuRule {
    int group;
    double threshold;  // fires when direction*(factor) > direction*threshold
    int direction;     // +1 above, -1 below
};

// Threshold table tying each AU to one feature group. AU26 implies AU25.
constexpr std::array<AuRule, kNumAus> kRules = {{
    {kBrow, 0.35, +1},    // AU1  inner brow raiser
    {kBrow, 0.55, +1},    // AU2  outer brow raiser
    {kBrow, -0.40, -1},   // AU4  brow lowerer
    {kBrow, 0.75, +1},    // AU5  upper lid raiser
    {kCheek, 0.45, +1},   // AU6  cheek raiser
    {kCheek, -0.50, -1},  // AU9  nose wrinkler
    {kCorner, 0.35, +1},  // AU12 lip corner puller
    {kCorner, -0.45, -1}, // AU15 lip corner depressor
    {kJaw, -0.50, -1},    // AU17 chin raiser
    {kCorner, -0.75, -1}, // AU20 lip stretcher
    {kJaw, 0.20, +1},     // AU25 lips part
    {kJaw, 0.50, +1},     // AU26 jaw drop
}};

struct Capsule {
    double x0, y0, x1, y1;
    double thick;  // gaussian width of the stroke, pixels
    double gain;   // peak darkness
};

double capsule_distance(const Capsule& c, double px, double py) {
    double dx = c.x1 - c.x0, dy = c.y1 - c.y0;
    double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? std::clamp(((px - c.x0) * dx + (py - c.y0) * dy) / len2, 0.0, 1.0) : 0.0;
    double cx = c.x0 + t * dx, cy = c.y0 + t * dy;
    return std::hypot(px - cx, py - cy);
}

struct Scene {
    double size;
    double face_cx, face_cy, face_rx, face_ry;
    std::vector<Capsule> strokes;

    double value_at(double x, double y) const {
        double v = 0.88;
        double nx = (x - face_cx) / face_rx, ny = (y - face_cy) / face_ry;
        double d = std::sqrt(nx * nx + ny * ny);
        double inside = std::clamp((1.0 - d) / 0.04, 0.0, 1.0);
        v = v + inside * (0.78 - 0.88);
        double rim = std::exp(-0.5 * ((d - 1.0) / 0.03) * ((d - 1.0) / 0.03));
        v -= 0.22 * rim;
        for (const Capsule& c : strokes) {
            double cd = capsule_distance(c, x, y);
            if (cd < c.thick * 4.0) v -= c.gain * std::exp(-0.5 * (cd / c.thick) * (cd / c.thick));
        }
        return std::clamp(v, 0.02, 1.0);
    }
};

struct Pose {
    double cos_r = 1.0, sin_r = 0.0, ox = 0.0, oy = 0.0, cx = 0.0, cy = 0.0;

    // scene coordinates -> pixel coordinates
    Vec2 forward(double sx, double sy) const {
        double dx = sx - cx, dy = sy - cy;
        return {cx + cos_r * dx - sin_r * dy + ox, cy + sin_r * dx + cos_r * dy + oy};
    }
    // pixel coordinates -> scene coordinates
    Vec2 inverse(double px, double py) const {
        double dx = px - cx - ox, dy = py - cy - oy;
        return {cx + cos_r * dx + sin_r * dy, cy - sin_r * dx + cos_r * dy};
    }
};

Pose make_pose(const SynthConfig& config, double rotation_rad, double offset_x, double offset_y) {
    Pose pose;
    pose.cos_r = std::cos(rotation_rad);
    pose.sin_r = std::sin(rotation_rad);
    pose.ox = offset_x;
    pose.oy = offset_y;
    pose.cx = config.image_size / 2.0;
    pose.cy = config.image_size / 2.0;
    return pose;
}

/// Face geometry in scene (unrotated) pixel coordinates. Everything the
/// renderer draws and every landmark hangs off these anchor points.
struct Geometry {
    double S;
    double eye_lx, eye_rx, eye_y, eye_half, eye_h;
    double brow_ly, brow_ry_inner_lift;
    double mouth_y, mouth_half, corner_dy, lip_gap;
    double e_brow, e_jaw, e_corner, e_cheek;
};

Geometry face_geometry(const SynthConfig& config, const PersonTraits& traits,
                       const FactorVec& factors) {
    FactorVec e = effective_factors(traits, factors);
    Geometry g;
    g.S = config.image_size;
    g.e_brow = e[kBrow];
    g.e_jaw = e[kJaw];
    g.e_corner = e[kCorner];
    g.e_cheek = e[kCheek];
    g.eye_y = 0.40 * g.S;
    g.eye_lx = 0.5 * g.S - 0.19 * g.S * traits.eye_gap;
    g.eye_rx = 0.5 * g.S + 0.19 * g.S * traits.eye_gap;
    g.eye_half = 0.050 * g.S;
    g.eye_h = (0.016 + 0.020 * std::max(0.0, g.e_brow - 0.55) / 0.45) * g.S;
    g.brow_ly = (0.30 + traits.brow_offset - 0.045 * g.e_brow) * g.S;
    g.brow_ry_inner_lift = 0.018 * g.S * g.e_brow;
    g.mouth_y = (0.72 + 0.030 * std::max(0.0, g.e_jaw)) * g.S;
    double stretch = 1.0 + 0.22 * std::max(0.0, -g.e_corner - 0.45) / 0.55;
    g.mouth_half = 0.15 * g.S * traits.mouth_width * stretch;
    g.corner_dy = -0.040 * g.S * g.e_corner;
    g.lip_gap = (0.010 + 0.055 * std::max(0.0, g.e_jaw)) * g.S;
    return g;
}

// Quadratic bezier used for the lip curves.
Vec2 bezier(const Vec2& a, const Vec2& b, const Vec2& c, double t) {
    double u = 1.0 - t;
    return {u * u * a.x + 2 * u * t * b.x + t * t * c.x,
            u * u * a.y + 2 * u * t * b.y + t * t * c.y};
}

void add_curve(std::vector<Capsule>& out, const Vec2& a, const Vec2& ctrl, const Vec2& b,
               double thick, double gain, int segments = 6) {
    Vec2 prev = a;
    for (int i = 1; i <= segments; ++i) {
        Vec2 p = bezier(a, ctrl, b, static_cast<double>(i) / segments);
        out.push_back({prev.x, prev.y, p.x, p.y, thick, gain});
        prev = p;
    }
}

Scene build_scene(const SynthConfig& config, const PersonTraits& traits,
                  const FactorVec& factors) {
    Geometry g = face_geometry(config, traits, factors);
    double S = g.S;
    double gain = traits.stroke_gain;
    double th = 0.018 * S;  // base stroke width

    Scene scene;
    scene.size = S;
    scene.face_cx = 0.5 * S;
    scene.face_cy = 0.52 * S;
    scene.face_rx = 0.40 * S * traits.face_width;
    scene.face_ry = 0.46 * S;

    auto& st = scene.strokes;

    // Brows: inner ends lift more than outer ends with the brow factor.
    for (int side = 0; side < 2; ++side) {
        double ex = side == 0 ? g.eye_lx : g.eye_rx;
        double inner = side == 0 ? ex + 0.065 * S : ex - 0.065 * S;
        double outer = side == 0 ? ex - 0.065 * S : ex + 0.065 * S;
        st.push_back({outer, g.brow_ly, inner, g.brow_ly - g.brow_ry_inner_lift, th, 0.52 * gain});
    }

    // Eyes and pupils.
    for (int side = 0; side < 2; ++side) {
        double ex = side == 0 ? g.eye_lx : g.eye_rx;
        st.push_back({ex - g.eye_half, g.eye_y, ex + g.eye_half, g.eye_y, 0.5 * g.eye_h + 0.008 * S,
                      0.50 * gain});
        st.push_back({ex, g.eye_y, ex, g.eye_y, 0.012 * S, 0.45 * gain});
    }

    // Nose bridge and base.
    st.push_back({0.5 * S, 0.46 * S, 0.5 * S, 0.58 * S, 0.010 * S, 0.30 * gain});
    st.push_back({0.47 * S, 0.60 * S, 0.53 * S, 0.60 * S, 0.010 * S, 0.30 * gain});

    // Cheek arcs appear as the cheek factor rises, wrinkles as it falls.
    double cheek_amt = std::max(0.0, g.e_cheek - 0.20) / 0.80;
    if (cheek_amt > 0)
        for (int side = 0; side < 2; ++side) {
            double ex = side == 0 ? g.eye_lx : g.eye_rx;
            st.push_back({ex - 0.045 * S, g.eye_y + 0.095 * S, ex + 0.045 * S, g.eye_y + 0.085 * S,
                          0.012 * S, 0.42 * gain * cheek_amt});
        }
    double wrinkle_amt = std::max(0.0, -g.e_cheek - 0.25) / 0.75;
    if (wrinkle_amt > 0) {
        st.push_back({0.46 * S, 0.470 * S, 0.54 * S, 0.470 * S, 0.010 * S, 0.40 * gain * wrinkle_amt});
        st.push_back({0.46 * S, 0.505 * S, 0.54 * S, 0.505 * S, 0.010 * S, 0.40 * gain * wrinkle_amt});
    }

    // Lips: two bezier curves between the corners.
    Vec2 corner_l{0.5 * S - g.mouth_half, g.mouth_y + g.corner_dy};
    Vec2 corner_r{0.5 * S + g.mouth_half, g.mouth_y + g.corner_dy};
    Vec2 up_ctrl{0.5 * S, g.mouth_y - g.lip_gap - 0.010 * S};
    Vec2 low_ctrl{0.5 * S, g.mouth_y + g.lip_gap + 0.018 * S};
    add_curve(st, corner_l, up_ctrl, corner_r, 0.013 * S, 0.55 * gain);
    add_curve(st, corner_l, low_ctrl, corner_r, 0.013 * S, 0.55 * gain);

    // Chin crease strengthens as the jaw factor drops (chin raise).
    double chin_amt = std::max(0.0, -g.e_jaw - 0.25) / 0.75;
    if (chin_amt > 0)
        st.push_back({0.44 * S, 0.865 * S, 0.56 * S, 0.865 * S, 0.011 * S, 0.42 * gain * chin_amt});

    return scene;
}

}  // namespace

PersonTraits person_traits(const SynthConfig& config, int subject_index) {
    Rng rng = Rng(config.seed).fork(1000 + static_cast<uint64_t>(subject_index));
    PersonTraits t;
    t.face_width = rng.uniform(0.92, 1.08);
    t.eye_gap = rng.uniform(0.92, 1.08);
    t.mouth_width = rng.uniform(0.90, 1.10);
    t.brow_offset = rng.uniform(-0.015, 0.015);
    t.stroke_gain = rng.uniform(0.85, 1.15);
    for (int a = 0; a < kNumAus; ++a) t.threshold_jitter[static_cast<size_t>(a)] = rng.uniform(-0.05, 0.05);

    if (config.person_specific_patterns) {
        // Rotate which factor drives each feature group so co-activation
        // structure differs between persons.
        for (int g = 0; g < kMotionFactors; ++g)
            t.factor_source[static_cast<size_t>(g)] = (g + subject_index) % kMotionFactors;
        for (int g = 0; g < kMotionFactors; ++g) {
            double mag = rng.uniform(0.82, 0.95);
            t.signature_pose[static_cast<size_t>(g)] = rng.uniform() < 0.5 ? mag : -mag;
        }
    }

    if (config.signature_rate > 0.0 && config.frames_per_subject > 0) {
        int want = static_cast<int>(std::lround(config.signature_rate * config.frames_per_subject));
        std::set<int> chosen;
        while (static_cast<int>(chosen.size()) < want) {
            int start = rng.uniform_int(0, config.frames_per_subject - 1);
            int len = rng.uniform_int(3, 5);
            for (int i = start; i < std::min(start + len, config.frames_per_subject) &&
                                static_cast<int>(chosen.size()) < want;
                 ++i)
                chosen.insert(i);
        }
        t.signature_frames.assign(chosen.begin(), chosen.end());
    }
    return t;
}

std::vector<FactorVec> factor_trajectory(const SynthConfig& config, const PersonTraits& traits,
                                         int subject_index) {
    Rng rng = Rng(config.seed).fork(2000 + static_cast<uint64_t>(subject_index));
    std::vector<FactorVec> out;
    out.reserve(static_cast<size_t>(config.frames_per_subject));
    FactorVec m{};
    double stationary_sd = 0.3 / std::sqrt(1.0 - 0.81);
    for (int g = 0; g < kMotionFactors; ++g)
        m[static_cast<size_t>(g)] = std::clamp(rng.normal() * stationary_sd, -1.0, 1.0);
    for (int t = 0; t < config.frames_per_subject; ++t) {
        for (int g = 0; g < kMotionFactors; ++g)
            m[static_cast<size_t>(g)] = std::clamp(0.9 * m[static_cast<size_t>(g)] + 0.3 * rng.normal(), -1.0, 1.0);
        out.push_back(m);
    }
    for (int idx : traits.signature_frames) out[static_cast<size_t>(idx)] = traits.signature_pose;
    return out;
}

AURecord labels_from_factors(const PersonTraits& traits, const FactorVec& factors) {
    FactorVec e = effective_factors(traits, factors);
    std::array<int, kNumAus> intensities{};
    for (int a = 0; a < kNumAus; ++a) {
        const AuRule& rule = kRules[static_cast<size_t>(a)];
        double thr = rule.threshold + traits.threshold_jitter[static_cast<size_t>(a)];
        double excess = rule.direction * (e[static_cast<size_t>(rule.group)] - thr);
        int intensity;
        if (excess > 0.0) {
            double span = std::max(0.15, 1.0 - std::abs(thr));
            intensity = 2 + std::min(3, static_cast<int>(excess / span * 4.0));
        } else if (excess > -0.08) {
            intensity = 1;
        } else {
            intensity = 0;
        }
        intensities[static_cast<size_t>(a)] = intensity;
    }
    return AURecord::from_intensities(intensities);
}

Image render_face(const SynthConfig& config, const PersonTraits& traits, const FactorVec& factors,
                  double rotation_rad, double offset_x, double offset_y) {
    Scene scene = build_scene(config, traits, factors);
    Pose pose = make_pose(config, rotation_rad, offset_x, offset_y);

    Image img;
    img.channels = config.channels;
    img.height = config.image_size;
    img.width = config.image_size;
    img.data.assign(static_cast<size_t>(img.channels) * img.height * img.width, 0.0);
    // Slight warm tint distinguishes the channels in color mode.
    const double tint[3] = {1.0, 0.96, 0.90};
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            Vec2 u = pose.inverse(x + 0.5, y + 0.5);
            double v = scene.value_at(u.x, u.y);
            for (int c = 0; c < img.channels; ++c)
                img.at(c, y, x) = std::clamp(v * (img.channels == 3 ? tint[c] : 1.0), 0.0, 1.0);
        }
    return img;
}

LandmarkSet landmarks_for(const SynthConfig& config, const PersonTraits& traits,
                          const FactorVec& factors, double rotation_rad, double offset_x,
                          double offset_y) {
    Geometry g = face_geometry(config, traits, factors);
    double S = g.S;
    double cx = 0.5 * S, cy = 0.52 * S;
    double rx = 0.40 * S * traits.face_width, ry = 0.46 * S;

    LandmarkSet lm;
    int i = 0;
    // 0-16 jaw line, left temple to right temple through the chin.
    for (int k = 0; k <= 16; ++k) {
        double t = k / 16.0;
        double x = cx - rx + 2.0 * rx * t;
        double lift = std::sin(t * M_PI);
        double y = 0.40 * S + (cy + ry * 0.98 - 0.40 * S) * lift;
        lm.points[static_cast<size_t>(i++)] = {x, y};
    }
    // 17-26 brows, five points each, inner lift applied toward the centre.
    for (int side = 0; side < 2; ++side) {
        double ex = side == 0 ? g.eye_lx : g.eye_rx;
        double outer = side == 0 ? ex - 0.065 * S : ex + 0.065 * S;
        double inner = side == 0 ? ex + 0.065 * S : ex - 0.065 * S;
        for (int k = 0; k < 5; ++k) {
            double t = k / 4.0;
            double u = side == 0 ? t : 1.0 - t;  // index order runs left to right
            double x = outer + (inner - outer) * u;
            double y = g.brow_ly - g.brow_ry_inner_lift * u;
            lm.points[static_cast<size_t>(i++)] = {x, y};
        }
    }
    // 27-30 nose bridge, 31-35 nose base.
    for (int k = 0; k < 4; ++k)
        lm.points[static_cast<size_t>(i++)] = {0.5 * S, (0.46 + 0.04 * k) * S};
    for (int k = 0; k < 5; ++k)
        lm.points[static_cast<size_t>(i++)] = {(0.47 + 0.015 * k) * S, 0.60 * S};
    // 36-47 eyes: symmetric hexagon whose mean is exactly the eye centre.
    double er = 0.034 * S, eh = 0.5 * g.eye_h + 0.006 * S;
    for (int side = 0; side < 2; ++side) {
        double ex = side == 0 ? g.eye_lx : g.eye_rx;
        double ey = g.eye_y;
        const double ox[6] = {-er, -er / 2, er / 2, er, er / 2, -er / 2};
        const double oy[6] = {0, -eh, -eh, 0, eh, eh};
        for (int k = 0; k < 6; ++k) lm.points[static_cast<size_t>(i++)] = {ex + ox[k], ey + oy[k]};
    }
    // 48-59 outer lip, 60-67 inner lip, sampled from the same bezier curves
    // the renderer draws.
    Vec2 corner_l{0.5 * S - g.mouth_half, g.mouth_y + g.corner_dy};
    Vec2 corner_r{0.5 * S + g.mouth_half, g.mouth_y + g.corner_dy};
    Vec2 up_ctrl{0.5 * S, g.mouth_y - g.lip_gap - 0.010 * S};
    Vec2 low_ctrl{0.5 * S, g.mouth_y + g.lip_gap + 0.018 * S};
    lm.points[static_cast<size_t>(i++)] = corner_l;
    for (int k = 1; k <= 5; ++k)
        lm.points[static_cast<size_t>(i++)] = bezier(corner_l, up_ctrl, corner_r, k / 6.0);
    lm.points[static_cast<size_t>(i++)] = corner_r;
    for (int k = 5; k >= 1; --k)
        lm.points[static_cast<size_t>(i++)] = bezier(corner_l, low_ctrl, corner_r, k / 6.0);
    Vec2 in_up{0.5 * S, g.mouth_y - 0.5 * g.lip_gap};
    Vec2 in_low{0.5 * S, g.mouth_y + 0.5 * g.lip_gap};
    lm.points[static_cast<size_t>(i++)] = {corner_l.x + 0.015 * S, corner_l.y};
    for (int k = 1; k <= 3; ++k)
        lm.points[static_cast<size_t>(i++)] = bezier({corner_l.x + 0.015 * S, corner_l.y}, in_up,
                                                     {corner_r.x - 0.015 * S, corner_r.y}, k / 4.0);
    lm.points[static_cast<size_t>(i++)] = {corner_r.x - 0.015 * S, corner_r.y};
    for (int k = 3; k >= 1; --k)
        lm.points[static_cast<size_t>(i++)] = bezier({corner_l.x + 0.015 * S, corner_l.y}, in_low,
                                                     {corner_r.x - 0.015 * S, corner_r.y}, k / 4.0);

    Pose pose = make_pose(config, rotation_rad, offset_x, offset_y);
    for (Vec2& p : lm.points) p = pose.forward(p.x, p.y);
    return lm;
}

Dataset synth_generate(const SynthConfig& config) {
    if (config.subjects < 1 || config.frames_per_subject < 1)
        fail(ErrorCode::InvalidConfig, "subjects and frames_per_subject must be positive");
    if (config.channels != 1 && config.channels != 3)
        fail(ErrorCode::InvalidConfig, "channels must be 1 or 3");
    if (config.image_size < 8) fail(ErrorCode::InvalidConfig, "image_size must be >= 8");

    Dataset dataset;
    dataset.source = DatasetSource::synthetic;
    dataset.metadata.image_height = config.image_size;
    dataset.metadata.image_width = config.image_size;
    dataset.metadata.channels = config.channels;

    for (int s = 0; s < config.subjects; ++s) {
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "SY%03d", s + 1);
        std::string id(idbuf);

        PersonTraits traits = person_traits(config, s);
        std::vector<FactorVec> trajectory = factor_trajectory(config, traits, s);
        Rng noise_rng = Rng(config.seed).fork(3000 + static_cast<uint64_t>(s));

        std::vector<FrameRef> frames;
        frames.reserve(trajectory.size());
        for (int t = 0; t < config.frames_per_subject; ++t) {
            double rot = config.rotation_jitter_deg > 0
                             ? noise_rng.uniform(-config.rotation_jitter_deg,
                                                 config.rotation_jitter_deg) * M_PI / 180.0
                             : 0.0;
            double off = config.offset_jitter * config.image_size;
            double ox = off > 0 ? noise_rng.uniform(-off, off) : 0.0;
            double oy = off > 0 ? noise_rng.uniform(-off, off) : 0.0;

            FrameRef frame;
            frame.identity = id;
            frame.index = t;
            frame.labels = labels_from_factors(traits, trajectory[static_cast<size_t>(t)]);
            frame.pixels = render_face(config, traits, trajectory[static_cast<size_t>(t)], rot, ox, oy);

            // Per-frame illumination plane plus pixel speckle, then 8-bit
            // quantisation so in-memory data matches a disk round trip.
            double gx = noise_rng.uniform(-config.illumination_jitter, config.illumination_jitter);
            double gy = noise_rng.uniform(-config.illumination_jitter, config.illumination_jitter);
            for (int c = 0; c < frame.pixels.channels; ++c)
                for (int y = 0; y < frame.pixels.height; ++y)
                    for (int x = 0; x < frame.pixels.width; ++x) {
                        double v = frame.pixels.at(c, y, x);
                        v += gx * (static_cast<double>(x) / config.image_size - 0.5) +
                             gy * (static_cast<double>(y) / config.image_size - 0.5);
                        if (config.speckle_sigma > 0) v += config.speckle_sigma * noise_rng.normal();
                        v = std::clamp(v, 0.0, 1.0);
                        frame.pixels.at(c, y, x) = std::round(v * 255.0) / 255.0;
                    }

            if (config.with_landmarks) {
                frame.landmarks = landmarks_for(config, traits, trajectory[static_cast<size_t>(t)], rot, ox, oy);
                frame.landmark_status = LandmarkStatus::present;
            }
            frames.push_back(std::move(frame));
        }
        dataset.subjects.emplace(id, std::move(frames));
    }
    return dataset;
}

}  // namespace psmlab
