#include "psmlab/align.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace psmlab {

Vec2 SimilarityTransform::apply_inverse(const Vec2& p) const {
    double det = a * a + b * b;
    double x = p.x - tx, y = p.y - ty;
    return {(a * x + b * y) / det, (a * y - b * x) / det};
}

double SimilarityTransform::rotation_deg() const { return std::atan2(b, a) * 180.0 / M_PI; }

double SimilarityTransform::scale() const { return std::hypot(a, b); }

std::optional<LandmarkSet> detect_landmarks(const FrameRef& frame, const LandmarkSource& source) {
    if (source.kind == LandmarkSource::Kind::stored) {
        if (frame.landmark_status == LandmarkStatus::present && frame.landmarks)
            return frame.landmarks;
        return std::nullopt;
    }

    // External detector: hand it the frame as a file, read 68 "x y" lines.
    namespace fs = std::filesystem;
    static int counter = 0;
    std::string ext = frame.pixels.channels == 3 ? ".ppm" : ".pgm";
    fs::path tmp = fs::temp_directory_path() /
                   ("psmlab_detect_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++) + ext);
    try {
        save_image(frame.pixels, tmp.string());
    } catch (const Error&) {
        return std::nullopt;
    }
    std::string cmd = source.command + " " + tmp.string();
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) {
        fs::remove(tmp);
        return std::nullopt;
    }
    std::string output;
    char buf[256];
    while (size_t n = std::fread(buf, 1, sizeof(buf), pipe)) output.append(buf, n);
    int status = ::pclose(pipe);
    fs::remove(tmp);
    if (status != 0) return std::nullopt;

    LandmarkSet lm;
    std::istringstream in(output);
    for (int i = 0; i < kNumLandmarks; ++i)
        if (!(in >> lm.points[static_cast<size_t>(i)].x >> lm.points[static_cast<size_t>(i)].y))
            return std::nullopt;
    if (!lm.within_bounds(frame.pixels.width, frame.pixels.height)) return std::nullopt;
    return lm;
}

SimilarityTransform eye_alignment_transform(const LandmarkSet& landmarks,
                                            const AlignConfig& config) {
    Vec2 pl = landmarks.eye_center_a();
    Vec2 pr = landmarks.eye_center_b();
    double dx = pr.x - pl.x, dy = pr.y - pl.y;
    double len2 = dx * dx + dy * dy;
    if (len2 < 1e-18) fail(ErrorCode::DegenerateLandmarks, "eye centers coincide");

    double S = config.out_size;
    Vec2 tl{(0.5 - config.eye_dx) * S, config.eye_y * S};
    Vec2 tr{(0.5 + config.eye_dx) * S, config.eye_y * S};

    // Solve t = alpha * p + beta over complex coordinates.
    double tdx = tr.x - tl.x, tdy = tr.y - tl.y;
    SimilarityTransform m;
    m.a = (tdx * dx + tdy * dy) / len2;
    m.b = (tdy * dx - tdx * dy) / len2;
    m.tx = tl.x - (m.a * pl.x - m.b * pl.y);
    m.ty = tl.y - (m.b * pl.x + m.a * pl.y);
    return m;
}

AlignedFrame align_face(const Image& pixels, const LandmarkSet& landmarks,
                        const AlignConfig& config) {
    if (config.out_size < 8) fail(ErrorCode::InvalidConfig, "out_size must be >= 8");
    const Image* src = &pixels;
    Image gray;
    if (config.grayscale && pixels.channels == 3) {
        gray = to_grayscale(pixels);
        src = &gray;
    }

    AlignedFrame out;
    out.transform = eye_alignment_transform(landmarks, config);
    out.pixels.channels = src->channels;
    out.pixels.height = config.out_size;
    out.pixels.width = config.out_size;
    out.pixels.data.assign(
        static_cast<size_t>(src->channels) * config.out_size * config.out_size, 0.0);
    for (int y = 0; y < config.out_size; ++y)
        for (int x = 0; x < config.out_size; ++x) {
            Vec2 s = out.transform.apply_inverse(
                {static_cast<double>(x), static_cast<double>(y)});
            for (int c = 0; c < src->channels; ++c)
                out.pixels.at(c, y, x) = bilinear_sample(*src, c, s.y, s.x);
        }
    out.landmarks = landmarks;
    for (Vec2& p : out.landmarks.points) p = out.transform.apply(p);
    return out;
}

PreprocessResult preprocess_sequence(const std::vector<FrameRef>& frames,
                                     const LandmarkSource& source, const AlignConfig& config) {
    PreprocessResult result;
    for (const FrameRef& frame : frames) {
        std::optional<LandmarkSet> lm = detect_landmarks(frame, source);
        if (!lm) {
            result.discard_log.push_back({frame.index, "no landmarks"});
            continue;
        }
        try {
            AlignedFrame aligned = align_face(frame.pixels, *lm, config);
            aligned.identity = frame.identity;
            aligned.index = frame.index;
            aligned.labels = frame.labels;
            result.frames.push_back(std::move(aligned));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateLandmarks) throw;
            result.discard_log.push_back({frame.index, "degenerate landmarks"});
        }
    }
    return result;
}

AlignDatasetResult align_dataset(const Dataset& input, const LandmarkSource& source,
                                 const AlignConfig& config) {
    AlignDatasetResult out;
    out.dataset.source = input.source;
    out.dataset.metadata = input.metadata;
    out.dataset.metadata.image_height = config.out_size;
    out.dataset.metadata.image_width = config.out_size;
    size_t total = 0, dropped = 0;
    for (const auto& [id, frames] : input.subjects) {
        PreprocessResult seq = preprocess_sequence(frames, source, config);
        total += frames.size();
        dropped += seq.discard_log.size();
        std::vector<FrameRef> converted;
        converted.reserve(seq.frames.size());
        for (AlignedFrame& af : seq.frames) {
            FrameRef f;
            f.identity = af.identity;
            f.index = af.index;
            f.labels = af.labels;
            f.landmark_status = LandmarkStatus::present;
            f.pixels = std::move(af.pixels);
            f.landmarks = af.landmarks;
            converted.push_back(std::move(f));
        }
        if (!converted.empty()) {
            out.dataset.metadata.channels = converted.front().pixels.channels;
            out.dataset.subjects.emplace(id, std::move(converted));
        }
        if (!seq.discard_log.empty()) out.discards.emplace(id, std::move(seq.discard_log));
    }
    out.discard_fraction = total == 0 ? 0.0 : static_cast<double>(dropped) / static_cast<double>(total);
    return out;
}

}  // namespace psmlab
