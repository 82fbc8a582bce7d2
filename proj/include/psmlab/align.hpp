#pragma once

// Face normalization: a similarity transform computed from the two eye
// centers places every face in a canonical frame (eyes horizontal, fixed
// inter-ocular distance), so downstream models see facial motion rather
// than head motion.

#include <optional>
#include <string>
#include <vector>

#include "psmlab/dataset.hpp"

namespace psmlab {

/// Forward map p -> (a*x - b*y + tx, b*x + a*y + ty), source to canonical.
struct SimilarityTransform {
    double a = 1.0, b = 0.0, tx = 0.0, ty = 0.0;

    Vec2 apply(const Vec2& p) const {
        return {a * p.x - b * p.y + tx, b * p.x + a * p.y + ty};
    }
    Vec2 apply_inverse(const Vec2& p) const;
    double rotation_deg() const;
    double scale() const;
};

struct AlignConfig {
    int out_size = 64;
    bool grayscale = false;
    double eye_y = 0.40;   // canonical eye row, fraction of out_size
    double eye_dx = 0.19;  // half the inter-ocular distance, fraction of out_size
};

struct AlignedFrame {
    Image pixels;
    std::string identity;
    int index = 0;
    AURecord labels;
    SimilarityTransform transform;
    LandmarkSet landmarks;  // source landmarks mapped into the canonical frame
};

/// Where landmarks come from when preprocessing a sequence.
struct LandmarkSource {
    enum class Kind { stored, command };
    Kind kind = Kind::stored;
    std::string command;  // external detector: `command <image-file>` printing 68 "x y" lines
};

/// Never throws; anything the source cannot produce is `missing`.
std::optional<LandmarkSet> detect_landmarks(const FrameRef& frame, const LandmarkSource& source);

SimilarityTransform eye_alignment_transform(const LandmarkSet& landmarks,
                                            const AlignConfig& config);

AlignedFrame align_face(const Image& pixels, const LandmarkSet& landmarks,
                        const AlignConfig& config);

struct DiscardEntry {
    int index;
    std::string reason;
};

struct PreprocessResult {
    std::vector<AlignedFrame> frames;
    std::vector<DiscardEntry> discard_log;

    double discard_fraction() const {
        size_t total = frames.size() + discard_log.size();
        return total == 0 ? 0.0 : static_cast<double>(discard_log.size()) / static_cast<double>(total);
    }
};

/// Aligns one subject's frames in order; undetectable or degenerate frames
/// are dropped and logged, never fatal.
PreprocessResult preprocess_sequence(const std::vector<FrameRef>& frames,
                                     const LandmarkSource& source, const AlignConfig& config);

/// Whole-dataset convenience: subjects aligned independently, result is a
/// regular Dataset whose frames carry canonical-space landmarks.
struct AlignDatasetResult {
    Dataset dataset;
    std::map<std::string, std::vector<DiscardEntry>> discards;
    double discard_fraction = 0.0;
};

AlignDatasetResult align_dataset(const Dataset& input, const LandmarkSource& source,
                                 const AlignConfig& config);

}  // namespace psmlab
