#pragma once

// Synthetic face sequences with known motion factors. Each subject is a
// procedurally drawn face whose brows, jaw, mouth corners and cheek/nose
// region move under a slow mean-reverting process; AU labels are derived
// from the same factors that drive the rendering, so labels are recoverable
// from pixels by construction.

#include <array>
#include <string>
#include <vector>

#include "psmlab/dataset.hpp"

namespace psmlab {

constexpr int kMotionFactors = 4;

struct SynthConfig {
    int subjects = 3;
    int frames_per_subject = 500;
    int image_size = 32;
    int channels = 1;           // 1 or 3
    uint64_t seed = 7;
    double speckle_sigma = 0.12;      // per-pixel noise, 0 disables
    double illumination_jitter = 0.12;  // per-frame gradient amplitude
    double rotation_jitter_deg = 0.0;  // per-frame in-plane rotation, uniform +-
    double offset_jitter = 0.0;        // per-frame translation, fraction of size
    bool person_specific_patterns = true;
    double signature_rate = 0.04;  // fraction of frames forced into a rare pose
    bool with_landmarks = true;
};

using FactorVec = std::array<double, kMotionFactors>;

/// Stable per-person appearance and label couplings.
struct PersonTraits {
    double face_width = 1.0;   // scale on face half-width
    double eye_gap = 1.0;      // scale on inter-eye distance
    double mouth_width = 1.0;
    double brow_offset = 0.0;  // resting brow height shift, fraction of size
    double stroke_gain = 1.0;  // feature darkness multiplier
    // Which motion factor drives each feature group (brow, jaw, corner, cheek).
    std::array<int, kMotionFactors> factor_source{0, 1, 2, 3};
    std::array<double, kNumAus> threshold_jitter{};
    // Rare pose characteristic for this person, injected at signature_frames.
    FactorVec signature_pose{0.9, -0.9, 0.9, -0.9};
    std::vector<int> signature_frames;
};

PersonTraits person_traits(const SynthConfig& config, int subject_index);

/// Mean-reverting factor walk, one FactorVec per frame, clamped to [-1,1].
/// Signature frames from `traits` are overwritten with the signature pose.
std::vector<FactorVec> factor_trajectory(const SynthConfig& config, const PersonTraits& traits,
                                         int subject_index);

/// AU labels implied by the effective (source-permuted) factors.
AURecord labels_from_factors(const PersonTraits& traits, const FactorVec& factors);

/// Noise-free face in canonical pose. `rotation_rad` and `offset` transform
/// the whole scene; the scene is evaluated through the inverse map, so no
/// resampling artefacts are introduced.
Image render_face(const SynthConfig& config, const PersonTraits& traits, const FactorVec& factors,
                  double rotation_rad = 0.0, double offset_x = 0.0, double offset_y = 0.0);

/// 68-point landmark set consistent with render_face under the same pose.
LandmarkSet landmarks_for(const SynthConfig& config, const PersonTraits& traits,
                          const FactorVec& factors, double rotation_rad = 0.0,
                          double offset_x = 0.0, double offset_y = 0.0);

/// Full dataset: subjects "SY001".., per-frame labels, pixels and landmarks.
Dataset synth_generate(const SynthConfig& config);

}  // namespace psmlab
