#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "psmlab/au.hpp"
#include "psmlab/image.hpp"
#include "psmlab/landmarks.hpp"

namespace psmlab {

enum class LandmarkStatus { present, missing };

struct FrameRef {
    std::string identity;
    int index = 0;  // frame position within the video
    AURecord labels;
    LandmarkStatus landmark_status = LandmarkStatus::present;
    Image pixels;
    std::optional<LandmarkSet> landmarks;  // ground truth or precomputed, when available
};

enum class DatasetSource { disfa, synthetic };

struct DatasetMeta {
    int image_height = 0;
    int image_width = 0;
    int channels = 1;
    double fps = 20.0;
};

struct Dataset {
    std::map<std::string, std::vector<FrameRef>> subjects;  // ordered by identity
    DatasetSource source = DatasetSource::synthetic;
    DatasetMeta metadata;

    std::vector<std::string> identities() const;
    const std::vector<FrameRef>& frames_of(const std::string& identity) const;  // UnknownIdentity
    size_t total_frames() const;
    double discard_fraction() const;  // fraction of frames with missing landmarks
};

// ----------------------------------------------------------------------------
// On-disk layout (see README): one directory per subject with frames/ and au/
// subfolders; per-AU label files hold one "frame_index,intensity" line per
// frame. An optional layout.json at the root remaps directory and file names.
// ----------------------------------------------------------------------------

struct TreeLayout {
    std::string frames_dir = "frames";
    std::string au_dir = "au";
    std::string au_file_pattern = "{id}_au{au}.csv";  // {id}, {au} placeholders
    std::string landmark_ext = ".txt";
};

TreeLayout load_tree_layout(const std::string& root);  // reads layout.json if present

Dataset load_disfa(const std::string& root_path, const std::string& landmark_dir = "");
void write_disfa_tree(const Dataset& dataset, const std::string& root_path,
                      bool with_landmarks = true);

// ----------------------------------------------------------------------------
// Splits
// ----------------------------------------------------------------------------

struct StratifiedSplit {
    std::vector<int> train_indices;
    std::vector<int> test_indices;
};

/// Random 80/20-style split of one subject's frames that approximately
/// preserves each AU's positive rate on both sides (iterative proportional
/// assignment over the multi-label set; within 2 percentage points when
/// counts allow).
StratifiedSplit stratified_split(const std::vector<FrameRef>& frames,
                                 double train_fraction, uint64_t seed);

std::vector<std::vector<std::string>> identity_folds(const std::vector<std::string>& identities,
                                                     int k, uint64_t seed);

// ----------------------------------------------------------------------------
// Statistics
// ----------------------------------------------------------------------------

struct AuStatistics {
    std::array<double, kNumAus> per_au_frequency{};
    std::map<std::string, std::array<double, kNumAus>> per_subject_frequency;
    /// cooccurrence[i][j] = P(AU_i = 1 | AU_j = 1); NaN when AU_j never fires.
    std::array<std::array<double, kNumAus>, kNumAus> cooccurrence{};
    double cross_subject_temporal_correlation = 0.0;
    int correlation_terms_used = 0;
    int correlation_terms_excluded = 0;  // zero-variance series pairs
};

AuStatistics au_statistics(const Dataset& dataset);  // EmptyDataset

}  // namespace psmlab
