#include "psmlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace psmlab {

std::vector<std::string> Dataset::identities() const {
    std::vector<std::string> ids;
    ids.reserve(subjects.size());
    for (const auto& [id, _] : subjects) ids.push_back(id);
    return ids;
}

const std::vector<FrameRef>& Dataset::frames_of(const std::string& identity) const {
    auto it = subjects.find(identity);
    if (it == subjects.end()) fail(ErrorCode::UnknownIdentity, "no such identity: " + identity);
    return it->second;
}

size_t Dataset::total_frames() const {
    size_t n = 0;
    for (const auto& [_, frames] : subjects) n += frames.size();
    return n;
}

double Dataset::discard_fraction() const {
    size_t total = 0, missing = 0;
    for (const auto& [_, frames] : subjects)
        for (const FrameRef& f : frames) {
            ++total;
            if (f.landmark_status == LandmarkStatus::missing) ++missing;
        }
    return total == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(total);
}

// ----------------------------------------------------------------------------
// Tree loading
// ----------------------------------------------------------------------------

namespace {

std::string substitute(std::string pattern, const std::string& key, const std::string& value) {
    std::string token = "{" + key + "}";
    size_t pos = 0;
    while ((pos = pattern.find(token, pos)) != std::string::npos) {
        pattern.replace(pos, token.size(), value);
        pos += value.size();
    }
    return pattern;
}

std::vector<fs::path> sorted_files(const fs::path& dir) {
    std::vector<fs::path> files;
    if (!fs::exists(dir)) return files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    return files;
}

struct LabelColumn {
    std::vector<int> frame_indices;
    std::vector<int> intensities;
};

LabelColumn read_label_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::MissingLabelFile, "cannot open label file: " + path);
    LabelColumn col;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        int frame = 0, intensity = 0;
        char comma = 0;
        std::istringstream ls(line);
        if (!(ls >> frame >> comma >> intensity) || comma != ',')
            fail(ErrorCode::SchemaMismatch,
                 path + " line " + std::to_string(line_no) + ": expected 'frame_index,intensity'");
        if (intensity < 0 || intensity > 5)
            fail(ErrorCode::SchemaMismatch,
                 path + " line " + std::to_string(line_no) + ": intensity out of range [0,5]");
        col.frame_indices.push_back(frame);
        col.intensities.push_back(intensity);
    }
    return col;
}

}  // namespace

TreeLayout load_tree_layout(const std::string& root) {
    TreeLayout layout;
    fs::path manifest = fs::path(root) / "layout.json";
    if (!fs::exists(manifest)) return layout;
    std::ifstream in(manifest);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail(ErrorCode::SchemaMismatch, "layout.json parse error: " + std::string(e.what()));
    }
    layout.frames_dir = j.value("frames_dir", layout.frames_dir);
    layout.au_dir = j.value("au_dir", layout.au_dir);
    layout.au_file_pattern = j.value("au_file_pattern", layout.au_file_pattern);
    layout.landmark_ext = j.value("landmark_ext", layout.landmark_ext);
    return layout;
}

Dataset load_disfa(const std::string& root_path, const std::string& landmark_dir) {
    if (!fs::exists(root_path))
        fail(ErrorCode::MissingLabelFile, "dataset root does not exist: " + root_path);
    TreeLayout layout = load_tree_layout(root_path);

    std::vector<std::string> subject_ids;
    for (const auto& entry : fs::directory_iterator(root_path))
        if (entry.is_directory() && entry.path().filename().string() != "landmarks")
            subject_ids.push_back(entry.path().filename().string());
    std::sort(subject_ids.begin(), subject_ids.end());
    if (subject_ids.empty())
        fail(ErrorCode::MissingLabelFile, "no subject directories under " + root_path);

    Dataset dataset;
    dataset.source = DatasetSource::disfa;

    for (const std::string& id : subject_ids) {
        fs::path subject_dir = fs::path(root_path) / id;
        std::vector<fs::path> frame_files = sorted_files(subject_dir / layout.frames_dir);
        if (frame_files.empty())
            fail(ErrorCode::MissingLabelFile, "no frames for subject " + id);

        // One label column per AU; all must agree on row count and indices.
        std::array<LabelColumn, kNumAus> columns;
        for (int a = 0; a < kNumAus; ++a) {
            std::string fname = substitute(
                substitute(layout.au_file_pattern, "id", id), "au",
                std::to_string(kAuIds[static_cast<size_t>(a)]));
            fs::path label_path = subject_dir / layout.au_dir / fname;
            if (!fs::exists(label_path))
                fail(ErrorCode::MissingLabelFile, "missing label file: " + label_path.string());
            columns[static_cast<size_t>(a)] = read_label_file(label_path.string());
            if (columns[static_cast<size_t>(a)].frame_indices.size() != frame_files.size())
                fail(ErrorCode::FrameCountMismatch,
                     label_path.string() + ": " +
                         std::to_string(columns[static_cast<size_t>(a)].frame_indices.size()) +
                         " label rows for " + std::to_string(frame_files.size()) + " frames");
            if (columns[static_cast<size_t>(a)].frame_indices != columns[0].frame_indices)
                fail(ErrorCode::SchemaMismatch,
                     label_path.string() + ": frame indices disagree with first AU file");
        }

        std::vector<FrameRef> frames;
        frames.reserve(frame_files.size());
        for (size_t i = 0; i < frame_files.size(); ++i) {
            FrameRef frame;
            frame.identity = id;
            frame.index = columns[0].frame_indices[i];
            std::array<int, kNumAus> intensities{};
            for (int a = 0; a < kNumAus; ++a)
                intensities[static_cast<size_t>(a)] = columns[static_cast<size_t>(a)].intensities[i];
            frame.labels = AURecord::from_intensities(intensities);
            frame.pixels = load_image(frame_files[i].string());

            if (!landmark_dir.empty()) {
                fs::path lm_path = fs::path(landmark_dir) / id /
                                   (frame_files[i].stem().string() + layout.landmark_ext);
                if (fs::exists(lm_path)) {
                    LandmarkSet lm = load_landmarks(lm_path.string());
                    if (lm.within_bounds(frame.pixels.width, frame.pixels.height)) {
                        frame.landmarks = lm;
                    } else {
                        frame.landmark_status = LandmarkStatus::missing;
                    }
                } else {
                    frame.landmark_status = LandmarkStatus::missing;
                }
            }

            if (!frames.empty() && frame.index <= frames.back().index)
                fail(ErrorCode::SchemaMismatch,
                     id + ": frame indices not strictly increasing at row " + std::to_string(i));
            frames.push_back(std::move(frame));
        }

        dataset.metadata.image_height = frames.front().pixels.height;
        dataset.metadata.image_width = frames.front().pixels.width;
        dataset.metadata.channels = frames.front().pixels.channels;
        dataset.subjects.emplace(id, std::move(frames));
    }
    return dataset;
}

void write_disfa_tree(const Dataset& dataset, const std::string& root_path, bool with_landmarks) {
    fs::create_directories(root_path);
    TreeLayout layout;
    for (const auto& [id, frames] : dataset.subjects) {
        fs::path subject_dir = fs::path(root_path) / id;
        fs::create_directories(subject_dir / layout.frames_dir);
        fs::create_directories(subject_dir / layout.au_dir);

        std::array<std::ofstream, kNumAus> label_files;
        for (int a = 0; a < kNumAus; ++a) {
            std::string fname = substitute(
                substitute(layout.au_file_pattern, "id", id), "au",
                std::to_string(kAuIds[static_cast<size_t>(a)]));
            label_files[static_cast<size_t>(a)].open(subject_dir / layout.au_dir / fname);
            if (!label_files[static_cast<size_t>(a)])
                fail(ErrorCode::IoError, "cannot write label file for " + id);
        }

        for (const FrameRef& frame : frames) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%05d", frame.index);
            std::string stem(name);
            std::string ext = frame.pixels.channels == 3 ? ".ppm" : ".pgm";
            save_image(frame.pixels, (subject_dir / layout.frames_dir / (stem + ext)).string());
            for (int a = 0; a < kNumAus; ++a)
                label_files[static_cast<size_t>(a)]
                    << frame.index << "," << frame.labels.intensities[static_cast<size_t>(a)]
                    << "\n";
            if (with_landmarks && frame.landmarks) {
                fs::path lm_dir = fs::path(root_path) / "landmarks" / id;
                fs::create_directories(lm_dir);
                save_landmarks(*frame.landmarks, (lm_dir / (stem + layout.landmark_ext)).string());
            }
        }
    }
}

// ----------------------------------------------------------------------------
// Splits
// ----------------------------------------------------------------------------

StratifiedSplit stratified_split(const std::vector<FrameRef>& frames, double train_fraction,
                                 uint64_t seed) {
    int n = static_cast<int>(frames.size());
    if (n < 10) fail(ErrorCode::TooFewFrames, "stratified_split needs >= 10 frames");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        fail(ErrorCode::InvalidParams, "train_fraction must be in (0,1)");

    int n_train = static_cast<int>(std::lround(train_fraction * n));
    n_train = std::clamp(n_train, 1, n - 1);
    int capacity[2] = {n_train, n - n_train};

    // Fractional per-split targets of positives for each AU.
    double desired[2][kNumAus];
    for (int a = 0; a < kNumAus; ++a) {
        int pos = 0;
        for (const FrameRef& f : frames)
            if (f.labels.binary[static_cast<size_t>(a)]) ++pos;
        desired[0][a] = pos * train_fraction;
        desired[1][a] = pos * (1.0 - train_fraction);
    }

    Rng rng(seed);
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    rng.shuffle(order);

    std::vector<int> assignment(static_cast<size_t>(n), -1);
    auto assign = [&](int frame_idx, int split) {
        assignment[static_cast<size_t>(frame_idx)] = split;
        --capacity[split];
        for (int a = 0; a < kNumAus; ++a)
            if (frames[static_cast<size_t>(frame_idx)].labels.binary[static_cast<size_t>(a)])
                desired[split][a] -= 1.0;
    };

    // Iterative proportional assignment: repeatedly take the AU with the
    // fewest unassigned positives and place its frames where the remaining
    // demand for that AU is greatest.
    while (true) {
        int best_au = -1;
        int best_count = 0;
        for (int a = 0; a < kNumAus; ++a) {
            int count = 0;
            for (int i = 0; i < n; ++i)
                if (assignment[static_cast<size_t>(i)] < 0 &&
                    frames[static_cast<size_t>(i)].labels.binary[static_cast<size_t>(a)])
                    ++count;
            if (count > 0 && (best_au < 0 || count < best_count)) {
                best_au = a;
                best_count = count;
            }
        }
        if (best_au < 0) break;
        for (int oi = 0; oi < n; ++oi) {
            int i = order[static_cast<size_t>(oi)];
            if (assignment[static_cast<size_t>(i)] >= 0) continue;
            if (!frames[static_cast<size_t>(i)].labels.binary[static_cast<size_t>(best_au)])
                continue;
            int split;
            if (capacity[0] == 0) split = 1;
            else if (capacity[1] == 0) split = 0;
            else if (desired[0][best_au] > desired[1][best_au]) split = 0;
            else if (desired[1][best_au] > desired[0][best_au]) split = 1;
            else if (capacity[0] != capacity[1]) split = capacity[0] > capacity[1] ? 0 : 1;
            else split = rng.uniform_int(0, 1);
            assign(i, split);
        }
    }

    // Frames with no positive AU: fill by remaining capacity.
    for (int oi = 0; oi < n; ++oi) {
        int i = order[static_cast<size_t>(oi)];
        if (assignment[static_cast<size_t>(i)] >= 0) continue;
        int split;
        if (capacity[0] == 0) split = 1;
        else if (capacity[1] == 0) split = 0;
        else if (capacity[0] != capacity[1]) split = capacity[0] > capacity[1] ? 0 : 1;
        else split = rng.uniform_int(0, 1);
        assign(i, split);
    }

    StratifiedSplit out;
    for (int i = 0; i < n; ++i)
        (assignment[static_cast<size_t>(i)] == 0 ? out.train_indices : out.test_indices)
            .push_back(i);
    return out;
}

std::vector<std::vector<std::string>> identity_folds(const std::vector<std::string>& identities,
                                                     int k, uint64_t seed) {
    if (k < 1) fail(ErrorCode::InvalidParams, "k must be >= 1");
    if (static_cast<int>(identities.size()) < k)
        fail(ErrorCode::TooFewIdentities,
             std::to_string(identities.size()) + " identities for " + std::to_string(k) +
                 " folds");
    std::vector<std::string> pool = identities;
    std::sort(pool.begin(), pool.end());
    Rng rng(seed);
    rng.shuffle(pool);

    int n = static_cast<int>(pool.size());
    std::vector<std::vector<std::string>> folds(static_cast<size_t>(k));
    int base = n / k, extra = n % k, cursor = 0;
    for (int f = 0; f < k; ++f) {
        int size = base + (f < extra ? 1 : 0);
        for (int i = 0; i < size; ++i) folds[static_cast<size_t>(f)].push_back(pool[static_cast<size_t>(cursor++)]);
        std::sort(folds[static_cast<size_t>(f)].begin(), folds[static_cast<size_t>(f)].end());
    }
    return folds;
}

// ----------------------------------------------------------------------------
// Statistics
// ----------------------------------------------------------------------------

namespace {

/// Pearson correlation of two equal-length binary series; nullopt when either
/// side has zero variance.
std::optional<double> pearson_binary(const std::vector<char>& a, const std::vector<char>& b) {
    size_t n = a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (size_t i = 0; i < n; ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

AuStatistics au_statistics(const Dataset& dataset) {
    if (dataset.subjects.empty() || dataset.total_frames() == 0)
        fail(ErrorCode::EmptyDataset, "au_statistics on empty dataset");

    AuStatistics stats;
    size_t total = 0;
    std::array<long, kNumAus> pos{};
    std::array<std::array<long, kNumAus>, kNumAus> joint{};

    for (const auto& [id, frames] : dataset.subjects) {
        std::array<double, kNumAus> subj{};
        for (const FrameRef& f : frames) {
            ++total;
            for (int i = 0; i < kNumAus; ++i) {
                if (!f.labels.binary[static_cast<size_t>(i)]) continue;
                ++pos[static_cast<size_t>(i)];
                subj[static_cast<size_t>(i)] += 1.0;
                for (int j = 0; j < kNumAus; ++j)
                    if (f.labels.binary[static_cast<size_t>(j)]) ++joint[static_cast<size_t>(i)][static_cast<size_t>(j)];
            }
        }
        for (int i = 0; i < kNumAus; ++i) subj[static_cast<size_t>(i)] /= static_cast<double>(frames.size());
        stats.per_subject_frequency.emplace(id, subj);
    }

    for (int i = 0; i < kNumAus; ++i)
        stats.per_au_frequency[static_cast<size_t>(i)] = static_cast<double>(pos[static_cast<size_t>(i)]) / static_cast<double>(total);

    for (int i = 0; i < kNumAus; ++i)
        for (int j = 0; j < kNumAus; ++j)
            stats.cooccurrence[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                pos[static_cast<size_t>(j)] == 0
                    ? std::nan("")
                    : static_cast<double>(joint[static_cast<size_t>(i)][static_cast<size_t>(j)]) /
                          static_cast<double>(pos[static_cast<size_t>(j)]);

    // Cross-subject temporal correlation: Pearson between two subjects'
    // binary AU series truncated to their common length, averaged over all
    // subject pairs and AUs; zero-variance series are excluded.
    std::vector<std::string> ids = dataset.identities();
    double acc = 0.0;
    int used = 0, excluded = 0;
    for (size_t a = 0; a < ids.size(); ++a) {
        for (size_t b = a + 1; b < ids.size(); ++b) {
            const auto& fa = dataset.subjects.at(ids[a]);
            const auto& fb = dataset.subjects.at(ids[b]);
            size_t len = std::min(fa.size(), fb.size());
            if (len < 2) {
                excluded += kNumAus;
                continue;
            }
            for (int au = 0; au < kNumAus; ++au) {
                std::vector<char> sa(len), sb(len);
                for (size_t t = 0; t < len; ++t) {
                    sa[t] = fa[t].labels.binary[static_cast<size_t>(au)] ? 1 : 0;
                    sb[t] = fb[t].labels.binary[static_cast<size_t>(au)] ? 1 : 0;
                }
                std::optional<double> r = pearson_binary(sa, sb);
                if (r) {
                    acc += *r;
                    ++used;
                } else {
                    ++excluded;
                }
            }
        }
    }
    stats.cross_subject_temporal_correlation = used > 0 ? acc / used : 0.0;
    stats.correlation_terms_used = used;
    stats.correlation_terms_excluded = excluded;
    return stats;
}

}  // namespace psmlab
