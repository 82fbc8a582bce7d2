#pragma once

// Shared fixtures for the test binaries.

#include <filesystem>
#include <string>

#include "psmlab/common.hpp"
#include "psmlab/cycle.hpp"
#include "psmlab/dataset.hpp"
#include "psmlab/synth.hpp"

namespace psmlab::test {

/// Self-deleting directory under the system temp root.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("psmlab_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }
    std::string sub(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

/// Miniature model config used by the gradient checks and fast train tests.
inline ModelConfig mini_model_config() {
    ModelConfig c;
    c.image_size = 8;
    c.channels = 1;
    c.embed_dim = 4;
    c.base_width = 2;
    return c;
}

/// Small clean synthetic config: no pixel noise or pose jitter, so image
/// comparisons are exact up to quantization.
inline SynthConfig clean_synth_config(int subjects = 1, int frames = 40, int size = 16) {
    SynthConfig c;
    c.subjects = subjects;
    c.frames_per_subject = frames;
    c.image_size = size;
    c.channels = 1;
    c.seed = 99;
    c.speckle_sigma = 0.0;
    c.illumination_jitter = 0.0;
    return c;
}

/// Random image with entries in [0,1].
inline Image random_image(int channels, int size, Rng& rng) {
    Image img(channels, size, size);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

}  // namespace psmlab::test
