#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace psmlab {

// ============================================================================
// Errors
// ============================================================================

enum class ErrorCode {
    // validation (CLI exit code 2)
    InvalidConfig,
    InvalidParams,
    MissingLabelFile,
    FrameCountMismatch,
    TooFewFrames,
    TooFewIdentities,
    TooFewSamples,
    TooFewPoints,
    EmptyDataset,
    EmptySide,
    UnknownIdentity,
    LengthMismatch,
    ShapeMismatch,
    DimMismatch,
    ConfigMismatch,
    DegenerateLandmarks,
    SequenceTooShort,
    SchemaMismatch,
    // runtime / numeric (CLI exit code 3)
    CorruptImage,
    IoError,
    NonFiniteLoss,
};

const char* error_code_name(ErrorCode code);
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

// ============================================================================
// Deterministic RNG
//
// SplitMix64 stream. Self-contained so sequences are identical across
// platforms and standard-library versions. fork() derives an independent
// substream from the original seed, so per-item streams do not depend on
// how much of the parent sequence was consumed.
// ============================================================================

class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    int uniform_int(int lo, int hi);        // inclusive bounds
    double normal(double mean = 0.0, double stddev = 1.0);
    Rng fork(uint64_t stream) const;

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
            int j = uniform_int(0, i);
            std::swap(items[static_cast<size_t>(i)], items[static_cast<size_t>(j)]);
        }
    }

private:
    uint64_t state_;
    uint64_t seed_;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

uint64_t hash_mix(uint64_t a, uint64_t b);
uint64_t fnv1a64(const void* data, size_t size);
uint64_t fnv1a64_file(const std::string& path);  // IoError if unreadable

// ============================================================================
// Small dense matrix (row-major)
// ============================================================================

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
};

// ============================================================================
// Raw float32 blobs (little-endian), the on-disk numeric format
// ============================================================================

void write_f32_file(const std::string& path, const double* data, size_t count);
/// expected_count >= 0 enforces the element count (SchemaMismatch otherwise).
std::vector<double> read_f32_file(const std::string& path, long expected_count = -1);

std::string version_string();

}  // namespace psmlab
