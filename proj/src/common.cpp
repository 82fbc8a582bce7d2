#include "psmlab/common.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

namespace psmlab {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::InvalidParams: return "InvalidParams";
        case ErrorCode::MissingLabelFile: return "MissingLabelFile";
        case ErrorCode::FrameCountMismatch: return "FrameCountMismatch";
        case ErrorCode::TooFewFrames: return "TooFewFrames";
        case ErrorCode::TooFewIdentities: return "TooFewIdentities";
        case ErrorCode::TooFewSamples: return "TooFewSamples";
        case ErrorCode::TooFewPoints: return "TooFewPoints";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::EmptySide: return "EmptySide";
        case ErrorCode::UnknownIdentity: return "UnknownIdentity";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::ConfigMismatch: return "ConfigMismatch";
        case ErrorCode::DegenerateLandmarks: return "DegenerateLandmarks";
        case ErrorCode::SequenceTooShort: return "SequenceTooShort";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::CorruptImage: return "CorruptImage";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    }
    return "Unknown";
}

bool is_validation_error(ErrorCode code) {
    switch (code) {
        case ErrorCode::CorruptImage:
        case ErrorCode::IoError:
        case ErrorCode::NonFiniteLoss:
            return false;
        default:
            return true;
    }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

// ----------------------------------------------------------------------------
// Rng
// ----------------------------------------------------------------------------

namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

uint64_t splitmix_next(uint64_t& state) {
    state += kGolden;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(uint64_t seed) : state_(seed), seed_(seed) {
    // burn one step so seed 0 and seed kGolden do not collide on first draw
    splitmix_next(state_);
}

uint64_t Rng::next_u64() { return splitmix_next(state_); }

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(static_cast<int64_t>(hi) - lo) + 1;
    unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * span;
    return lo + static_cast<int>(wide >> 64);
}

double Rng::normal(double mean, double stddev) {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return mean + stddev * cached_normal_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return mean + stddev * r * std::cos(theta);
}

Rng Rng::fork(uint64_t stream) const { return Rng(hash_mix(seed_, stream)); }

uint64_t hash_mix(uint64_t a, uint64_t b) {
    uint64_t state = a ^ (b * 0xff51afd7ed558ccdULL + kGolden);
    splitmix_next(state);
    return splitmix_next(state);
}

uint64_t fnv1a64(const void* data, size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open for hashing: " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    return h;
}

namespace {

// Parameter and embedding files are raw little-endian float32; this code
// assumes a little-endian host (checked once at startup cost, not per call).
static_assert(std::endian::native == std::endian::little,
              "f32 blob io assumes a little-endian host");

}  // namespace

void write_f32_file(const std::string& path, const double* data, size_t count) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write: " + path);
    std::vector<float> buf(count);
    for (size_t i = 0; i < count; ++i) buf[i] = static_cast<float>(data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(count * sizeof(float)));
    if (!out) fail(ErrorCode::IoError, "short write: " + path);
}

std::vector<double> read_f32_file(const std::string& path, long expected_count) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) fail(ErrorCode::IoError, "cannot read: " + path);
    std::streamsize bytes = in.tellg();
    if (bytes % static_cast<std::streamsize>(sizeof(float)) != 0)
        fail(ErrorCode::SchemaMismatch, path + ": size is not a multiple of 4 bytes");
    size_t count = static_cast<size_t>(bytes) / sizeof(float);
    if (expected_count >= 0 && count != static_cast<size_t>(expected_count))
        fail(ErrorCode::SchemaMismatch, path + ": expected " + std::to_string(expected_count) +
                                            " floats, found " + std::to_string(count));
    in.seekg(0);
    std::vector<float> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()), bytes);
    if (!in) fail(ErrorCode::IoError, "short read: " + path);
    std::vector<double> out(count);
    for (size_t i = 0; i < count; ++i) out[i] = static_cast<double>(buf[i]);
    return out;
}

std::string version_string() { return "psmlab 0.1.0"; }

}  // namespace psmlab
