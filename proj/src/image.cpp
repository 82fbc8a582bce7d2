#include "psmlab/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace psmlab {

Image mirror_horizontal(const Image& img) {
    Image out(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    return out;
}

Image to_grayscale(const Image& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3)
        fail(ErrorCode::ShapeMismatch, "grayscale conversion expects 1 or 3 channels");
    Image out(1, img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(0, y, x) = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) +
                              0.114 * img.at(2, y, x);
    return out;
}

bool all_finite(const Image& img) {
    for (double v : img.data)
        if (!std::isfinite(v)) return false;
    return true;
}

double bilinear_sample(const Image& img, int channel, double y, double x) {
    double cx = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    double cy = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    int x0 = static_cast<int>(std::floor(cx));
    int y0 = static_cast<int>(std::floor(cy));
    int x1 = std::min(x0 + 1, img.width - 1);
    int y1 = std::min(y0 + 1, img.height - 1);
    double fx = cx - x0;
    double fy = cy - y0;
    double v00 = img.at(channel, y0, x0);
    double v01 = img.at(channel, y0, x1);
    double v10 = img.at(channel, y1, x0);
    double v11 = img.at(channel, y1, x1);
    return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
}

double mean_abs_difference(const Image& a, const Image& b) {
    if (!a.same_shape(b)) fail(ErrorCode::ShapeMismatch, "mean_abs_difference shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) acc += std::fabs(a.data[i] - b.data[i]);
    return acc / static_cast<double>(a.data.size());
}

// ----------------------------------------------------------------------------
// PGM / PPM
// ----------------------------------------------------------------------------

namespace {

// Reads the next whitespace-separated token, skipping '#' comment lines.
bool next_token(std::istream& in, std::string& tok) {
    tok.clear();
    int ch = 0;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (!std::isspace(ch)) break;
    }
    if (ch == EOF) return false;
    tok.push_back(static_cast<char>(ch));
    while ((ch = in.get()) != EOF && !std::isspace(ch)) tok.push_back(static_cast<char>(ch));
    return true;
}

int parse_positive_int(const std::string& tok, const std::string& path) {
    try {
        size_t used = 0;
        int value = std::stoi(tok, &used);
        if (used != tok.size() || value <= 0)
            fail(ErrorCode::CorruptImage, "bad header value in " + path);
        return value;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail(ErrorCode::CorruptImage, "bad header value in " + path);
    }
}

}  // namespace

Image load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::CorruptImage, "cannot open image: " + path);

    std::string magic, tok;
    if (!next_token(in, magic)) fail(ErrorCode::CorruptImage, "empty image file: " + path);
    int channels = 0;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else fail(ErrorCode::CorruptImage, "unsupported image format '" + magic + "' in " + path);

    if (!next_token(in, tok)) fail(ErrorCode::CorruptImage, "truncated header: " + path);
    int width = parse_positive_int(tok, path);
    if (!next_token(in, tok)) fail(ErrorCode::CorruptImage, "truncated header: " + path);
    int height = parse_positive_int(tok, path);
    if (!next_token(in, tok)) fail(ErrorCode::CorruptImage, "truncated header: " + path);
    int maxval = parse_positive_int(tok, path);
    if (maxval > 255) fail(ErrorCode::CorruptImage, "only 8-bit images supported: " + path);

    size_t n = static_cast<size_t>(width) * height * channels;
    std::vector<unsigned char> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
        fail(ErrorCode::CorruptImage, "truncated pixel data: " + path);

    Image img(channels, height, width);
    size_t k = 0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = static_cast<double>(raw[k++]) / maxval;
    return img;
}

void save_image(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        fail(ErrorCode::ShapeMismatch, "save_image expects 1 or 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write image: " + path);
    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw;
    raw.reserve(img.size());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
                raw.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
            }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) fail(ErrorCode::IoError, "short write: " + path);
}

}  // namespace psmlab
