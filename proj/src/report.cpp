#include "psmlab/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "psmlab/metrics.hpp"

namespace psmlab {
namespace {

namespace fs = std::filesystem;

std::string fmt(double v, int prec = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

// Minimal SVG accumulator; every coordinate is formatted to 0.01 px so
// output is byte-stable across runs.
class Svg {
public:
    Svg(double w, double h) : w_(w), h_(h) {}

    void rect(double x, double y, double w, double h, const std::string& fill,
              const std::string& stroke = "none") {
        body_ << "<rect x=\"" << fmt(x, 2) << "\" y=\"" << fmt(y, 2) << "\" width=\"" << fmt(w, 2)
              << "\" height=\"" << fmt(h, 2) << "\" fill=\"" << fill << "\" stroke=\"" << stroke
              << "\"/>\n";
    }
    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double width = 1.0) {
        body_ << "<line x1=\"" << fmt(x1, 2) << "\" y1=\"" << fmt(y1, 2) << "\" x2=\"" << fmt(x2, 2)
              << "\" y2=\"" << fmt(y2, 2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
              << fmt(width, 2) << "\"/>\n";
    }
    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
        body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : pts) body_ << fmt(x, 2) << "," << fmt(y, 2) << " ";
        body_ << "\"/>\n";
    }
    void text(double x, double y, const std::string& s, int size = 11,
              const std::string& anchor = "start") {
        body_ << "<text x=\"" << fmt(x, 2) << "\" y=\"" << fmt(y, 2) << "\" font-size=\"" << size
              << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << escape(s)
              << "</text>\n";
    }

    std::string str() const {
        std::ostringstream out;
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w_, 0) << "\" height=\""
            << fmt(h_, 0) << "\" viewBox=\"0 0 " << fmt(w_, 0) << " " << fmt(h_, 0) << "\">\n"
            << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
            << body_.str() << "</svg>\n";
        return out.str();
    }

private:
    static std::string escape(const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c == '<') out += "&lt;";
            else if (c == '>') out += "&gt;";
            else if (c == '&') out += "&amp;";
            else out += c;
        }
        return out;
    }
    double w_, h_;
    std::ostringstream body_;
};

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out << content;
}

const nlohmann::json& require(const nlohmann::json& j, const std::string& field) {
    auto it = j.find(field);
    if (it == j.end()) fail(ErrorCode::SchemaMismatch, "report payload missing field '" + field + "'");
    return *it;
}

std::string significance_stars(double p) {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "n.s.";
}

// Shared palette; index wraps.
const char* series_color(size_t i) {
    static const char* kColors[] = {"#4878cf", "#e1812c", "#3a923a", "#c03d3e", "#8172b2", "#937860"};
    return kColors[i % 6];
}

// Grayscale heat ramp from white (0) to dark blue (1).
std::string heat_color(double v) {
    v = std::clamp(v, 0.0, 1.0);
    int r = static_cast<int>(std::lround(255 - 200 * v));
    int g = static_cast<int>(std::lround(255 - 170 * v));
    int b = static_cast<int>(std::lround(255 - 60 * v));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

struct Frame2D {
    // Plot area inside the margins; maps data coordinates to pixels.
    double left, top, width, height;
    double x_min, x_max, y_min, y_max;
    double px(double x) const { return left + (x - x_min) / (x_max - x_min) * width; }
    double py(double y) const { return top + height - (y - y_min) / (y_max - y_min) * height; }
};

void draw_y_axis(Svg& svg, const Frame2D& f, int ticks = 5) {
    svg.line(f.left, f.top, f.left, f.top + f.height, "#444444");
    svg.line(f.left, f.top + f.height, f.left + f.width, f.top + f.height, "#444444");
    for (int i = 0; i <= ticks; ++i) {
        double y = f.y_min + (f.y_max - f.y_min) * i / ticks;
        double py = f.py(y);
        svg.line(f.left - 3, py, f.left, py, "#444444");
        svg.line(f.left, py, f.left + f.width, py, "#e0e0e0", 0.5);
        svg.text(f.left - 6, py + 4, fmt(y, 2), 10, "end");
    }
}

// ---- individual styles ---------------------------------------------------

void render_fig2(const nlohmann::json& payload, const fs::path& dir) {
    const auto& models = require(payload, "models");
    if (!models.is_array() || models.empty())
        fail(ErrorCode::SchemaMismatch, "report payload field 'models' must be a non-empty array");

    struct Bar {
        std::string name;
        std::vector<double> samples;
        double mean, lo, hi;
    };
    std::vector<Bar> bars;
    for (const auto& m : models) {
        Bar b;
        b.name = require(m, "name").get<std::string>();
        b.samples = require(m, "f1_samples").get<std::vector<double>>();
        if (b.samples.empty())
            fail(ErrorCode::SchemaMismatch, "report payload field 'f1_samples' must be non-empty");
        double s = 0.0;
        for (double v : b.samples) s += v;
        b.mean = s / static_cast<double>(b.samples.size());
        b.lo = percentile(b.samples, 2.5);
        b.hi = percentile(b.samples, 97.5);
        bars.push_back(std::move(b));
    }

    nlohmann::json table;
    table["models"] = nlohmann::json::array();
    std::ostringstream csv;
    csv << "model,mean_f1,ci_low,ci_high\n";
    for (const auto& b : bars) {
        table["models"].push_back({{"name", b.name}, {"mean_f1", b.mean}, {"ci_low", b.lo}, {"ci_high", b.hi}});
        csv << b.name << "," << fmt(b.mean, 4) << "," << fmt(b.lo, 4) << "," << fmt(b.hi, 4) << "\n";
    }
    table["pairwise"] = nlohmann::json::array();
    for (size_t i = 0; i < bars.size(); ++i)
        for (size_t j = i + 1; j < bars.size(); ++j) {
            double p = welch_t_test(bars[i].samples, bars[j].samples);
            table["pairwise"].push_back({{"a", bars[i].name},
                                         {"b", bars[j].name},
                                         {"p", p},
                                         {"stars", significance_stars(p)}});
        }

    Svg svg(120 + 90.0 * bars.size(), 320);
    Frame2D f{60, 30, 90.0 * bars.size(), 230, 0, static_cast<double>(bars.size()), 0, 1.0};
    draw_y_axis(svg, f);
    for (size_t i = 0; i < bars.size(); ++i) {
        double cx = f.px(i + 0.5);
        double w = 44;
        svg.rect(cx - w / 2, f.py(bars[i].mean), w, f.py(0) - f.py(bars[i].mean), series_color(i));
        svg.line(cx, f.py(bars[i].lo), cx, f.py(bars[i].hi), "#222222", 1.5);
        svg.line(cx - 6, f.py(bars[i].lo), cx + 6, f.py(bars[i].lo), "#222222", 1.5);
        svg.line(cx - 6, f.py(bars[i].hi), cx + 6, f.py(bars[i].hi), "#222222", 1.5);
        svg.text(cx, f.top + f.height + 16, bars[i].name, 11, "middle");
        svg.text(cx, f.py(bars[i].mean) - 4, fmt(bars[i].mean, 3), 10, "middle");
    }
    // Stars over consecutive pairs.
    for (size_t i = 0; i + 1 < bars.size(); ++i) {
        double p = welch_t_test(bars[i].samples, bars[i + 1].samples);
        double x1 = f.px(i + 0.5), x2 = f.px(i + 1.5);
        double y = f.top + 10 + 14.0 * static_cast<double>(i % 2);
        svg.line(x1, y, x2, y, "#222222");
        svg.text((x1 + x2) / 2, y - 3, significance_stars(p), 11, "middle");
    }
    svg.text(f.left, 18, "mean F1 with 95% CI", 12);

    write_file(dir / "report.svg", svg.str());
    write_file(dir / "report.csv", csv.str());
    write_file(dir / "report.json", table.dump(2) + "\n");
}

void render_fig3(const nlohmann::json& payload, const fs::path& dir) {
    const auto& results = require(payload, "results");
    if (!results.is_array() || results.empty())
        fail(ErrorCode::SchemaMismatch, "report payload field 'results' must be a non-empty array");

    struct Series {
        std::string label;
        std::vector<int> aus;
        std::vector<double> mean, lo, hi;
    };
    std::vector<Series> series;
    for (const auto& r : results) {
        Series s;
        s.label = require(r, "label").get<std::string>();
        for (const auto& row : require(r, "per_au")) {
            s.aus.push_back(require(row, "au").get<int>());
            s.mean.push_back(require(row, "mean").get<double>());
            s.lo.push_back(require(row, "ci_low").get<double>());
            s.hi.push_back(require(row, "ci_high").get<double>());
        }
        series.push_back(std::move(s));
    }
    // x positions follow the first series' AU order.
    const std::vector<int>& aus = series.front().aus;
    if (aus.empty()) fail(ErrorCode::SchemaMismatch, "report payload field 'per_au' must be non-empty");

    std::ostringstream csv;
    csv << "au";
    for (const auto& s : series) csv << "," << s.label << "_mean," << s.label << "_ci_low," << s.label << "_ci_high";
    csv << "\n";
    for (size_t k = 0; k < aus.size(); ++k) {
        csv << aus[k];
        for (const auto& s : series) {
            auto it = std::find(s.aus.begin(), s.aus.end(), aus[k]);
            if (it == s.aus.end()) {
                csv << ",,,";
                continue;
            }
            size_t idx = static_cast<size_t>(it - s.aus.begin());
            csv << "," << fmt(s.mean[idx], 4) << "," << fmt(s.lo[idx], 4) << "," << fmt(s.hi[idx], 4);
        }
        csv << "\n";
    }

    double group_w = 26.0 * static_cast<double>(series.size()) + 18;
    Svg svg(90 + group_w * aus.size(), 330);
    Frame2D f{55, 30, group_w * aus.size(), 240, 0, static_cast<double>(aus.size()), 0, 1.0};
    draw_y_axis(svg, f);
    for (size_t k = 0; k < aus.size(); ++k) {
        for (size_t si = 0; si < series.size(); ++si) {
            const Series& s = series[si];
            auto it = std::find(s.aus.begin(), s.aus.end(), aus[k]);
            if (it == s.aus.end()) continue;
            size_t idx = static_cast<size_t>(it - s.aus.begin());
            double x = f.px(k) + 9 + 26.0 * si;
            svg.rect(x, f.py(s.mean[idx]), 22, f.py(0) - f.py(s.mean[idx]), series_color(si));
            double cx = x + 11;
            svg.line(cx, f.py(s.lo[idx]), cx, f.py(s.hi[idx]), "#222222");
            svg.line(cx - 4, f.py(s.lo[idx]), cx + 4, f.py(s.lo[idx]), "#222222");
            svg.line(cx - 4, f.py(s.hi[idx]), cx + 4, f.py(s.hi[idx]), "#222222");
        }
        svg.text(f.px(k + 0.5), f.top + f.height + 16, "AU" + std::to_string(aus[k]), 10, "middle");
    }
    for (size_t si = 0; si < series.size(); ++si) {
        double x = f.left + 10 + 110.0 * si;
        svg.rect(x, 10, 12, 12, series_color(si));
        svg.text(x + 16, 20, series[si].label, 11);
    }

    write_file(dir / "report.svg", svg.str());
    write_file(dir / "report.csv", csv.str());
    write_file(dir / "report.json", payload.dump(2) + "\n");
}

void render_fig4(const nlohmann::json& payload, const fs::path& dir) {
    const auto& matrix = require(payload, "normalized_matrix");
    const auto& psm_profiles = require(payload, "psm_profiles");
    const auto& gm_profiles = require(payload, "gm_profiles");
    std::vector<int> novel_psm = require(payload, "novel_psm").get<std::vector<int>>();
    std::vector<int> novel_gm = require(payload, "novel_gm").get<std::vector<int>>();

    size_t rows = matrix.size();
    size_t cols = rows > 0 ? matrix[0].size() : 0;
    if (rows == 0 || cols == 0)
        fail(ErrorCode::SchemaMismatch, "report payload field 'normalized_matrix' must be non-empty");

    double cell = 34;
    double heat_w = cell * static_cast<double>(cols);
    double heat_h = cell * static_cast<double>(rows);

    auto profile_block_h = [&](const nlohmann::json& profiles) {
        return profiles.empty() ? 0.0 : 86.0 * std::ceil(static_cast<double>(profiles.size()) / 4.0);
    };
    double width = std::max(120.0 + heat_w, 4 * 170.0 + 60.0);
    double height = 90 + heat_h + 40 + profile_block_h(psm_profiles) + 40 + profile_block_h(gm_profiles) + 30;
    Svg svg(width, height);

    svg.text(60, 24, "PSM vs GM cluster similarity (normalized)", 12);
    for (size_t r = 0; r < rows; ++r) {
        for (size_t c = 0; c < cols; ++c) {
            double v = matrix[r][c].get<double>();
            svg.rect(100 + cell * c, 40 + cell * r, cell - 2, cell - 2, heat_color(v), "#cccccc");
            svg.text(100 + cell * c + cell / 2 - 1, 40 + cell * r + cell / 2 + 3, fmt(v, 2), 8, "middle");
        }
        bool novel = std::find(novel_psm.begin(), novel_psm.end(), static_cast<int>(r)) != novel_psm.end();
        svg.text(92, 40 + cell * r + cell / 2 + 3, "P" + std::to_string(r), 10, "end");
        if (novel) svg.rect(100 + heat_w + 8, 40 + cell * r + 6, cell - 14, cell - 14, "#3a923a");
    }
    for (size_t c = 0; c < cols; ++c) {
        bool novel = std::find(novel_gm.begin(), novel_gm.end(), static_cast<int>(c)) != novel_gm.end();
        svg.text(100 + cell * c + cell / 2 - 1, 36 + heat_h + 14, "G" + std::to_string(c), 10, "middle");
        if (novel) svg.rect(100 + cell * c + 6, 40 + heat_h + 20, cell - 14, 8, "#3a923a");
    }

    auto draw_profiles = [&](const nlohmann::json& profiles, const std::vector<int>& novel,
                             const std::string& tag, double y0) {
        svg.text(60, y0 - 8, tag + " cluster AU profiles", 12);
        for (size_t p = 0; p < profiles.size(); ++p) {
            const auto& freq = require(profiles[p], "au_frequency");
            if (freq.size() != kAuIds.size())
                fail(ErrorCode::SchemaMismatch, "report payload field 'au_frequency' must have 12 entries");
            double bx = 60 + 170.0 * static_cast<double>(p % 4);
            double by = y0 + 86.0 * std::floor(static_cast<double>(p) / 4.0);
            int cluster_id = require(profiles[p], "cluster").get<int>();
            bool is_novel = std::find(novel.begin(), novel.end(), cluster_id) != novel.end();
            if (is_novel) svg.rect(bx - 4, by - 4, 160, 78, "none", "#3a923a");
            svg.text(bx, by + 8, tag + std::to_string(cluster_id) + (is_novel ? " (novel)" : ""), 10);
            for (size_t a = 0; a < kAuIds.size(); ++a) {
                double h = 50.0 * freq[a].get<double>();
                svg.rect(bx + 12.0 * a, by + 62 - h, 10, h, is_novel ? "#3a923a" : "#4878cf");
            }
        }
        return y0 + profile_block_h(profiles);
    };
    double y = 90 + heat_h + 40;
    y = draw_profiles(psm_profiles, novel_psm, "P", y);
    draw_profiles(gm_profiles, novel_gm, "G", y + 40);

    std::ostringstream csv;
    csv << "psm_cluster";
    for (size_t c = 0; c < cols; ++c) csv << ",gm" << c;
    csv << "\n";
    for (size_t r = 0; r < rows; ++r) {
        csv << r;
        for (size_t c = 0; c < cols; ++c) csv << "," << fmt(matrix[r][c].get<double>(), 4);
        csv << "\n";
    }

    write_file(dir / "report.svg", svg.str());
    write_file(dir / "report.csv", csv.str());
    write_file(dir / "report.json", payload.dump(2) + "\n");
}

void render_fig5(const nlohmann::json& payload, const fs::path& dir) {
    const auto& bars = require(payload, "bars");
    if (!bars.is_array() || bars.empty())
        fail(ErrorCode::SchemaMismatch, "report payload field 'bars' must be a non-empty array");

    double vmax = 0.0;
    std::vector<std::pair<std::string, double>> items;
    for (const auto& b : bars) {
        items.emplace_back(require(b, "label").get<std::string>(), require(b, "value").get<double>());
        vmax = std::max(vmax, items.back().second);
    }
    if (vmax <= 0) vmax = 1.0;

    std::ostringstream csv;
    csv << "label,value\n";
    for (const auto& [label, value] : items) csv << label << "," << fmt(value, 4) << "\n";

    Svg svg(120 + 100.0 * items.size(), 300);
    Frame2D f{70, 30, 100.0 * items.size(), 210, 0, static_cast<double>(items.size()), 0, vmax * 1.1};
    draw_y_axis(svg, f);
    for (size_t i = 0; i < items.size(); ++i) {
        double cx = f.px(i + 0.5);
        svg.rect(cx - 28, f.py(items[i].second), 56, f.py(0) - f.py(items[i].second), series_color(i));
        svg.text(cx, f.py(items[i].second) - 4, fmt(items[i].second, 3), 10, "middle");
        svg.text(cx, f.top + f.height + 16, items[i].first, 10, "middle");
    }

    write_file(dir / "report.svg", svg.str());
    write_file(dir / "report.csv", csv.str());
    write_file(dir / "report.json", payload.dump(2) + "\n");
}

void render_fig6(const nlohmann::json& payload, const fs::path& dir) {
    const auto& series = require(payload, "series");
    if (!series.is_array() || series.empty())
        fail(ErrorCode::SchemaMismatch, "report payload field 'series' must be a non-empty array");

    size_t longest = 0;
    double vmax = 0.0, vmin = 0.0;
    std::vector<std::pair<std::string, std::vector<double>>> curves;
    for (const auto& s : series) {
        auto values = require(s, "values").get<std::vector<double>>();
        if (values.empty())
            fail(ErrorCode::SchemaMismatch, "report payload field 'values' must be non-empty");
        longest = std::max(longest, values.size());
        for (double v : values) {
            vmax = std::max(vmax, v);
            vmin = std::min(vmin, v);
        }
        curves.emplace_back(require(s, "label").get<std::string>(), std::move(values));
    }
    if (vmax <= vmin) vmax = vmin + 1.0;

    std::ostringstream csv;
    csv << "step";
    for (const auto& [label, _] : curves) csv << "," << label;
    csv << "\n";
    for (size_t i = 0; i < longest; ++i) {
        csv << i;
        for (const auto& [_, values] : curves)
            csv << "," << (i < values.size() ? fmt(values[i], 5) : "");
        csv << "\n";
    }

    Svg svg(560, 320);
    Frame2D f{60, 30, 460, 230, 0, static_cast<double>(longest > 1 ? longest - 1 : 1), vmin, vmax};
    draw_y_axis(svg, f);
    for (size_t si = 0; si < curves.size(); ++si) {
        std::vector<std::pair<double, double>> pts;
        for (size_t i = 0; i < curves[si].second.size(); ++i)
            pts.emplace_back(f.px(static_cast<double>(i)), f.py(curves[si].second[i]));
        svg.polyline(pts, series_color(si));
        svg.rect(f.left + 10 + 120.0 * si, 10, 12, 4, series_color(si));
        svg.text(f.left + 26 + 120.0 * si, 16, curves[si].first, 11);
    }
    svg.text(f.left + f.width / 2, f.top + f.height + 22, "epoch", 11, "middle");

    write_file(dir / "report.svg", svg.str());
    write_file(dir / "report.csv", csv.str());
    write_file(dir / "report.json", payload.dump(2) + "\n");
}

void render_sfig2(const nlohmann::json& payload, const fs::path& dir) {
    const auto& subjects = require(payload, "subjects");
    if (!subjects.is_array() || subjects.empty())
        fail(ErrorCode::SchemaMismatch, "report payload field 'subjects' must be a non-empty array");

    std::ostringstream csv;
    csv << "identity";
    for (int au : kAuIds) csv << ",au" << au;
    csv << "\n";

    double cell = 30;
    Svg svg(140 + cell * kAuIds.size(), 70 + cell * subjects.size());
    for (size_t r = 0; r < subjects.size(); ++r) {
        std::string id = require(subjects[r], "identity").get<std::string>();
        const auto& freq = require(subjects[r], "au_frequency");
        if (freq.size() != kAuIds.size())
            fail(ErrorCode::SchemaMismatch, "report payload field 'au_frequency' must have 12 entries");
        csv << id;
        svg.text(112, 50 + cell * r + cell / 2 + 3, id, 9, "end");
        for (size_t c = 0; c < kAuIds.size(); ++c) {
            double v = freq[c].get<double>();
            csv << "," << fmt(v, 4);
            svg.rect(120 + cell * c, 50 + cell * r, cell - 2, cell - 2, heat_color(v), "#cccccc");
            svg.text(120 + cell * c + cell / 2 - 1, 50 + cell * r + cell / 2 + 3, fmt(v, 2), 7, "middle");
        }
        csv << "\n";
    }
    for (size_t c = 0; c < kAuIds.size(); ++c)
        svg.text(120 + cell * c + cell / 2 - 1, 42, "AU" + std::to_string(kAuIds[c]), 9, "middle");
    svg.text(60, 24, "per-subject AU activity rate", 12);

    write_file(dir / "report.svg", svg.str());
    write_file(dir / "report.csv", csv.str());
    write_file(dir / "report.json", payload.dump(2) + "\n");
}

}  // namespace

NoiseCheckReport noise_check(const CycleModel& bundle, int n_noise,
                             const std::vector<const Image*>& reference_frames, uint64_t seed) {
    if (n_noise < 1) fail(ErrorCode::InvalidParams, "noise_check needs n_noise >= 1");
    if (reference_frames.size() < 2)
        fail(ErrorCode::TooFewFrames, "noise_check needs at least 2 reference frames");

    NoiseCheckReport report;
    report.n_noise = n_noise;
    report.untrained_warning = bundle.provenance().epochs_trained == 0;

    // Mean neutral face over the reference frames.
    std::vector<Image> neutrals;
    neutrals.reserve(reference_frames.size());
    for (const Image* frame : reference_frames) neutrals.push_back(bundle.remove_expression(*frame));
    Image mean_neutral = neutrals.front();
    for (size_t i = 1; i < neutrals.size(); ++i)
        for (size_t p = 0; p < mean_neutral.data.size(); ++p)
            mean_neutral.data[p] += neutrals[i].data[p];
    for (double& p : mean_neutral.data) p /= static_cast<double>(neutrals.size());

    for (const Image& n : neutrals) report.reference_distances.push_back(neutral_distance(n, mean_neutral));
    report.percentile_95 = percentile(report.reference_distances, 95.0);

    const ModelConfig& cfg = bundle.config();
    Rng rng(seed);
    int beyond = 0;
    for (int i = 0; i < n_noise; ++i) {
        Image noise(cfg.channels, cfg.image_size, cfg.image_size);
        for (double& p : noise.data) p = rng.uniform();
        double d = neutral_distance(bundle.remove_expression(noise), mean_neutral);
        report.noise_distances.push_back(d);
        if (d > report.percentile_95) ++beyond;
    }
    report.pass_fraction = static_cast<double>(beyond) / static_cast<double>(n_noise);
    report.passed = report.pass_fraction >= 0.95;
    return report;
}

std::string file_digest(const std::string& path) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64_file(path)));
    return buf;
}

void write_run_manifest(const std::string& out_dir, RunManifest manifest) {
    if (manifest.version.empty()) manifest.version = version_string();
    if (manifest.timestamp.empty()) {
        auto now = std::chrono::system_clock::now();
        std::time_t t = std::chrono::system_clock::to_time_t(now);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
        manifest.timestamp = buf;
    }
    nlohmann::json j;
    j["command"] = manifest.command;
    j["config"] = manifest.config;
    j["seed"] = manifest.seed;
    j["input_hashes"] = manifest.input_hashes;
    j["outputs"] = manifest.outputs;
    j["timestamp"] = manifest.timestamp;
    j["version"] = manifest.version;

    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / "run_manifest.json", j.dump(2) + "\n");
}

void render_report(const std::string& style, const nlohmann::json& payload,
                   const std::string& out_dir) {
    fs::create_directories(out_dir);
    fs::path dir(out_dir);
    if (style == "fig2") render_fig2(payload, dir);
    else if (style == "fig3") render_fig3(payload, dir);
    else if (style == "fig4") render_fig4(payload, dir);
    else if (style == "fig5") render_fig5(payload, dir);
    else if (style == "fig6") render_fig6(payload, dir);
    else if (style == "sfig2") render_sfig2(payload, dir);
    else fail(ErrorCode::InvalidParams, "unknown report style '" + style + "'");
}

nlohmann::json probe_result_json(const ProbeResult& result) {
    nlohmann::json j;
    j["split"] = result.split_descriptor;
    j["mean_f1"] = result.mean_f1;
    j["evaluated_aus"] = result.evaluated_aus;
    j["skipped_aus"] = result.skipped_aus;
    j["per_au"] = nlohmann::json::array();
    for (int au : result.evaluated_aus) {
        const BootstrapResult& b = result.bootstraps.at(au);
        j["per_au"].push_back({{"au", au},
                               {"mean", b.mean},
                               {"ci_low", b.ci_low},
                               {"ci_high", b.ci_high},
                               {"samples", b.distribution}});
    }
    return j;
}

nlohmann::json novelty_report_json(const NoveltyReport& report) {
    auto matrix_json = [](const Matrix& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (int r = 0; r < m.rows; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    nlohmann::json j;
    j["raw_matrix"] = matrix_json(report.raw_matrix);
    j["normalized_matrix"] = matrix_json(report.normalized_matrix);
    j["rho_defaults"] = report.rho_defaults;
    j["novel_psm"] = nlohmann::json::array();
    j["novel_gm"] = nlohmann::json::array();
    auto verdicts_json = [](const std::vector<NoveltyVerdict>& vs, nlohmann::json& novel) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& v : vs) {
            arr.push_back({{"cluster", v.cluster.cluster_id},
                           {"au_frequency", v.cluster.au_frequency},
                           {"is_novel", v.is_novel},
                           {"values", v.metric_values}});
            if (v.is_novel) novel.push_back(v.cluster.cluster_id);
        }
        return arr;
    };
    j["psm"] = verdicts_json(report.psm, j["novel_psm"]);
    j["gm"] = verdicts_json(report.gm, j["novel_gm"]);
    return j;
}

nlohmann::json sweep_json(const SweepResult& sweep) {
    nlohmann::json j;
    j["eps_values"] = sweep.eps_values;
    j["min_samples_values"] = sweep.min_samples_values;
    j["average_cluster_count"] = sweep.average_cluster_count;
    nlohmann::json counts = nlohmann::json::array();
    for (int r = 0; r < sweep.counts.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < sweep.counts.cols; ++c) row.push_back(sweep.counts.at(r, c));
        counts.push_back(std::move(row));
    }
    j["cluster_counts"] = counts;
    return j;
}

nlohmann::json au_statistics_json(const AuStatistics& stats) {
    nlohmann::json j;
    j["cross_subject_temporal_correlation"] = stats.cross_subject_temporal_correlation;
    j["correlation_terms_used"] = stats.correlation_terms_used;
    j["correlation_terms_excluded"] = stats.correlation_terms_excluded;
    j["au_frequency"] = stats.per_au_frequency;
    j["subjects"] = nlohmann::json::array();
    for (const auto& [id, freq] : stats.per_subject_frequency)
        j["subjects"].push_back({{"identity", id}, {"au_frequency", freq}});
    nlohmann::json cooc = nlohmann::json::array();
    for (const auto& crow : stats.cooccurrence) {
        nlohmann::json row = nlohmann::json::array();
        for (double v : crow) row.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json());
        cooc.push_back(std::move(row));
    }
    j["cooccurrence"] = cooc;
    return j;
}

}  // namespace psmlab
