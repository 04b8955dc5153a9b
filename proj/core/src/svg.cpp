#include <algorithm>
#include <cstdio>
#include <string>

#include "cql/errors.hpp"
#include "cql/evaluation.hpp"
#include "cql/kv_config.hpp"

namespace cql {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string title_case(std::string_view s) {
    std::string out(s);
    if (!out.empty()) out[0] = static_cast<char>(out[0] - 'a' + 'A');
    return out;
}

std::string drug_name(Intervention i) {
    return i == Intervention::IV ? "IV fluids" : "Vasopressors";
}

struct Svg {
    std::string body;

    Svg(int w, int h) {
        body = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
               "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) +
               " " + std::to_string(h) + "\" font-family=\"sans-serif\">\n";
        body += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    }

    void text(double x, double y, std::string_view s, int size = 12,
              std::string_view anchor = "middle", double rotate = 0.0) {
        body += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" +
                std::to_string(size) + "\" text-anchor=\"" + std::string(anchor) + "\"";
        if (rotate != 0.0) {
            body += " transform=\"rotate(" + num(rotate) + " " + num(x) + " " + num(y) + ")\"";
        }
        body += ">" + std::string(s) + "</text>\n";
    }

    void rect(double x, double y, double w, double h, std::string_view fill) {
        body += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
                "\" height=\"" + num(h) + "\" fill=\"" + std::string(fill) +
                "\" stroke=\"#999\" stroke-width=\"0.5\"/>\n";
    }

    void line(double x1, double y1, double x2, double y2, std::string_view stroke = "#333") {
        body += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) +
                "\" y2=\"" + num(y2) + "\" stroke=\"" + std::string(stroke) + "\"/>\n";
    }

    std::string finish() { return body + "</svg>\n"; }
};

// White to dark blue.
std::string shade(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(247 - t * (247 - 8));
    const int g = static_cast<int>(251 - t * (251 - 48));
    const int b = static_cast<int>(255 - t * (255 - 107));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace

std::string render_histogram_svg(const Histogram2D& h) {
    constexpr int kCell = 60;
    constexpr int kLeft = 90;
    constexpr int kTop = 60;
    const int grid = kCell * kDoseBins;
    Svg svg(kLeft + grid + 40, kTop + grid + 90);
    svg.text(kLeft + grid / 2.0, 28,
             title_case(to_string(h.group)) + " SOFA, " + std::string(to_string(h.source)) +
                 " policy (n=" + std::to_string(h.total) + ")",
             15);

    std::uint64_t peak = 0;
    for (const auto& row : h.counts) {
        for (auto c : row) peak = std::max(peak, c);
    }
    // Rows are IV bins with 0 at the bottom; columns are VP bins.
    for (int iv = 0; iv < kDoseBins; ++iv) {
        for (int vp = 0; vp < kDoseBins; ++vp) {
            const auto c = h.counts[iv][vp];
            const double t = peak == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(peak);
            const double x = kLeft + vp * kCell;
            const double y = kTop + (kDoseBins - 1 - iv) * kCell;
            svg.rect(x, y, kCell, kCell, shade(t));
            svg.text(x + kCell / 2.0, y + kCell / 2.0 + 4, std::to_string(c), 11, "middle");
        }
    }
    for (int b = 0; b < kDoseBins; ++b) {
        svg.text(kLeft + b * kCell + kCell / 2.0, kTop + grid + 18, std::to_string(b));
        svg.text(kLeft - 12, kTop + (kDoseBins - 1 - b) * kCell + kCell / 2.0 + 4,
                 std::to_string(b), 12, "end");
    }
    svg.text(kLeft + grid / 2.0, kTop + grid + 42, "Vasopressor dose bin");
    svg.text(kLeft + grid / 2.0, kTop + grid + 62, "0 represents no drug given", 11);
    svg.text(30, kTop + grid / 2.0, "IV fluid dose bin", 12, "middle", -90);
    return svg.finish();
}

std::string render_curve_svg(const MortalityCurve& c) {
    constexpr int kLeft = 70;
    constexpr int kTop = 60;
    constexpr int kWidth = 420;
    constexpr int kHeight = 260;
    Svg svg(kLeft + kWidth + 40, kTop + kHeight + 80);
    svg.text(kLeft + kWidth / 2.0, 28,
             drug_name(c.intervention) + ", " + title_case(to_string(c.group)) + " SOFA", 15);

    double y_max = 0.0;
    for (const auto& b : c.buckets) {
        if (b.count > 0) y_max = std::max(y_max, b.mortality());
    }
    y_max = y_max <= 0.0 ? 1.0 : std::min(1.0, y_max * 1.15);

    auto px = [&](int diff) {
        return kLeft + (diff + kMaxBinDiff) * (static_cast<double>(kWidth) / (2 * kMaxBinDiff));
    };
    auto py = [&](double m) { return kTop + kHeight - m / y_max * kHeight; };

    svg.line(kLeft, kTop + kHeight, kLeft + kWidth, kTop + kHeight);
    svg.line(kLeft, kTop, kLeft, kTop + kHeight);
    for (int d = -kMaxBinDiff; d <= kMaxBinDiff; ++d) {
        svg.line(px(d), kTop + kHeight, px(d), kTop + kHeight + 5);
        svg.text(px(d), kTop + kHeight + 20, std::to_string(d));
    }
    for (int k = 0; k <= 4; ++k) {
        const double m = y_max * k / 4.0;
        svg.line(kLeft - 5, py(m), kLeft, py(m));
        svg.text(kLeft - 8, py(m) + 4, num(m), 11, "end");
    }

    std::string points;
    for (int d = -kMaxBinDiff; d <= kMaxBinDiff; ++d) {
        const auto& b = c.at(d);
        if (b.count == 0) continue;
        points += num(px(d)) + "," + num(py(b.mortality())) + " ";
        svg.body += "<circle cx=\"" + num(px(d)) + "\" cy=\"" + num(py(b.mortality())) +
                    "\" r=\"3.5\" fill=\"#08306b\"><title>n=" + std::to_string(b.count) +
                    "</title></circle>\n";
    }
    if (!points.empty()) {
        points.pop_back();
        svg.body += "<polyline points=\"" + points +
                    "\" fill=\"none\" stroke=\"#08306b\" stroke-width=\"1.5\"/>\n";
    }
    svg.text(kLeft + kWidth / 2.0, kTop + kHeight + 45,
             "Dose bin difference (model - physician), " + drug_name(c.intervention));
    svg.text(22, kTop + kHeight / 2.0, "Observed mortality", 12, "middle", -90);
    return svg.finish();
}

std::vector<std::filesystem::path> render_directory(const std::filesystem::path& in_dir,
                                                   const std::filesystem::path& out_dir) {
    if (!std::filesystem::is_directory(in_dir)) {
        throw IoError("not a directory: " + in_dir.string());
    }
    std::vector<std::filesystem::path> inputs;
    for (const auto& entry : std::filesystem::directory_iterator(in_dir)) {
        const auto name = entry.path().filename().string();
        if (entry.path().extension() != ".csv") continue;
        if (name.starts_with("hist_") || name.starts_with("curve_")) inputs.push_back(entry.path());
    }
    std::sort(inputs.begin(), inputs.end());
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    for (const auto& p : inputs) {
        const auto stem = p.stem().string();
        const auto text = read_text_file(p);
        const auto svg = stem.starts_with("hist_") ? render_histogram_svg(histogram_from_csv(text, stem))
                                                   : render_curve_svg(curve_from_csv(text, stem));
        written.push_back(out_dir / (stem + ".svg"));
        write_text_file(written.back(), svg);
    }
    return written;
}

}  // namespace cql
