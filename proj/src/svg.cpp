#include "uqpen/svg.hpp"

#include "uqpen/ioutil.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uqpen {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
}

std::ofstream open_svg(const std::filesystem::path& path, int width, int height) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::invalid_argument("svg: cannot open " + path.string());
    }
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
        << "\" fill=\"white\"/>\n";
    return out;
}

void close_svg(std::ofstream& out) {
    out << "</svg>\n";
}

void text(std::ofstream& out, double x, double y, const std::string& s, int size = 11,
          const std::string& anchor = "start") {
    out << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size
        << "\" font-family=\"monospace\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
}

void line(std::ofstream& out, double x1, double y1, double x2, double y2,
          const std::string& stroke, const std::string& extra = "") {
    out << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2)
        << "\" y2=\"" << num(y2) << "\" stroke=\"" << stroke << "\"" << extra << "/>\n";
}

void rect(std::ofstream& out, double x, double y, double w, double h, const std::string& fill,
          const std::string& extra = "") {
    out << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
        << "\" height=\"" << num(h) << "\" fill=\"" << fill << "\"" << extra << "/>\n";
}

// White -> deep blue ramp over [0, 1].
std::string ramp_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(255.0 - 225.0 * t));
    const int g = static_cast<int>(std::lround(255.0 - 190.0 * t));
    const int b = static_cast<int>(std::lround(255.0 - 95.0 * t));
    char buf[24];
    std::snprintf(buf, sizeof(buf), "rgb(%d,%d,%d)", r, g, b);
    return std::string(buf);
}

} // namespace

void write_reliability_svg(const CalibrationTable& table, const std::filesystem::path& path) {
    const int width = 420, height = 560;
    const double px = 60, py = 40, pw = 320, ph = 320; // reliability panel
    const double hx = 60, hy = 420, hw = 320, hh = 100; // histogram panel
    auto out = open_svg(path, width, height);
    text(out, px, py - 16, "reliability diagram (accuracy per confidence bin)");

    rect(out, px, py, pw, ph, "none", " stroke=\"black\"");
    // Bisector.
    line(out, px, py + ph, px + pw, py, "gray", " stroke-dasharray=\"5,4\"");

    const auto data = reliability_data(table);
    const double bw = pw / static_cast<double>(table.bin_count);
    for (std::size_t e = 0; e < data.bars.size(); ++e) {
        const auto& bar = data.bars[e];
        const double x = px + static_cast<double>(e) * bw;
        if (bar.empty) {
            rect(out, x + 1, py + ph - 2, bw - 2, 2, "none", " stroke=\"lightgray\"");
        } else {
            const double bar_h = bar.accuracy * ph;
            rect(out, x + 1, py + ph - bar_h, bw - 2, bar_h, "rgb(60,90,170)");
        }
    }
    for (int i = 0; i <= 5; ++i) {
        const double frac = static_cast<double>(i) / 5.0;
        text(out, px + frac * pw, py + ph + 14, num(frac), 9, "middle");
        text(out, px - 6, py + ph - frac * ph + 3, num(frac), 9, "end");
    }
    text(out, px + pw / 2, py + ph + 28, "confidence", 10, "middle");

    text(out, hx, hy - 8, "confidence histogram");
    rect(out, hx, hy, hw, hh, "none", " stroke=\"black\"");
    std::size_t max_count = 1;
    for (const auto& bar : data.bars) {
        max_count = std::max(max_count, bar.histogram_count);
    }
    for (std::size_t e = 0; e < data.bars.size(); ++e) {
        const double frac =
            static_cast<double>(data.bars[e].histogram_count) / static_cast<double>(max_count);
        const double x = hx + static_cast<double>(e) * bw;
        if (frac > 0.0) {
            rect(out, x + 1, hy + hh - frac * hh, bw - 2, frac * hh, "rgb(150,150,150)");
        }
    }
    text(out, hx, hy + hh + 16,
         "ece " + format_double(table.ece) + "  n " + std::to_string(table.n), 10);
    close_svg(out);
}

void write_heatmap_svg(const Matrix& matrix, const std::vector<std::string>& class_names,
                       const std::string& title, double vmin, double vmax,
                       const std::filesystem::path& path) {
    const int k = static_cast<int>(matrix.rows());
    const double cell = std::max(8.0, std::min(24.0, 360.0 / std::max(1, k)));
    const double px = 70, py = 50;
    const int width = static_cast<int>(px + cell * k + 40);
    const int height = static_cast<int>(py + cell * k + 90);
    auto out = open_svg(path, width, height);
    text(out, px, py - 26, title);
    const double range = vmax > vmin ? vmax - vmin : 1.0;
    for (int r = 0; r < k; ++r) {
        for (int c = 0; c < k; ++c) {
            const double v = matrix(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
            rect(out, px + c * cell, py + r * cell, cell, cell, ramp_color((v - vmin) / range),
                 " stroke=\"none\"");
        }
    }
    rect(out, px, py, cell * k, cell * k, "none", " stroke=\"black\"");
    const int label_step = k > 26 ? 2 : 1;
    for (int i = 0; i < k; i += label_step) {
        text(out, px + i * cell + cell / 2, py + cell * k + 12, class_names[static_cast<std::size_t>(i)],
             8, "middle");
        text(out, px - 4, py + i * cell + cell / 2 + 3, class_names[static_cast<std::size_t>(i)],
             8, "end");
    }
    // Shared-scale legend: the exact bounds are part of the document.
    const double ly = py + cell * k + 34;
    for (int i = 0; i <= 40; ++i) {
        rect(out, px + i * 4.0, ly, 4.0, 12.0, ramp_color(static_cast<double>(i) / 40.0),
             " stroke=\"none\"");
    }
    text(out, px, ly + 26, "scale min " + format_double(vmin) + " max " + format_double(vmax),
         10);
    close_svg(out);
}

void write_class_bars_svg(const std::vector<std::string>& class_names,
                          const std::vector<double>& total_bits,
                          const std::vector<double>& aleatoric_bits,
                          const std::vector<double>& epistemic_bits,
                          const std::filesystem::path& path) {
    const int k = static_cast<int>(class_names.size());
    const double px = 50, py = 40, ph = 260;
    const double group = std::max(24.0, std::min(54.0, 700.0 / std::max(1, k)));
    const int width = static_cast<int>(px + group * k + 40);
    const int height = static_cast<int>(py + ph + 60);
    auto out = open_svg(path, width, height);
    text(out, px, py - 14, "per-class uncertainty (bits): TU dark, AU mid, EU light");

    double vmax = 1e-9;
    for (int c = 0; c < k; ++c) {
        vmax = std::max({vmax, total_bits[static_cast<std::size_t>(c)],
                         aleatoric_bits[static_cast<std::size_t>(c)],
                         epistemic_bits[static_cast<std::size_t>(c)]});
    }
    const double bw = group / 4.0;
    const char* colors[3] = {"rgb(40,60,120)", "rgb(90,130,190)", "rgb(160,195,235)"};
    for (int c = 0; c < k; ++c) {
        const double base_x = px + c * group;
        const double values[3] = {total_bits[static_cast<std::size_t>(c)],
                                  aleatoric_bits[static_cast<std::size_t>(c)],
                                  epistemic_bits[static_cast<std::size_t>(c)]};
        for (int s = 0; s < 3; ++s) {
            const double h = std::max(0.0, values[s]) / vmax * ph;
            rect(out, base_x + s * bw + 2, py + ph - h, bw - 2, h, colors[s]);
        }
        text(out, base_x + group / 2, py + ph + 14, class_names[static_cast<std::size_t>(c)], 9,
             "middle");
    }
    rect(out, px, py, group * k, ph, "none", " stroke=\"black\"");
    text(out, px, py + ph + 34, "max " + format_double(vmax) + " bits", 10);
    close_svg(out);
}

void write_sweep_svg(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    const int width = 460, height = 380;
    const double px = 60, py = 40, pw = 360, ph = 280;
    auto out = open_svg(path, width, height);
    text(out, px, py - 14, "accuracy vs entropy threshold");
    rect(out, px, py, pw, ph, "none", " stroke=\"black\"");

    double tau_max = 1e-9;
    for (const auto& row : rows) {
        tau_max = std::max(tau_max, row.threshold);
    }
    const auto x_of = [&](double tau) { return px + tau / tau_max * pw; };
    const auto y_of = [&](double acc) { return py + ph - acc * ph; };

    const auto draw_series = [&](bool confident, const std::string& color) {
        std::ostringstream points;
        bool open = false;
        for (const auto& row : rows) {
            const auto& acc = confident ? row.acc_above : row.acc_below;
            if (!acc) {
                if (open) {
                    out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\""
                        << points.str() << "\"/>\n";
                    points.str("");
                    open = false;
                }
                continue;
            }
            points << num(x_of(row.threshold)) << ',' << num(y_of(*acc)) << ' ';
            open = true;
            out << "<circle cx=\"" << num(x_of(row.threshold)) << "\" cy=\"" << num(y_of(*acc))
                << "\" r=\"2\" fill=\"" << color << "\"/>\n";
        }
        if (open) {
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"" << points.str()
                << "\"/>\n";
        }
    };
    draw_series(true, "rgb(40,90,170)");
    draw_series(false, "rgb(190,80,60)");

    for (int i = 0; i <= 5; ++i) {
        const double frac = static_cast<double>(i) / 5.0;
        text(out, px + frac * pw, py + ph + 14, num(frac * tau_max), 9, "middle");
        text(out, px - 6, py + ph - frac * ph + 3, num(frac), 9, "end");
    }
    text(out, px + pw / 2, py + ph + 28, "entropy threshold (bits)", 10, "middle");
    text(out, px, py + ph + 44, "blue: confident side (TU below threshold); red: uncertain side",
         9);
    close_svg(out);
}

} // namespace uqpen
