// Copyright 2026 The seqcond Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "seqcond/errors.hpp"
#include "seqcond/video.hpp"

namespace seqcond::cli {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

namespace detail {

inline std::string num(double v, const char* f = "%.4g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace detail

/// Self-contained SVG line chart, one polyline per series.
inline std::string line_chart_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                  const std::vector<Series>& series, const std::string& comment = "") {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"};
    const double W = 640, H = 400, L = 70, R = 200, T = 40, B = 50;
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

    std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    if (!comment.empty()) s += "<!-- " + detail::xml_escape(comment) + " -->\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(W) + "\" height=\"" + detail::num(H) +
         "\" viewBox=\"0 0 " + detail::num(W) + " " + detail::num(H) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + detail::num(W / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         detail::xml_escape(title) + "</text>\n";
    s += "<line x1=\"" + detail::num(L) + "\" y1=\"" + detail::num(H - B) + "\" x2=\"" + detail::num(W - R) + "\" y2=\"" +
         detail::num(H - B) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + detail::num(L) + "\" y1=\"" + detail::num(T) + "\" x2=\"" + detail::num(L) + "\" y2=\"" +
         detail::num(H - B) + "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        s += "<text x=\"" + detail::num(L - 6) + "\" y=\"" + detail::num(py(yv) + 4) + "\" text-anchor=\"end\">" +
             detail::num(yv) + "</text>\n";
        s += "<text x=\"" + detail::num(px(xv)) + "\" y=\"" + detail::num(H - B + 16) + "\" text-anchor=\"middle\">" +
             detail::num(xv) + "</text>\n";
    }
    s += "<text x=\"" + detail::num((L + W - R) / 2) + "\" y=\"" + detail::num(H - 12) + "\" text-anchor=\"middle\">" +
         detail::xml_escape(xlabel) + "</text>\n";
    s += "<text x=\"16\" y=\"" + detail::num((T + H - B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         detail::num((T + H - B) / 2) + ")\">" + detail::xml_escape(ylabel) + "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& sr = series[k];
        const char* col = colors[k % 7];
        std::string pts;
        for (std::size_t i = 0; i < sr.x.size(); ++i) {
            if (!std::isfinite(sr.y[i])) continue;
            pts += detail::num(px(sr.x[i]), "%.2f") + "," + detail::num(py(sr.y[i]), "%.2f") + " ";
        }
        s += "<polyline fill=\"none\" stroke=\"" + std::string(col) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
        const double ly = T + 18.0 * static_cast<double>(k);
        s += "<line x1=\"" + detail::num(W - R + 12) + "\" y1=\"" + detail::num(ly) + "\" x2=\"" +
             detail::num(W - R + 32) + "\" y2=\"" + detail::num(ly) + "\" stroke=\"" + col + "\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + detail::num(W - R + 38) + "\" y=\"" + detail::num(ly + 4) + "\">" +
             detail::xml_escape(sr.name) + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

/// Binary PPM of frames laid out in rows: one row per frame index, one
/// column per video (each video contributes frame min(f, frames-1)), each
/// pixel enlarged `scale` times.
inline std::string contact_sheet_ppm(const std::vector<const Grid4*>& columns, std::size_t scale = 4) {
    if (columns.empty()) throw ShapeError("contact sheet: no videos");
    const std::size_t h = columns.front()->height, w = columns.front()->width;
    std::size_t rows = 0;
    for (const auto* v : columns) {
        if (v->channels != 3 || v->height != h || v->width != w) {
            throw ShapeError("contact sheet: videos must be 3-channel with equal frame size");
        }
        rows = std::max(rows, v->frames);
    }
    const std::size_t W = columns.size() * w * scale, H = rows * h * scale;
    std::string out = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    out.reserve(out.size() + W * H * 3);
    for (std::size_t Y = 0; Y < H; ++Y) {
        const std::size_t r = Y / (h * scale), y = (Y / scale) % h;
        for (std::size_t X = 0; X < W; ++X) {
            const Grid4& v = *columns[X / (w * scale)];
            const std::size_t x = (X / scale) % w;
            const std::size_t f = std::min(r, v.frames - 1);
            for (std::size_t c = 0; c < 3; ++c) {
                const float p = std::clamp(v.at(c, f, y, x), 0.0f, 1.0f);
                out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(p * 255.0f))));
            }
        }
    }
    return out;
}

}  // namespace seqcond::cli
