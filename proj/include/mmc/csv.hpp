#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "mmc/core.hpp"

// Deterministic text output. All floats are rendered with 9 significant
// digits through the C locale so repeated runs produce byte-identical files.

namespace mmc {

inline std::string fmt_double(double v) {
    if (v == 0.0) v = 0.0;  // normalize -0
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

class CsvWriter {
  public:
    explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(const std::vector<std::string>& cells) {
        if (cells.size() != header_.size()) throw Error("CsvWriter: column count mismatch");
        rows_.push_back(cells);
    }

    std::string str() const {
        std::string out = join(header_);
        for (const auto& r : rows_) out += join(r);
        return out;
    }

    void write(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw Error("cannot open for writing: " + path);
        f << str();
    }

    std::size_t row_count() const { return rows_.size(); }

  private:
    static std::string join(const std::vector<std::string>& cells) {
        std::string line;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) line += ',';
            line += cells[i];
        }
        line += '\n';
        return line;
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// Minimal polyline chart, fixed 800x600 viewport.
struct SvgSeries {
    std::string label;
    std::string color = "#1f77b4";
    std::vector<double> x, y;
};

inline void write_svg_chart(const std::string& path, const std::vector<SvgSeries>& series,
                            const std::string& title = "") {
    const double W = 800, H = 600, ml = 60, mr = 20, mt = 30, mb = 40;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!(xmax > xmin)) xmax = xmin + 1;
    if (!(ymax > ymin)) ymax = ymin + 1;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for writing: " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" "
         "viewBox=\"0 0 800 600\">\n";
    f << "<rect width=\"800\" height=\"600\" fill=\"white\"/>\n";
    if (!title.empty())
        f << "<text x=\"400\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
          << "</text>\n";
    f << "<rect x=\"" << fmt_double(ml) << "\" y=\"" << fmt_double(mt) << "\" width=\""
      << fmt_double(W - ml - mr) << "\" height=\"" << fmt_double(H - mt - mb)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    int li = 0;
    for (const auto& s : series) {
        f << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (i) f << ' ';
            f << fmt_double(px(s.x[i])) << ',' << fmt_double(py(s.y[i]));
        }
        f << "\"/>\n";
        if (!s.label.empty())
            f << "<text x=\"" << fmt_double(W - mr - 150) << "\" y=\"" << fmt_double(mt + 16 + 16 * li)
              << "\" font-size=\"12\" fill=\"" << s.color << "\">" << s.label << "</text>\n";
        ++li;
    }
    f << "</svg>\n";
}

}  // namespace mmc
