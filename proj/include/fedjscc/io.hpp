#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace fedjscc {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numeric table with a header row; serialized as comma-separated UTF-8
// with LF line endings and round-trippable full-precision doubles.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw IoError("csv: no column named " + name);
    }
};

inline void write_csv(const std::string& path, const CsvTable& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (t.header[i].find(',') != std::string::npos ||
            t.header[i].find('\n') != std::string::npos)
            throw IoError("csv: header cell contains a delimiter");
        f << (i ? "," : "") << t.header[i];
    }
    f << "\n";
    f << std::setprecision(17);
    for (const auto& row : t.rows) {
        if (row.size() != t.header.size()) throw IoError("csv: ragged row");
        for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
        f << "\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(f, line)) throw IoError("csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.header.push_back(cell);
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream rs(line);
        while (std::getline(rs, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError("csv: non-numeric cell '" + cell + "' in " + path);
            }
        }
        if (row.size() != t.header.size()) throw IoError("csv: ragged row in " + path);
        t.rows.push_back(std::move(row));
    }
    return t;
}

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal hand-rolled SVG line chart: axes, tick labels, one polyline per
// series, legend in the top-right corner.
inline void svg_line_plot(const std::string& path, const std::string& title,
                          const std::string& xlabel, const std::string& ylabel,
                          const std::vector<PlotSeries>& series) {
    if (series.empty()) throw IoError("plot: no series");
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size() || s.x.empty())
            throw IoError("plot: empty or mismatched series " + s.name);
        for (double v : s.x) {
            xmin = std::min(xmin, v);
            xmax = std::max(xmax, v);
        }
        for (double v : s.y) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;

    const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
    auto sx = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto sy = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b"};

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\""
      << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">"
      << title << "</text>\n";
    // axes
    f << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R
      << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\""
      << H - B << "\" stroke=\"black\"/>\n";
    f << std::setprecision(4);
    for (int i = 0; i <= 4; ++i) {
        double xv = xmin + (xmax - xmin) * i / 4.0;
        double yv = ymin + (ymax - ymin) * i / 4.0;
        f << "<text x=\"" << sx(xv) << "\" y=\"" << H - B + 18
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
          << xv << "</text>\n";
        f << "<text x=\"" << L - 8 << "\" y=\"" << sy(yv) + 4
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << yv
          << "</text>\n";
    }
    f << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << xlabel << "</text>\n";
    f << "<text x=\"16\" y=\"" << (T + H - B) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 16 "
      << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";
    f << std::setprecision(8);
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* col = colors[si % 6];
        f << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            f << sx(s.x[i]) << "," << sy(s.y[i]) << " ";
        f << "\"/>\n";
        f << "<text x=\"" << W - R - 6 << "\" y=\"" << T + 16 + 16 * (double)si
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
          << col << "\">" << s.name << "</text>\n";
    }
    f << "</svg>\n";
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace fedjscc
