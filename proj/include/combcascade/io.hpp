#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace combcascade {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Round-trippable decimal formatting (17 significant digits).
inline std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw IoError("cannot open for writing: " + path);
        cols_ = header.size();
        for (std::size_t c = 0; c < header.size(); ++c)
            out_ << (c ? "," : "") << header[c];
        out_ << "\n";
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != cols_) throw IoError("csv row width mismatch");
        for (std::size_t c = 0; c < cells.size(); ++c)
            out_ << (c ? "," : "") << cells[c];
        out_ << "\n";
    }

    void row_numeric(const std::vector<double>& cells) {
        std::vector<std::string> s;
        s.reserve(cells.size());
        for (double v : cells) s.push_back(format_full(v));
        row(s);
    }

private:
    std::ofstream out_;
    std::size_t cols_ = 0;
};

/// 8-bit binary PGM heatmap; values mapped linearly from [lo, hi], NaN black.
inline void write_pgm_heatmap(const std::string& path, const Eigen::MatrixXd& data, double lo,
                              double hi) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    const int h = static_cast<int>(data.rows());
    const int w = static_cast<int>(data.cols());
    if (h < 1 || w < 1 || !(hi > lo)) throw IoError("bad heatmap dimensions or range");
    out << "P5\n" << w << " " << h << "\n255\n";
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double v = data(r, c);
            unsigned char px = 0;
            if (std::isfinite(v))
                px = static_cast<unsigned char>(
                    std::clamp(255.0 * (v - lo) / (hi - lo), 0.0, 255.0));
            out.put(static_cast<char>(px));
        }
    }
}

inline void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                             const std::vector<std::string>& header = {}) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    if (!header.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
        out << "\n";
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            out << (c ? "," : "") << format_full(m(r, c));
        out << "\n";
    }
}

}  // namespace combcascade
