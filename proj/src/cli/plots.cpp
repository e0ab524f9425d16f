#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ssa/cli.hpp"

namespace ssa::cli {

void write_pgm(const std::filesystem::path& path, const Tensor& matrix) {
  if (matrix.rank() != 2) fail(ErrorKind::Dimension, "graymap needs a matrix");
  const auto v = matrix.data();
  float peak = 0.0f;
  for (float x : v) {
    if (x < 0.0f) fail(ErrorKind::InvalidInput, "graymap values must be non-negative");
    peak = std::max(peak, x);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + path.string());
  out << "P5\n" << matrix.dim(1) << " " << matrix.dim(0) << "\n255\n";
  for (float x : v) {
    const double level = peak > 0.0f ? std::round(255.0 * double(x) / double(peak)) : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(level)));
  }
}

void write_matrix_csv(const std::filesystem::path& path, const Tensor& matrix, const std::string& comment) {
  if (matrix.rank() != 2) fail(ErrorKind::Dimension, "matrix CSV needs a matrix");
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + path.string());
  out << "# " << comment << "\n";
  const std::size_t cols = matrix.dim(1);
  const auto v = matrix.data();
  char cell[32];
  for (std::size_t r = 0; r < matrix.dim(0); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::snprintf(cell, sizeof cell, c + 1 < cols ? "%.6g," : "%.6g\n", double(v[r * cols + c]));
      out << cell;
    }
  }
}

void write_line_chart_svg(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, L = 70, R = 20, T = 40, B = 50;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
    }
  }
  if (!(x1 >= x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + path.string());
  char buf[256];
  std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\">\n", W, H);
  out << buf << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">", W / 2);
  out << buf << title << "</text>\n";
  std::snprintf(buf, sizeof buf, "<path d=\"M%g %g L%g %g L%g %g\" stroke=\"black\" fill=\"none\"/>\n", L, T, L, H - B,
                W - R, H - B);
  out << buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\" font-size=\"12\">", (L + W - R) / 2,
                H - 12);
  out << buf << x_label << "</text>\n";
  std::snprintf(buf, sizeof buf,
                "<text x=\"16\" y=\"%g\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 %g)\">",
                (T + H - B) / 2, (T + H - B) / 2);
  out << buf << y_label << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0, xv = x0 + (x1 - x0) * k / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"end\" font-size=\"10\">%.4g</text>\n", L - 4,
                  py(yv) + 3, yv);
    out << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\" font-size=\"10\">%.4g</text>\n",
                  px(xv), H - B + 14, xv);
    out << buf;
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 5];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i) {
      if (!std::isfinite(series[s].y[i])) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(series[s].x[i]), py(series[s].y[i]));
      out << buf;
    }
    out << "\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"11\" fill=\"%s\">", W - R - 150,
                  T + 14.0 * double(s + 1), color);
    out << buf << series[s].label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace ssa::cli
