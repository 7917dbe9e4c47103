#include "latsep/figures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "latsep/imageio.hpp"

namespace latsep {

namespace {

constexpr const char* kClean = "#1f5fd6";
constexpr const char* kPoison = "#d62222";
constexpr float kCleanRgb[3] = {0.12f, 0.37f, 0.84f};
constexpr float kPoisonRgb[3] = {0.84f, 0.13f, 0.13f};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Bounds {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
};

Bounds bounds(const Matrix& coords) {
  Bounds b{1e300, -1e300, 1e300, -1e300};
  bool any = false;
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    const double x = coords(i, 0), y = coords(i, 1);
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    any = true;
    b.x0 = std::min(b.x0, x);
    b.x1 = std::max(b.x1, x);
    b.y0 = std::min(b.y0, y);
    b.y1 = std::max(b.y1, y);
  }
  if (!any) return {};
  const double px = std::max((b.x1 - b.x0) * 0.05, 1e-9);
  const double py = std::max((b.y1 - b.y0) * 0.05, 1e-9);
  return {b.x0 - px, b.x1 + px, b.y0 - py, b.y1 + py};
}

// Draw order: clean rows first so poison stays visible on top.
std::vector<Eigen::Index> draw_order(const Matrix& coords, std::span<const int> poison) {
  std::vector<Eigen::Index> order;
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
      const bool p = static_cast<std::size_t>(i) < poison.size() && poison[static_cast<std::size_t>(i)] != 0;
      if (p == (pass == 1) && std::isfinite(coords(i, 0)) && std::isfinite(coords(i, 1))) order.push_back(i);
    }
  }
  return order;
}

struct Canvas {
  int w, h;
  std::vector<float> px;
  Canvas(int w_, int h_) : w(w_), h(h_), px(static_cast<std::size_t>(w_) * h_ * 3, 1.0f) {}
  void fill(int x0, int y0, int x1, int y1, const float* rgb, float alpha = 1.0f) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, w);
    y1 = std::min(y1, h);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        for (int c = 0; c < 3; ++c) {
          float& v = px[(static_cast<std::size_t>(y) * w + x) * 3 + c];
          v = (1 - alpha) * v + alpha * rgb[c];
        }
      }
    }
  }
};

}  // namespace

Histogram histogram(std::span<const double> values, double lo, double hi, int bins) {
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  const double width = (hi - lo) / bins;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    if (v < lo) {
      ++h.below;
    } else if (v >= hi) {
      ++h.above;
    } else {
      auto b = static_cast<std::size_t>((v - lo) / width);
      h.counts[std::min(b, h.counts.size() - 1)]++;
    }
  }
  return h;
}

std::string scatter_svg(const Matrix& coords, std::span<const int> poison, const ScatterStyle& style) {
  const int s = style.size;
  const Bounds b = bounds(coords);
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << s << "\" height=\"" << s + 24 << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"8\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">" << escape(style.title) << "</text>\n";
  for (Eigen::Index i : draw_order(coords, poison)) {
    const bool p = static_cast<std::size_t>(i) < poison.size() && poison[static_cast<std::size_t>(i)] != 0;
    const double x = (coords(i, 0) - b.x0) / (b.x1 - b.x0) * s;
    const double y = 24 + (1.0 - (coords(i, 1) - b.y0) / (b.y1 - b.y0)) * s;
    os << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y) << "\" r=\"2\" fill=\"" << (p ? kPoison : kClean)
       << "\" fill-opacity=\"0.7\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string histogram_svg(std::span<const double> clean, std::span<const double> poison, const std::string& title,
                          double y_max) {
  constexpr int kW = 480, kH = 300, kTop = 24, kLeft = 36, kBottom = 24;
  const Histogram hc = histogram(clean);
  const Histogram hp = histogram(poison);
  const int plot_w = kW - kLeft - 8;
  const int plot_h = kH - kTop - kBottom;
  const double bw = static_cast<double>(plot_w) / static_cast<double>(hc.counts.size());
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"8\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">" << escape(title) << "</text>\n";
  auto bars = [&](const Histogram& h, const char* colour) {
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      if (h.counts[b] == 0) continue;
      const double height = std::min(static_cast<double>(h.counts[b]), y_max) / y_max * plot_h;
      os << "<rect x=\"" << fmt(kLeft + b * bw) << "\" y=\"" << fmt(kTop + plot_h - height) << "\" width=\""
         << fmt(bw) << "\" height=\"" << fmt(height) << "\" fill=\"" << colour << "\" fill-opacity=\"0.6\"/>\n";
    }
  };
  bars(hc, kClean);
  bars(hp, kPoison);
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
     << kTop + plot_h << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h
     << "\" stroke=\"black\"/>\n";
  for (int t = -3; t <= 3; ++t) {
    const double x = kLeft + (t + 3) / 6.0 * plot_w;
    os << "<text x=\"" << fmt(x - 4) << "\" y=\"" << kH - 6 << "\" font-family=\"sans-serif\" font-size=\"11\">" << t
       << "</text>\n";
  }
  os << "<text x=\"4\" y=\"" << kTop + 10 << "\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(y_max)
     << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

void write_scatter_png(const std::filesystem::path& path, const Matrix& coords, std::span<const int> poison,
                       int size) {
  Canvas cv(size, size);
  const Bounds b = bounds(coords);
  for (Eigen::Index i : draw_order(coords, poison)) {
    const bool p = static_cast<std::size_t>(i) < poison.size() && poison[static_cast<std::size_t>(i)] != 0;
    const int x = static_cast<int>((coords(i, 0) - b.x0) / (b.x1 - b.x0) * (size - 1));
    const int y = static_cast<int>((1.0 - (coords(i, 1) - b.y0) / (b.y1 - b.y0)) * (size - 1));
    cv.fill(x - 1, y - 1, x + 2, y + 2, p ? kPoisonRgb : kCleanRgb, 0.7f);
  }
  write_png(path, ImageShape{size, size, 3}, cv.px);
}

void write_histogram_png(const std::filesystem::path& path, std::span<const double> clean,
                         std::span<const double> poison, double y_max) {
  constexpr int kW = 480, kH = 300;
  Canvas cv(kW, kH);
  const Histogram hc = histogram(clean);
  const Histogram hp = histogram(poison);
  const double bw = static_cast<double>(kW) / static_cast<double>(hc.counts.size());
  for (const auto* h : {&hc, &hp}) {
    const float* rgb = h == &hc ? kCleanRgb : kPoisonRgb;
    for (std::size_t b = 0; b < h->counts.size(); ++b) {
      const int height = static_cast<int>(std::min(static_cast<double>(h->counts[b]), y_max) / y_max * (kH - 1));
      cv.fill(static_cast<int>(b * bw), kH - height, static_cast<int>((b + 1) * bw), kH, rgb, 0.6f);
    }
  }
  write_png(path, ImageShape{kH, kW, 3}, cv.px);
}

}  // namespace latsep
