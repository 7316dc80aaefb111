#include "iclc/svg.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace iclc {

namespace {

std::string escape(const std::string& s) {
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

}  // namespace

std::string bar_chart_svg(const std::string& title, const std::string& y_label,
                          const std::vector<std::pair<std::string, double>>& bars) {
  constexpr double kLeft = 70, kTop = 40, kPlotH = 240, kBarW = 44, kGap = 26, kBottom = 110;
  const double plot_w = std::max(1.0, static_cast<double>(bars.size())) * (kBarW + kGap) + kGap;
  const double width = kLeft + plot_w + 20;
  const double height = kTop + kPlotH + kBottom;

  double lo = 0.0, hi = 0.0;
  for (const auto& [_, v] : bars) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  if (hi > 0) hi += pad;
  if (lo < 0) lo -= pad;
  auto y_of = [&](double v) { return kTop + (hi - v) / (hi - lo) * kPlotH; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n",
      width, height);
  svg += fmt::format("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
  svg += fmt::format("<text x=\"{:.1f}\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
                     width / 2, escape(title));
  svg += fmt::format(
      "<text x=\"16\" y=\"{:.1f}\" transform=\"rotate(-90 16 {:.1f})\" text-anchor=\"middle\">{}</text>\n",
      kTop + kPlotH / 2, kTop + kPlotH / 2, escape(y_label));

  // Axis with five ticks.
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    const double y = y_of(v);
    svg += fmt::format("<line x1=\"{:.1f}\" x2=\"{:.1f}\" y1=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n",
                       kLeft, kLeft + plot_w, y, y);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", kLeft - 6,
                       y + 4, v);
  }
  const double zero = y_of(0.0);
  svg += fmt::format("<line x1=\"{:.1f}\" x2=\"{:.1f}\" y1=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\"/>\n",
                     kLeft, kLeft + plot_w, zero, zero);

  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& [label, v] = bars[i];
    const double x = kLeft + kGap + static_cast<double>(i) * (kBarW + kGap);
    const double cx = x + kBarW / 2;
    if (std::isfinite(v)) {
      const double y = std::min(y_of(v), zero);
      const double h = std::abs(y_of(v) - zero);
      svg += fmt::format(
          "<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n", x, y,
          kBarW, h, v < 0 ? "#c0504d" : "#4f81bd");
      svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.3f}</text>\n", cx,
                         v < 0 ? y + h + 12 : y - 4, v);
    } else {
      svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">n/a</text>\n", cx,
                         zero - 4);
    }
    const double ly = kTop + kPlotH + 14;
    svg += fmt::format(
        "<text x=\"{:.1f}\" y=\"{:.1f}\" transform=\"rotate(40 {:.1f} {:.1f})\">{}</text>\n", cx, ly, cx,
        ly, escape(label));
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace iclc
