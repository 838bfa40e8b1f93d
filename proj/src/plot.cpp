#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <string>

#include "patchcraft/harness.hpp"

namespace patchcraft {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 180.0;  // room for the legend
constexpr double kTop = 30.0;
constexpr double kBottom = 50.0;

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.2f", v);
  return buffer;
}

}  // namespace

std::string render_accuracy_svg(std::span<const SweepRow> rows) {
  // (patch, layers) -> heads -> test accuracy
  std::map<std::pair<std::size_t, std::size_t>, std::map<std::size_t, double>> series;
  std::set<std::size_t> head_values;
  for (const SweepRow& r : rows) {
    if (!r.ok()) {
      continue;
    }
    series[{r.patch_size, r.layers}][r.heads] = std::clamp(r.test_acc, 0.0, 1.0);
    head_values.insert(r.heads);
  }

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const std::vector<std::size_t> heads(head_values.begin(), head_values.end());
  auto x_of = [&](std::size_t h) {
    if (heads.size() < 2) {
      return kLeft + plot_w / 2.0;
    }
    const auto idx = static_cast<double>(
        std::lower_bound(heads.begin(), heads.end(), h) - heads.begin());
    return kLeft + plot_w * idx / static_cast<double>(heads.size() - 1);
  };
  auto y_of = [&](double acc) { return kTop + plot_h * (1.0 - acc); };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  svg += "  <title>Test accuracy by number of heads</title>\n";
  svg += "  <rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" fill=\"white\"/>\n";

  // Axes, y ticks every 0.2.
  svg += "  <g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
  svg += "    <line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) +
         "\" y2=\"" + num(kTop + plot_h) + "\"/>\n";
  svg += "    <line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + plot_h) + "\" x2=\"" +
         num(kLeft + plot_w) + "\" y2=\"" + num(kTop + plot_h) + "\"/>\n";
  svg += "  </g>\n";
  svg += "  <g class=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 5; ++i) {
    const double acc = i / 5.0;
    svg += "    <text x=\"" + num(kLeft - 8) + "\" y=\"" + num(y_of(acc) + 4) +
           "\" text-anchor=\"end\">" + num(acc) + "</text>\n";
  }
  for (std::size_t h : heads) {
    svg += "    <text x=\"" + num(x_of(h)) + "\" y=\"" + num(kTop + plot_h + 18) +
           "\" text-anchor=\"middle\">" + std::to_string(h) + "</text>\n";
  }
  svg += "    <text x=\"" + num(kLeft + plot_w / 2) + "\" y=\"" + num(kHeight - 10) +
         "\" text-anchor=\"middle\">Number of heads</text>\n";
  svg += "    <text x=\"15\" y=\"" + num(kTop + plot_h / 2) + "\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 15 " + num(kTop + plot_h / 2) + ")\">Test accuracy</text>\n";
  svg += "  </g>\n";

  std::size_t index = 0;
  std::string legend;
  for (const auto& [key, points] : series) {
    const auto [patch, layers] = key;
    const std::string name =
        "ViT-" + std::to_string(patch) + " L=" + std::to_string(layers);
    const char* color = kPalette[index % std::size(kPalette)];
    std::string coords;
    for (const auto& [h, acc] : points) {
      if (!coords.empty()) {
        coords += ' ';
      }
      coords += num(x_of(h)) + "," + num(y_of(acc));
    }
    svg += "  <polyline class=\"variant\" data-variant=\"" + name + "\" fill=\"none\" stroke=\"" +
           color + "\" stroke-width=\"2\" points=\"" + coords + "\"/>\n";

    const double ly = kTop + 10 + 20.0 * static_cast<double>(index);
    const double lx = kLeft + plot_w + 20;
    legend += "    <line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(lx + 20) +
              "\" y2=\"" + num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    legend += "    <text x=\"" + num(lx + 26) + "\" y=\"" + num(ly + 4) + "\">" + name +
              "</text>\n";
    ++index;
  }
  svg += "  <g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n" + legend +
         "  </g>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace patchcraft
