#include "jampr/plot.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace jampr {

namespace {

const char* kPalette[] = {"#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
                          "#46f0f0", "#f032e6", "#bcf60c", "#008080", "#9a6324",
                          "#800000", "#808000"};
constexpr int kPaletteSize = 12;

}  // namespace

std::string render_svg(const Instance& inst, const Solution& sol, const Variant& variant) {
  for (const auto& tour : sol.tours)
    for (int i : tour)
      if (i < 1 || i > inst.n())
        throw std::invalid_argument("render_svg: customer id " + std::to_string(i) +
                                    " out of range");

  double min_x = inst.nodes[0].x, max_x = inst.nodes[0].x;
  double min_y = inst.nodes[0].y, max_y = inst.nodes[0].y;
  for (const Node& nd : inst.nodes) {
    min_x = std::min(min_x, nd.x);
    max_x = std::max(max_x, nd.x);
    min_y = std::min(min_y, nd.y);
    max_y = std::max(max_y, nd.y);
  }
  double span = std::max({max_x - min_x, max_y - min_y, 1e-9});
  const double size = 640.0, margin = 40.0, legend_w = 240.0;
  auto px = [&](double x) { return margin + (x - min_x) / span * size; };
  auto py = [&](double y) { return margin + size - (y - min_y) / span * size; };

  CostBreakdown cb = cost(inst, sol, variant);

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin + legend_w
      << "\" height=\"" << size + 2 * margin << "\" viewBox=\"0 0 "
      << size + 2 * margin + legend_w << ' ' << size + 2 * margin << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (size_t t = 0; t < sol.tours.size(); ++t) {
    const char* color = kPalette[t % kPaletteSize];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    svg << px(inst.nodes[0].x) << ',' << py(inst.nodes[0].y);
    for (int i : sol.tours[t]) svg << ' ' << px(inst.nodes[i].x) << ',' << py(inst.nodes[i].y);
    svg << ' ' << px(inst.nodes[0].x) << ',' << py(inst.nodes[0].y) << "\"/>\n";
  }

  for (int i = 1; i <= inst.n(); ++i)
    svg << "<circle cx=\"" << px(inst.nodes[i].x) << "\" cy=\"" << py(inst.nodes[i].y)
        << "\" r=\"3\" fill=\"#333\"/>\n";
  svg << "<rect x=\"" << px(inst.nodes[0].x) - 5 << "\" y=\"" << py(inst.nodes[0].y) - 5
      << "\" width=\"10\" height=\"10\" fill=\"black\"/>\n";

  double lx = size + 2 * margin, ly = margin;
  svg << "<text x=\"" << lx << "\" y=\"" << ly << "\" font-family=\"monospace\" font-size=\"12\">"
      << "cost " << cb.total << "  k " << cb.k << "</text>\n";
  for (size_t t = 0; t < cb.tours.size(); ++t) {
    const TourCost& tc = cb.tours[t];
    ly += 16;
    svg << "<text x=\"" << lx << "\" y=\"" << ly
        << "\" font-family=\"monospace\" font-size=\"12\" fill=\"" << kPalette[t % kPaletteSize]
        << "\">R" << std::setw(2) << std::setfill('0') << t + 1 << std::setfill(' ')
        << " n=" << tc.customers << " l=" << tc.distance << " q=" << tc.load
        << " t=" << tc.duration << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace jampr
