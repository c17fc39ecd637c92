#pragma once

#include <string>

#include "jampr/env.hpp"
#include "jampr/instance.hpp"

namespace jampr {

// Renders an SVG document: customer dots, a square depot marker, one colored
// polyline per tour and a legend with (n, l, q, t) per tour. Throws
// std::invalid_argument on out-of-range customer ids.
std::string render_svg(const Instance& inst, const Solution& sol, const Variant& variant);

}  // namespace jampr
