#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "latentpde/field.hpp"
#include "latentpde/metrics.hpp"

namespace latentpde::harness {

/// 8-bit binary PGM heatmap, linearly scaled to [lo, hi] (field range when lo == hi).
inline void write_pgm(const Field& f, const std::filesystem::path& path, double lo = 0.0, double hi = 0.0) {
  if (lo == hi) {
    const auto [a, b] = std::minmax_element(f.storage().begin(), f.storage().end());
    lo = *a;
    hi = *b;
  }
  const double span = hi > lo ? hi - lo : 1.0;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << f.width() << " " << f.height() << "\n255\n";
  for (double v : f.storage()) {
    const double t = std::clamp((v - lo) / span, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
  }
}

/// Log-scale radial PSD curves, one polyline per named field.
inline void write_psd_svg(const std::map<std::string, metrics::RadialPsd>& curves, const std::filesystem::path& path) {
  const double W = 480, H = 320, pad = 40;
  double lo = 1e300, hi = -1e300;
  std::size_t kmax = 1;
  for (const auto& [_, c] : curves) {
    kmax = std::max(kmax, c.power.size());
    for (double p : c.power) {
      const double l = std::log10(std::max(p, metrics::kPsdFloor));
      lo = std::min(lo, l);
      hi = std::max(hi, l);
    }
  }
  if (!(hi > lo)) hi = lo + 1;
  static const char* colors[] = {"#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  svg << "<rect x=\"" << pad << "\" y=\"" << pad / 2 << "\" width=\"" << W - 1.5 * pad << "\" height=\"" << H - 1.5 * pad
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  std::size_t idx = 0;
  for (const auto& [name, c] : curves) {
    const char* col = colors[idx % 6];
    svg << "<polyline fill=\"none\" stroke=\"" << col << "\" points=\"";
    for (std::size_t k = 0; k < c.power.size(); ++k) {
      const double x = pad + (W - 1.5 * pad) * (kmax > 1 ? static_cast<double>(k) / static_cast<double>(kmax - 1) : 0.0);
      const double l = std::log10(std::max(c.power[k], metrics::kPsdFloor));
      const double y = pad / 2 + (H - 1.5 * pad) * (hi - l) / (hi - lo);
      svg << x << "," << y << " ";
    }
    svg << "\"/>\n<text x=\"" << W - 2.5 * pad << "\" y=\"" << pad + 14.0 * static_cast<double>(idx) << "\" fill=\"" << col
        << "\" font-size=\"11\">" << name << "</text>\n";
    ++idx;
  }
  svg << "<text x=\"" << W / 2 << "\" y=\"" << H - 6 << "\" font-size=\"11\">k</text>\n</svg>\n";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << svg.str();
}

}  // namespace latentpde::harness
