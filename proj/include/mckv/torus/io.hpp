#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mckv/torus/grid.hpp"

namespace mckv {

inline constexpr std::array<char, 16> kGridFunctionMagic = {'M', 'C', 'K', 'V', '-', 'G', 'R', 'I',
                                                            'D', 'F', 'N', '\0', '\0', '\0', '\0', '\0'};

/// Round-trippable decimal representation used by every CSV writer.
inline std::string format_real(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

/// CSV with header `index,x,value` (1-D) or `index,x,y,value` (2-D), one row per cell.
inline void write_csv(std::ostream& os, const GridFunction& f) {
  const TorusGrid& g = f.grid();
  const int n = g.cells_per_dim();
  if (g.dim() == 1) {
    os << "index,x,value\n";
    for (int j = 0; j < n; ++j) os << j << ',' << format_real(g.center(j)) << ',' << format_real(f[j]) << '\n';
  } else {
    os << "index,x,y,value\n";
    for (int ix = 0; ix < n; ++ix)
      for (int iy = 0; iy < n; ++iy) {
        const std::size_t i = g.index(ix, iy);
        os << i << ',' << format_real(g.center(ix)) << ',' << format_real(g.center(iy)) << ','
           << format_real(f[i]) << '\n';
      }
  }
}

inline void write_csv(const std::string& path, const GridFunction& f) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_csv(os, f);
}

/// Reads a grid-function CSV; the side length is taken from the caller since centres only fix L/n.
inline GridFunction read_csv(std::istream& is, double length) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("empty grid-function CSV");
  int dim = 0;
  if (line.rfind("index,x,value", 0) == 0) dim = 1;
  else if (line.rfind("index,x,y,value", 0) == 0) dim = 2;
  else throw InvalidArgument("unrecognised grid-function CSV header: " + line);
  std::vector<std::pair<std::size_t, double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ls.imbue(std::locale::classic());
    std::string cell;
    std::vector<std::string> cols;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (static_cast<int>(cols.size()) != dim + 2) throw InvalidArgument("malformed CSV row: " + line);
    rows.emplace_back(std::stoull(cols.front()), std::stod(cols.back()));
  }
  const std::size_t count = rows.size();
  int n = dim == 1 ? static_cast<int>(count) : static_cast<int>(std::lround(std::sqrt(double(count))));
  TorusGrid grid(length, dim, n);
  if (grid.size() != count) throw InvalidArgument("CSV row count is not n^d");
  std::vector<double> v(count, 0.0);
  std::vector<bool> seen(count, false);
  for (auto [i, value] : rows) {
    if (i >= count || seen[i]) throw InvalidArgument("CSV index out of range or repeated");
    seen[i] = true;
    v[i] = value;
  }
  return GridFunction(grid, std::move(v));
}

inline GridFunction read_csv(const std::string& path, double length) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open " + path);
  return read_csv(is, length);
}

namespace detail {

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::endian::native == std::endian::little, "binary dump assumes a little-endian host");
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw InvalidArgument("truncated binary grid function");
  return value;
}

}  // namespace detail

/// Binary layout: 16-byte magic, u32 dim, u32 cells per dim, f64 side length, n^d f64 values.
inline void write_binary(std::ostream& os, const GridFunction& f) {
  os.write(kGridFunctionMagic.data(), kGridFunctionMagic.size());
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.grid().dim()));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.grid().cells_per_dim()));
  detail::put_le<double>(os, f.grid().length());
  for (double v : f.values()) detail::put_le<double>(os, v);
}

inline GridFunction read_binary(std::istream& is) {
  std::array<char, 16> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kGridFunctionMagic) throw InvalidArgument("bad grid-function magic header");
  const auto dim = detail::get_le<std::uint32_t>(is);
  const auto n = detail::get_le<std::uint32_t>(is);
  const auto length = detail::get_le<double>(is);
  TorusGrid grid(length, static_cast<int>(dim), static_cast<int>(n));
  std::vector<double> v(grid.size());
  for (double& x : v) x = detail::get_le<double>(is);
  return GridFunction(grid, std::move(v));
}

}  // namespace mckv
