#include "vesselbench/edt.hpp"

#include <algorithm>
#include <limits>

namespace vb {
namespace {

// Large finite stand-in for "no site"; real squared distances never get near
// it, so envelope arithmetic stays finite.
constexpr double HUGE_D = 1e20;

// 1D squared-distance transform (lower envelope of parabolas). All f values
// are finite, so the envelope never degenerates.
void dt1d(const double* f, int n, double* out, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto intersect = [&](int q, int p) {
    return ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
           (2.0 * q - 2.0 * p);
  };
  for (int q = 1; q < n; ++q) {
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double d = q - v[k];
    out[q] = d * d + f[v[k]];
  }
}

}  // namespace

std::vector<double> squared_edt(const std::array<int, 3>& shape, const std::uint8_t* sites) {
  const int nx = shape[0], ny = shape[1], nz = shape[2];
  const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = sites[i] ? 0.0 : HUGE_D;

  const int maxdim = std::max(nx, std::max(ny, nz));
  std::vector<double> f(maxdim), out(maxdim), z(maxdim + 1);
  std::vector<int> v(maxdim);

  // x pass
  for (int zz = 0; zz < nz; ++zz)
    for (int yy = 0; yy < ny; ++yy) {
      double* row = d.data() + static_cast<std::size_t>(nx) * (yy + static_cast<std::size_t>(ny) * zz);
      dt1d(row, nx, out.data(), v.data(), z.data());
      std::copy(out.begin(), out.begin() + nx, row);
    }
  // y pass
  for (int zz = 0; zz < nz; ++zz)
    for (int xx = 0; xx < nx; ++xx) {
      for (int y = 0; y < ny; ++y)
        f[y] = d[static_cast<std::size_t>(xx) + static_cast<std::size_t>(nx) * (y + static_cast<std::size_t>(ny) * zz)];
      dt1d(f.data(), ny, out.data(), v.data(), z.data());
      for (int y = 0; y < ny; ++y)
        d[static_cast<std::size_t>(xx) + static_cast<std::size_t>(nx) * (y + static_cast<std::size_t>(ny) * zz)] = out[y];
    }
  // z pass
  for (int yy = 0; yy < ny; ++yy)
    for (int xx = 0; xx < nx; ++xx) {
      for (int zc = 0; zc < nz; ++zc)
        f[zc] = d[static_cast<std::size_t>(xx) + static_cast<std::size_t>(nx) * (yy + static_cast<std::size_t>(ny) * zc)];
      dt1d(f.data(), nz, out.data(), v.data(), z.data());
      for (int zc = 0; zc < nz; ++zc)
        d[static_cast<std::size_t>(xx) + static_cast<std::size_t>(nx) * (yy + static_cast<std::size_t>(ny) * zc)] = out[zc];
    }

  for (auto& val : d)
    if (val >= HUGE_D) val = std::numeric_limits<double>::infinity();
  return d;
}

std::vector<double> squared_edt_to_background(const std::array<int, 3>& shape,
                                              const std::uint8_t* mask) {
  const std::size_t n = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
  std::vector<std::uint8_t> inverted(n);
  for (std::size_t i = 0; i < n; ++i) inverted[i] = mask[i] ? 0 : 1;
  return squared_edt(shape, inverted.data());
}

}  // namespace vb
