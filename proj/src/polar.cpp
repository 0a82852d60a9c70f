#include "ricnn/polar.hpp"

#include <algorithm>
#include <map>
#include <mutex>

namespace ricnn {

double deg_sin(double deg) {
  double m = std::fmod(deg, 360.0);
  if (m < 0) m += 360.0;
  if (m == 0.0 || m == 180.0) return 0.0;
  if (m == 90.0) return 1.0;
  if (m == 270.0) return -1.0;
  return std::sin(m * (3.14159265358979323846 / 180.0));
}

double deg_cos(double deg) { return deg_sin(deg + 90.0); }

namespace {

PolarLattice build(int K) {
  if (K != 3 && K != 5 && K != 7)
    throw InvalidArgument("window size must be 3, 5 or 7, got " +
                          std::to_string(K));
  PolarLattice lat;
  lat.K = K;
  lat.rings = (K - 1) / 2;
  lat.ring_size = {1};
  lat.ring_base = {0};
  lat.off_r = {0.0};
  lat.off_c = {0.0};
  lat.ring_of_slot = {0};
  for (int j = 1; j <= lat.rings; ++j) {
    int n = 8 * j;
    lat.ring_base.push_back(static_cast<int>(lat.off_r.size()));
    lat.ring_size.push_back(n);
    for (int i = 0; i < n; ++i) {
      double t = 360.0 * i / n;
      lat.off_r.push_back(j * deg_sin(t));
      lat.off_c.push_back(j * deg_cos(t));
      lat.ring_of_slot.push_back(j);
    }
  }

  // ring j <-> Chebyshev shell j, matched in clockwise angular order
  const int R = lat.rings;
  lat.cell_of_slot.assign(lat.slots(), -1);
  lat.slot_of_cell.assign(lat.slots(), -1);
  lat.cell_of_slot[0] = R * K + R;
  lat.slot_of_cell[R * K + R] = 0;
  for (int j = 1; j <= R; ++j) {
    struct Cell {
      double ang;
      int idx;
    };
    std::vector<Cell> shell;
    for (int dr = -R; dr <= R; ++dr)
      for (int dc = -R; dc <= R; ++dc) {
        if (std::max(std::abs(dr), std::abs(dc)) != j) continue;
        double a = std::atan2(static_cast<double>(dr), static_cast<double>(dc));
        if (a < 0) a += 2 * 3.14159265358979323846;
        shell.push_back({a, (dr + R) * K + (dc + R)});
      }
    std::sort(shell.begin(), shell.end(),
              [](const Cell& a, const Cell& b) { return a.ang < b.ang; });
    for (int i = 0; i < static_cast<int>(shell.size()); ++i) {
      int slot = lat.ring_base[j] + i;
      lat.cell_of_slot[slot] = shell[i].idx;
      lat.slot_of_cell[shell[i].idx] = slot;
    }
  }

  lat.taps.resize(lat.slots());
  for (int s = 0; s < lat.slots(); ++s) {
    double fr = std::floor(lat.off_r[s]), fc = std::floor(lat.off_c[s]);
    double ar = lat.off_r[s] - fr, ac = lat.off_c[s] - fc;
    auto& t = lat.taps[s];
    int r0 = static_cast<int>(fr), c0 = static_cast<int>(fc);
    t.dr[0] = r0; t.dc[0] = c0; t.w[0] = (1 - ar) * (1 - ac);
    t.dr[1] = r0; t.dc[1] = c0 + 1; t.w[1] = (1 - ar) * ac;
    t.dr[2] = r0 + 1; t.dc[2] = c0; t.w[2] = ar * (1 - ac);
    t.dr[3] = r0 + 1; t.dc[3] = c0 + 1; t.w[3] = ar * ac;
    // keep the axis-aligned samples single-read exact
    for (int q = 1; q < 4; ++q)
      if (t.w[q] == 0.0) { t.dr[q] = r0; t.dc[q] = c0; }
  }
  return lat;
}

}  // namespace

const PolarLattice& PolarLattice::get(int K) {
  static std::mutex mu;
  static std::map<int, PolarLattice> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(K);
  if (it == cache.end()) it = cache.emplace(K, build(K)).first;
  return it->second;
}

}  // namespace ricnn
