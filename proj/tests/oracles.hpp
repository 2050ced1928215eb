#pragma once

// Brute-force references shared by the unit tests and the acceptance run.

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "cmot/grid.hpp"
#include "cmot/metrics.hpp"

namespace cmot::test {

// Best (most pairs, then least cost) matching by enumerating every
// injective map from the smaller side into the larger.
inline std::pair<int, double> brute_assignment(const Grid<double>& c, const Grid<std::uint8_t>& ok) {
  const int n = c.height(), m = c.width();
  const bool rows_small = n <= m;
  const int small = rows_small ? n : m, big = rows_small ? m : n;
  std::vector<int> perm(big);
  std::iota(perm.begin(), perm.end(), 0);
  int best_n = -1;
  double best_c = 0.0;
  do {
    // Summed in row order, like assignment_cost, so equal matchings give
    // bit-equal totals.
    int cnt = 0;
    std::vector<double> per_row(n, 0.0);
    for (int i = 0; i < small; ++i) {
      const int r = rows_small ? i : perm[i], col = rows_small ? perm[i] : i;
      if (ok(r, col)) ++cnt, per_row[r] = c(r, col);
    }
    double s = 0.0;
    for (double v : per_row) s += v;
    if (cnt > best_n || (cnt == best_n && s < best_c)) best_n = cnt, best_c = s;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best_n, best_c};
}

struct Counts {
  long fp = 0, fn = 0, ids = 0, gt = 0;
};

// CLEAR counting with every assignment of the non-carried pairs enumerated.
inline Counts brute_clear(const std::vector<TrackBox>& gt, const std::vector<TrackBox>& hyp, double thr) {
  std::map<int, std::vector<TrackBox>> gf, hf;
  for (const auto& r : gt) gf[r.frame].push_back(r);
  for (const auto& r : hyp) hf[r.frame].push_back(r);
  std::set<int> frames;
  for (auto& [f, v] : gf) frames.insert(f);
  for (auto& [f, v] : hf) frames.insert(f);
  std::map<int, int> last;
  Counts c;
  for (int f : frames) {
    auto g = gf[f], h = hf[f];
    std::vector<std::pair<int, int>> pairs;
    std::vector<bool> gu(g.size()), hu(h.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      auto it = last.find(g[i].id);
      if (it == last.end()) continue;
      for (std::size_t j = 0; j < h.size(); ++j)
        if (!hu[j] && h[j].id == it->second && iou(g[i].box, h[j].box) >= thr) {
          pairs.push_back({g[i].id, h[j].id});
          gu[i] = hu[j] = true;
        }
    }
    std::vector<int> gr, hr;
    for (std::size_t i = 0; i < g.size(); ++i) if (!gu[i]) gr.push_back(i);
    for (std::size_t j = 0; j < h.size(); ++j) if (!hu[j]) hr.push_back(j);
    // Enumerate: assign each free gt to a free hyp or to nothing.
    int best_n = -1;
    double best_cost = 0;
    std::vector<std::pair<int, int>> best;
    std::vector<int> choice(gr.size(), -1);
    std::function<void(std::size_t, std::vector<bool>&)> rec = [&](std::size_t k, std::vector<bool>& used) {
      if (k == gr.size()) {
        int n = 0;
        double cost = 0;
        std::vector<std::pair<int, int>> cur;
        for (std::size_t a = 0; a < gr.size(); ++a)
          if (choice[a] >= 0) {
            ++n;
            cost += 1 - iou(g[gr[a]].box, h[hr[choice[a]]].box);
            cur.push_back({g[gr[a]].id, h[hr[choice[a]]].id});
          }
        if (n > best_n || (n == best_n && cost < best_cost)) best_n = n, best_cost = cost, best = cur;
        return;
      }
      choice[k] = -1;
      rec(k + 1, used);
      for (std::size_t b = 0; b < hr.size(); ++b)
        if (!used[b] && iou(g[gr[k]].box, h[hr[b]].box) >= thr) {
          used[b] = true;
          choice[k] = static_cast<int>(b);
          rec(k + 1, used);
          used[b] = false;
          choice[k] = -1;
        }
    };
    std::vector<bool> used(hr.size());
    rec(0, used);
    pairs.insert(pairs.end(), best.begin(), best.end());
    for (auto [gid, hid] : pairs) {
      auto it = last.find(gid);
      if (it != last.end() && it->second != hid) ++c.ids;
      last[gid] = hid;
    }
    c.gt += g.size();
    c.fn += g.size() - pairs.size();
    c.fp += h.size() - pairs.size();
  }
  return c;
}

// IDTP by trying every injective map from gt ids to hyp ids.
inline long brute_idtp(const std::vector<TrackBox>& gt, const std::vector<TrackBox>& hyp, double thr) {
  std::vector<int> gids, hids;
  for (const auto& r : gt) gids.push_back(r.id);
  for (const auto& r : hyp) hids.push_back(r.id);
  std::sort(gids.begin(), gids.end());
  gids.erase(std::unique(gids.begin(), gids.end()), gids.end());
  std::sort(hids.begin(), hids.end());
  hids.erase(std::unique(hids.begin(), hids.end()), hids.end());
  auto overlap = [&](int gid, int hid) {
    long n = 0;
    for (const auto& a : gt)
      for (const auto& b : hyp)
        if (a.id == gid && b.id == hid && a.frame == b.frame && iou(a.box, b.box) >= thr) ++n;
    return n;
  };
  long best = 0;
  std::function<void(std::size_t, std::vector<bool>&, long)> rec = [&](std::size_t k, std::vector<bool>& used,
                                                                        long acc) {
    if (k == gids.size()) {
      best = std::max(best, acc);
      return;
    }
    rec(k + 1, used, acc);
    for (std::size_t j = 0; j < hids.size(); ++j)
      if (!used[j]) {
        used[j] = true;
        rec(k + 1, used, acc + overlap(gids[k], hids[j]));
        used[j] = false;
      }
  };
  std::vector<bool> used(hids.size());
  rec(0, used, 0);
  return best;
}

// Up to 5 jittered objects over up to 10 frames, with dropped boxes, one
// clutter box some frames and occasional label swaps in the hypothesis.
inline std::pair<std::vector<TrackBox>, std::vector<TrackBox>> micro_sequence(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nobj(1, 5), nfr(1, 10);
  std::uniform_real_distribution<double> pos(0, 60), jit(-4, 4);
  std::bernoulli_distribution drop(0.2), fp(0.25), swap(0.15);
  const int n = nobj(rng), frames = nfr(rng);
  std::vector<TrackBox> gt, hyp;
  std::vector<std::pair<double, double>> p(n);
  for (auto& q : p) q = {pos(rng), pos(rng)};
  std::vector<int> label(n);
  std::iota(label.begin(), label.end(), 1);
  for (int f = 1; f <= frames; ++f) {
    if (swap(rng) && n > 1) std::swap(label[0], label[n - 1]);
    for (int i = 0; i < n; ++i) {
      p[i].first += jit(rng);
      p[i].second += jit(rng);
      const BBox b{p[i].first, p[i].second, 20, 40};
      gt.push_back({f, i + 1, b, 1});
      if (!drop(rng)) hyp.push_back({f, label[i], {b.x + jit(rng), b.y + jit(rng), 20, 40}, 1});
    }
    if (fp(rng)) hyp.push_back({f, 99, {pos(rng), pos(rng), 20, 40}, 1});
  }
  return {gt, hyp};
}

}  // namespace cmot::test
