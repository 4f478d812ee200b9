#include "acceptance/oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace faceq::oracle {

namespace {

double pair_quality(const PairScore& p, const std::map<std::string, double>& quality) {
  return std::min(quality.at(p.probe_id), quality.at(p.ref_id));
}

bool ranks_lower(const PairScore& a, const PairScore& b, const std::map<std::string, double>& quality) {
  double qa = pair_quality(a, quality), qb = pair_quality(b, quality);
  if (qa != qb) return qa < qb;
  if (a.probe_id != b.probe_id) return a.probe_id < b.probe_id;
  return a.ref_id < b.ref_id;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double below = 0, equal = 0;
    for (double x : v) {
      if (x < v[i]) ++below;
      if (x == v[i]) ++equal;
    }
    r[i] = below + (equal + 1.0) / 2.0;
  }
  return r;
}

}  // namespace

std::vector<double> erc_fnmr(const std::vector<PairScore>& mated, const std::map<std::string, double>& quality,
                             double threshold, const std::vector<double>& fractions) {
  std::vector<double> out;
  for (double r : fractions) {
    std::size_t reject = 0;
    double target = r * static_cast<double>(mated.size());
    while (static_cast<double>(reject + 1) <= target + 1e-9) ++reject;
    std::vector<PairScore> kept = mated;
    for (std::size_t n = 0; n < reject; ++n) {
      std::size_t worst = 0;
      for (std::size_t i = 1; i < kept.size(); ++i)
        if (ranks_lower(kept[i], kept[worst], quality)) worst = i;
      kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(worst));
    }
    if (kept.empty()) throw std::runtime_error("oracle: every pair rejected");
    double failures = 0;
    for (const auto& p : kept)
      if (!(p.score >= threshold)) ++failures;
    out.push_back(failures / static_cast<double>(kept.size()));
  }
  return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ra = ranks(a), rb = ranks(b);
  double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i] / n;
    mb += rb[i] / n;
  }
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

double sigmoid_of_z(double z) { return 1.0 / (1.0 + std::exp(z)); }

}  // namespace faceq::oracle
