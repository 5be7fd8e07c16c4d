#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "adc/common.hpp"
#include "adc/dataset.hpp"
#include "adc/matrix.hpp"

namespace adc {

// Correlated multi-domain rating generator: every user owns one global
// factor vector; each domain sees it through its own random rotation, so
// domains carry shared signal without being copies of each other.
struct SyntheticSpec {
  int p = 2;
  int users = 100;          // users per domain; `overlap` of them shared by all
  int items = 50;           // default items per domain
  double overlap = 1.0;     // fraction of shared users
  double noise = 0.1;       // rating noise std
  std::vector<int> items_per_domain;       // optional per-domain override
  std::vector<double> density_per_domain;  // optional; default 0.05 each
  int latent_dim = 8;
  std::uint64_t seed = 1;
};

namespace detail {

// Random rotation via Gram-Schmidt on a Gaussian matrix.
inline Mat random_rotation(int n, Rng& rng) {
  Mat q(n, n);
  for (auto& x : q.a) x = rng.gaussian();
  for (int i = 0; i < n; ++i) {
    double* qi = q.row(i);
    for (int j = 0; j < i; ++j) {
      const double* qj = q.row(j);
      double proj = dot(qi, qj, n);
      for (int c = 0; c < n; ++c) qi[c] -= proj * qj[c];
    }
    double nrm = std::sqrt(dot(qi, qi, n));
    if (nrm < 1e-12) nrm = 1.0;
    for (int c = 0; c < n; ++c) qi[c] /= nrm;
  }
  return q;
}

}  // namespace detail

inline std::vector<std::vector<RatingTriple>> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.p < 1 || spec.users < 1 || spec.items < 1)
    throw ConfigError("synthetic: p, users, items must be positive");
  if (spec.overlap < 0.0 || spec.overlap > 1.0)
    throw ConfigError("synthetic: overlap must be in [0,1]");

  const int dg = spec.latent_dim;
  const int shared = static_cast<int>(std::lround(spec.overlap * spec.users));
  Rng rng(derive_seed(spec.seed, Stream::Synthetic));

  std::vector<std::string> shared_ids(shared);
  std::vector<Mat> user_g(spec.p);  // per-domain user factor rows
  Mat shared_g(shared, dg);
  for (auto& x : shared_g.a) x = rng.gaussian();
  for (int s = 0; s < shared; ++s) shared_ids[s] = "u" + std::to_string(s);

  std::vector<std::vector<RatingTriple>> out(spec.p);
  for (int k = 0; k < spec.p; ++k) {
    const int mk = (k < static_cast<int>(spec.items_per_domain.size()) &&
                    spec.items_per_domain[k] > 0)
                       ? spec.items_per_domain[k]
                       : spec.items;
    const double density = (k < static_cast<int>(spec.density_per_domain.size()) &&
                            spec.density_per_domain[k] > 0.0)
                               ? spec.density_per_domain[k]
                               : 0.05;

    Mat rot = detail::random_rotation(dg, rng);

    // domain users: shared first, then domain-unique fills to spec.users
    const int uniq = spec.users - shared;
    Mat uf(spec.users, dg);
    std::vector<std::string> uids(spec.users);
    for (int u = 0; u < shared; ++u) {
      uids[u] = shared_ids[u];
      const double* g = shared_g.row(u);
      double* r = uf.row(u);
      for (int c = 0; c < dg; ++c) r[c] = dot(rot.row(c), g, dg);
    }
    for (int u = 0; u < uniq; ++u) {
      uids[shared + u] = "d" + std::to_string(k) + "_u" + std::to_string(u);
      double* r = uf.row(shared + u);
      for (int c = 0; c < dg; ++c) r[c] = rng.gaussian();
    }

    Mat vf(mk, dg);
    for (auto& x : vf.a) x = rng.gaussian();

    long long cells = static_cast<long long>(spec.users) * mk;
    long long want = std::max(1LL, std::llround(density * static_cast<double>(cells)));
    want = std::min(want, cells);

    std::unordered_set<long long> used;
    used.reserve(static_cast<std::size_t>(want) * 2);
    auto& triples = out[k];
    triples.reserve(static_cast<std::size_t>(want));
    while (static_cast<long long>(triples.size()) < want) {
      int u = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.users)));
      int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(mk)));
      long long key = static_cast<long long>(u) * mk + i;
      if (!used.insert(key).second) continue;
      double raw = dot(uf.row(u), vf.row(i), dg) / std::sqrt(static_cast<double>(dg));
      double rating = 3.0 + 1.2 * raw + spec.noise * rng.gaussian();
      rating = std::clamp(rating, 1.0, 5.0);
      triples.push_back({uids[u], "i" + std::to_string(i), rating});
    }
  }
  return out;
}

inline std::vector<DomainDataset> generate_synthetic_datasets(const SyntheticSpec& spec) {
  auto raw = generate_synthetic(spec);
  std::vector<DomainDataset> out;
  out.reserve(raw.size());
  for (int k = 0; k < static_cast<int>(raw.size()); ++k) out.push_back(build_domain(raw[k], k));
  return out;
}

inline void write_rating_file(const std::string& path, const std::vector<RatingTriple>& triples) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write rating file: " + path);
  for (const auto& t : triples)
    out << t.user << '\t' << t.item << '\t' << fmt_double(t.value) << '\n';
}

}  // namespace adc
