#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "adc/common.hpp"

namespace adc {

struct RatingTriple {
  std::string user;
  std::string item;
  double value = 0.0;
};

struct Triple {
  int user = 0;  // local user index
  int item = 0;  // local item index
  double value = 0.0;
};

struct DomainDataset {
  int domain_id = 0;
  int n_users = 0;
  int n_items = 0;
  std::vector<Triple> triples;
  std::unordered_map<std::string, int> user_map;
  std::unordered_map<std::string, int> item_map;
  std::vector<std::string> user_ids;  // local index -> external id
  std::vector<std::string> item_ids;

  double density() const {
    if (n_users == 0 || n_items == 0) return 0.0;
    return static_cast<double>(triples.size()) /
           (static_cast<double>(n_users) * static_cast<double>(n_items));
  }
};

namespace detail {

inline bool parse_rating_line(const std::string& line, RatingTriple& out) {
  auto t1 = line.find('\t');
  if (t1 == std::string::npos) return false;
  auto t2 = line.find('\t', t1 + 1);
  if (t2 == std::string::npos) return false;
  if (line.find('\t', t2 + 1) != std::string::npos) return false;
  out.user = line.substr(0, t1);
  out.item = line.substr(t1 + 1, t2 - t1 - 1);
  std::string val = line.substr(t2 + 1);
  if (!val.empty() && val.back() == '\r') val.pop_back();
  if (out.user.empty() || out.item.empty() || val.empty()) return false;
  try {
    std::size_t pos = 0;
    out.value = std::stod(val, &pos);
    if (pos != val.size()) return false;
  } catch (const std::exception&) {
    return false;
  }
  return std::isfinite(out.value);
}

}  // namespace detail

// Builds a DomainDataset from in-memory triples; local indices are assigned
// in first-appearance order, duplicate (user,item) pairs keep the last value.
inline DomainDataset build_domain(const std::vector<RatingTriple>& raw, int domain_id) {
  DomainDataset ds;
  ds.domain_id = domain_id;
  std::unordered_map<std::int64_t, std::size_t> seen;  // (u,i) -> triple slot
  for (const auto& r : raw) {
    auto ui = ds.user_map.find(r.user);
    int u;
    if (ui == ds.user_map.end()) {
      u = ds.n_users++;
      ds.user_map.emplace(r.user, u);
      ds.user_ids.push_back(r.user);
    } else {
      u = ui->second;
    }
    auto it = ds.item_map.find(r.item);
    int i;
    if (it == ds.item_map.end()) {
      i = ds.n_items++;
      ds.item_map.emplace(r.item, i);
      ds.item_ids.push_back(r.item);
    } else {
      i = it->second;
    }
    std::int64_t key = static_cast<std::int64_t>(u) * (1LL << 31) + i;
    auto s = seen.find(key);
    if (s == seen.end()) {
      seen.emplace(key, ds.triples.size());
      ds.triples.push_back({u, i, r.value});
    } else {
      ds.triples[s->second].value = r.value;  // last occurrence wins
    }
  }
  return ds;
}

// One UTF-8 text file per domain, user<TAB>item<TAB>rating per line.
inline DomainDataset load_domain(const std::string& path, int domain_id) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open rating file: " + path);
  std::vector<RatingTriple> raw;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    RatingTriple r;
    if (!detail::parse_rating_line(line, r))
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed rating line");
    raw.push_back(std::move(r));
  }
  if (raw.empty()) throw DataError("empty domain file: " + path);
  return build_domain(raw, domain_id);
}

struct GlobalUserIndex {
  std::unordered_map<std::string, int> global_map;
  std::vector<std::string> global_ids;
  std::vector<std::vector<int>> presence;     // global -> sorted domain ids
  std::vector<std::vector<int>> local_index;  // global -> per-domain local user or -1
  int n_domains = 0;

  int n_users() const { return static_cast<int>(global_ids.size()); }
  bool present_in(int g, int domain) const { return local_index[g][domain] >= 0; }
};

inline GlobalUserIndex align_users(const std::vector<DomainDataset>& datasets) {
  if (datasets.empty()) throw DataError("align_users: no datasets");
  GlobalUserIndex gx;
  gx.n_domains = static_cast<int>(datasets.size());
  for (const auto& ds : datasets) {
    for (int u = 0; u < ds.n_users; ++u) {
      const std::string& id = ds.user_ids[u];
      auto it = gx.global_map.find(id);
      int g;
      if (it == gx.global_map.end()) {
        g = gx.n_users();
        gx.global_map.emplace(id, g);
        gx.global_ids.push_back(id);
        gx.presence.emplace_back();
        gx.local_index.emplace_back(gx.n_domains, -1);
      } else {
        g = it->second;
      }
      gx.presence[g].push_back(ds.domain_id);
      gx.local_index[g][ds.domain_id] = u;
    }
  }
  for (auto& p : gx.presence) std::sort(p.begin(), p.end());
  return gx;
}

enum class SplitTag : std::uint8_t { Train = 0, Validation = 1, Test = 2, Unused = 3 };

inline const char* split_tag_name(SplitTag t) {
  switch (t) {
    case SplitTag::Train: return "train";
    case SplitTag::Validation: return "validation";
    case SplitTag::Test: return "test";
    default: return "unused";
  }
}

struct SplitAssignment {
  int target_domain = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<SplitTag>> tags;  // [domain][triple index]

  SplitTag tag(int domain, std::size_t triple_idx) const { return tags[domain][triple_idx]; }

  int count(int domain, SplitTag t) const {
    int n = 0;
    for (SplitTag x : tags[domain])
      if (x == t) ++n;
    return n;
  }
};

// 50% of every domain's ratings are train; the target domain's remainder is
// 10% validation / 40% test. Floor per bucket, leftovers go to train.
inline SplitAssignment split(const std::vector<DomainDataset>& datasets, int target_domain,
                             std::uint64_t seed) {
  if (target_domain < 0 || target_domain >= static_cast<int>(datasets.size()))
    throw DataError("split: target domain out of range");
  if (datasets[target_domain].triples.size() < 10)
    throw DataError("split: target domain has fewer than 10 ratings");

  SplitAssignment sp;
  sp.target_domain = target_domain;
  sp.seed = seed;
  sp.tags.resize(datasets.size());

  for (const auto& ds : datasets) {
    const std::size_t c = ds.triples.size();
    std::vector<std::size_t> order(c);
    for (std::size_t i = 0; i < c; ++i) order[i] = i;
    Rng rng(derive_seed(seed, Stream::Split, static_cast<std::uint64_t>(ds.domain_id)));
    rng.shuffle(order);

    auto& tags = sp.tags[ds.domain_id];
    tags.assign(c, SplitTag::Unused);
    if (ds.domain_id == target_domain) {
      std::size_t n_tr = c / 2;
      std::size_t n_val = c / 10;
      std::size_t n_te = (c * 4) / 10;
      n_tr += c - n_tr - n_val - n_te;  // leftover -> train
      std::size_t pos = 0;
      for (std::size_t i = 0; i < n_tr; ++i) tags[order[pos++]] = SplitTag::Train;
      for (std::size_t i = 0; i < n_val; ++i) tags[order[pos++]] = SplitTag::Validation;
      for (; pos < c; ++pos) tags[order[pos]] = SplitTag::Test;
    } else {
      std::size_t n_tr = c - c / 2;  // floor(c/2) unused, leftover to train
      for (std::size_t i = 0; i < n_tr; ++i) tags[order[i]] = SplitTag::Train;
    }
  }
  return sp;
}

struct RelevanceSet {
  int domain = 0;
  SplitTag eval_tag = SplitTag::Test;
  std::unordered_map<int, double> mean_train;         // local user -> mean train rating
  std::unordered_map<int, std::set<int>> relevant;    // local user -> relevant eval items
  std::unordered_map<int, std::vector<int>> observed_train;  // local user -> train items

  // Users that enter metric averaging: >=1 train rating and >=1 relevant item.
  std::vector<int> evaluable_users() const {
    std::vector<int> us;
    for (const auto& [u, items] : relevant)
      if (!items.empty()) us.push_back(u);
    std::sort(us.begin(), us.end());
    return us;
  }
};

// An eval item is relevant iff its rating is strictly above the user's mean
// train rating in that domain; users without train ratings are dropped.
inline RelevanceSet label_relevance(const SplitAssignment& sp,
                                    const std::vector<DomainDataset>& datasets,
                                    SplitTag eval_tag = SplitTag::Test) {
  const int k = sp.target_domain;
  const auto& ds = datasets[k];
  RelevanceSet rel;
  rel.domain = k;
  rel.eval_tag = eval_tag;

  std::unordered_map<int, std::pair<double, int>> acc;  // user -> (sum, count)
  for (std::size_t i = 0; i < ds.triples.size(); ++i) {
    if (sp.tag(k, i) != SplitTag::Train) continue;
    const auto& t = ds.triples[i];
    auto& cell = acc[t.user];
    cell.first += t.value;
    cell.second += 1;
    rel.observed_train[t.user].push_back(t.item);
  }
  for (const auto& [u, cell] : acc) rel.mean_train[u] = cell.first / cell.second;

  for (std::size_t i = 0; i < ds.triples.size(); ++i) {
    if (sp.tag(k, i) != eval_tag) continue;
    const auto& t = ds.triples[i];
    auto mu = rel.mean_train.find(t.user);
    if (mu == rel.mean_train.end()) continue;  // no train mean -> excluded
    if (t.value > mu->second) rel.relevant[t.user].insert(t.item);
  }
  return rel;
}

// Split manifest: replayable record of every triple's tag, external ids.
inline void save_split_manifest(const std::string& path,
                                const std::vector<DomainDataset>& datasets,
                                const SplitAssignment& sp) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split manifest: " + path);
  out << "# target=" << sp.target_domain << " seed=" << sp.seed << "\n";
  for (const auto& ds : datasets) {
    for (std::size_t i = 0; i < ds.triples.size(); ++i) {
      const auto& t = ds.triples[i];
      out << ds.domain_id << '\t' << ds.user_ids[t.user] << '\t' << ds.item_ids[t.item]
          << '\t' << split_tag_name(sp.tag(ds.domain_id, i)) << '\n';
    }
  }
}

inline SplitAssignment load_split_manifest(const std::string& path,
                                           const std::vector<DomainDataset>& datasets) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split manifest: " + path);
  SplitAssignment sp;
  sp.tags.resize(datasets.size());
  std::vector<std::unordered_map<std::int64_t, std::size_t>> index(datasets.size());
  for (const auto& ds : datasets) {
    sp.tags[ds.domain_id].assign(ds.triples.size(), SplitTag::Unused);
    auto& ix = index[ds.domain_id];
    for (std::size_t i = 0; i < ds.triples.size(); ++i)
      ix[static_cast<std::int64_t>(ds.triples[i].user) * (1LL << 31) + ds.triples[i].item] = i;
  }
  std::string line;
  long line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::sscanf(line.c_str(), "# target=%d seed=%llu", &sp.target_domain,
                  reinterpret_cast<unsigned long long*>(&sp.seed));
      header_seen = true;
      continue;
    }
    std::istringstream ss(line);
    int dom;
    std::string user, item, tag;
    if (!(ss >> dom >> user >> item >> tag))
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed manifest row");
    if (dom < 0 || dom >= static_cast<int>(datasets.size()))
      throw DataError(path + ":" + std::to_string(line_no) + ": unknown domain");
    const auto& ds = datasets[dom];
    auto ui = ds.user_map.find(user);
    auto ii = ds.item_map.find(item);
    if (ui == ds.user_map.end() || ii == ds.item_map.end())
      throw DataError(path + ":" + std::to_string(line_no) + ": row not in dataset");
    auto ti = index[dom].find(static_cast<std::int64_t>(ui->second) * (1LL << 31) + ii->second);
    if (ti == index[dom].end())
      throw DataError(path + ":" + std::to_string(line_no) + ": pair not in dataset");
    SplitTag t;
    if (tag == "train") t = SplitTag::Train;
    else if (tag == "validation") t = SplitTag::Validation;
    else if (tag == "test") t = SplitTag::Test;
    else if (tag == "unused") t = SplitTag::Unused;
    else throw DataError(path + ":" + std::to_string(line_no) + ": unknown tag " + tag);
    sp.tags[dom][ti->second] = t;
  }
  if (!header_seen) throw DataError(path + ": missing manifest header");
  return sp;
}

}  // namespace adc
