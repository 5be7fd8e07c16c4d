#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "adc/common.hpp"

namespace adc {

// FNV-1a 64; integrity check against accidental edits of run inputs.
inline std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for digest: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct RunManifest {
  std::map<std::string, std::string> fields;             // resolved settings, seeds, paths
  std::vector<std::pair<std::string, std::string>> digests;  // path -> hex digest

  void set(const std::string& key, const std::string& value) { fields[key] = value; }

  void add_digest(const std::string& path) { digests.emplace_back(path, hex64(fnv1a_file(path))); }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path);
    for (const auto& [k, v] : fields) out << k << '=' << v << '\n';
    for (const auto& [p, d] : digests) out << "digest\t" << p << '\t' << d << '\n';
  }

  static RunManifest load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    RunManifest m;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line.rfind("digest\t", 0) == 0) {
        std::istringstream ss(line);
        std::string tag, p, d;
        ss >> tag >> p >> d;
        m.digests.emplace_back(p, d);
      } else {
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("malformed manifest line: " + line);
        m.fields[line.substr(0, eq)] = line.substr(eq + 1);
      }
    }
    return m;
  }

  // Recompute every recorded digest; throws on mismatch (tampered inputs).
  void verify() const {
    for (const auto& [path, digest] : digests) {
      std::string now = hex64(fnv1a_file(path));
      if (now != digest)
        throw DataError("digest mismatch for " + path + ": manifest " + digest + ", file " + now);
    }
  }
};

inline std::string timestamp_utc() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace adc
