#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "adc/common.hpp"
#include "adc/trainer.hpp"

namespace adc {

// Flat key=value config; '#' starts a comment, blank lines ignored.
inline std::map<std::string, std::string> parse_config_text(std::istream& in,
                                                            const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::string line;
  long line_no = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return std::string();
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    kv[key] = val;
  }
  return kv;
}

inline std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_config_text(in, path);
}

// Applies key=value pairs onto the defaults, collecting every problem so the
// user sees all of them at once.
inline TrainConfig apply_config(const std::map<std::string, std::string>& kv,
                                TrainConfig base = TrainConfig{}) {
  std::vector<std::string> errs;
  auto get_int = [&](const std::string& key, int& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    try {
      std::size_t pos = 0;
      long v = std::stol(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      out = static_cast<int>(v);
    } catch (const std::exception&) {
      errs.push_back(key + ": not an integer: " + it->second);
    }
  };
  auto get_u64 = [&](const std::string& key, std::uint64_t& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    try {
      std::size_t pos = 0;
      out = std::stoull(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      errs.push_back(key + ": not an unsigned integer: " + it->second);
    }
  };
  auto get_dbl = [&](const std::string& key, double& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    try {
      std::size_t pos = 0;
      out = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      errs.push_back(key + ": not a number: " + it->second);
    }
  };
  auto get_bool = [&](const std::string& key, bool& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    if (it->second == "true" || it->second == "1") out = true;
    else if (it->second == "false" || it->second == "0") out = false;
    else errs.push_back(key + ": not a boolean: " + it->second);
  };
  auto get_str = [&](const std::string& key, std::string& out) {
    auto it = kv.find(key);
    if (it != kv.end()) out = it->second;
  };

  TrainConfig c = base;
  get_int("d", c.d);
  get_int("h", c.h);
  get_dbl("gamma", c.gamma);
  get_dbl("lambda", c.lambda);
  get_int("negatives_per_positive", c.negatives_per_positive);
  get_int("batch_size", c.batch_size);
  get_dbl("learn_rate", c.learn_rate);
  get_dbl("momentum", c.momentum);
  get_dbl("balancer_learn_rate", c.balancer_learn_rate);
  get_int("balance_every", c.balance_every);
  get_int("max_epochs", c.max_epochs);
  get_int("patience", c.patience);
  get_u64("seed", c.seed);
  get_str("reg_on", c.reg_on);
  get_bool("freeze_items", c.freeze_items);
  get_int("hidden_width", c.hidden_width);
  get_dbl("pretrain_fraction", c.pretrain_fraction);
  get_dbl("w_min", c.w_min);
  get_bool("ema", c.ema);
  get_dbl("ema_decay", c.ema_decay);
  get_int("mf_epochs", c.mf_epochs);
  get_dbl("mf_learn_rate", c.mf_learn_rate);
  get_dbl("mf_reg", c.mf_reg);
  get_int("baseline_epochs", c.baseline_epochs);
  get_dbl("baseline_learn_rate", c.baseline_learn_rate);
  get_dbl("baseline_reg", c.baseline_reg);

  static const char* known[] = {
      "d", "h", "gamma", "lambda", "negatives_per_positive", "batch_size",
      "learn_rate", "momentum", "balancer_learn_rate", "balance_every", "max_epochs",
      "patience", "seed", "reg_on", "freeze_items", "hidden_width", "pretrain_fraction",
      "w_min", "ema", "ema_decay", "mf_epochs", "mf_learn_rate", "mf_reg",
      "baseline_epochs", "baseline_learn_rate", "baseline_reg"};
  for (const auto& [key, _] : kv) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) {
        ok = true;
        break;
      }
    if (!ok) errs.push_back("unknown config key: " + key);
  }

  for (const auto& e : validate_config(c)) errs.push_back(e);
  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return c;
}

inline std::string serialize_config(const TrainConfig& c) {
  std::ostringstream out;
  out << "d=" << c.d << '\n';
  out << "h=" << c.h << '\n';
  out << "gamma=" << fmt_double(c.gamma) << '\n';
  out << "lambda=" << fmt_double(c.lambda) << '\n';
  out << "negatives_per_positive=" << c.negatives_per_positive << '\n';
  out << "batch_size=" << c.batch_size << '\n';
  out << "learn_rate=" << fmt_double(c.learn_rate) << '\n';
  out << "momentum=" << fmt_double(c.momentum) << '\n';
  out << "balancer_learn_rate=" << fmt_double(c.balancer_learn_rate) << '\n';
  out << "balance_every=" << c.balance_every << '\n';
  out << "max_epochs=" << c.max_epochs << '\n';
  out << "patience=" << c.patience << '\n';
  out << "seed=" << c.seed << '\n';
  out << "reg_on=" << c.reg_on << '\n';
  out << "freeze_items=" << (c.freeze_items ? "true" : "false") << '\n';
  out << "hidden_width=" << c.hidden_width << '\n';
  out << "pretrain_fraction=" << fmt_double(c.pretrain_fraction) << '\n';
  out << "w_min=" << fmt_double(c.w_min) << '\n';
  out << "ema=" << (c.ema ? "true" : "false") << '\n';
  out << "ema_decay=" << fmt_double(c.ema_decay) << '\n';
  out << "mf_epochs=" << c.mf_epochs << '\n';
  out << "mf_learn_rate=" << fmt_double(c.mf_learn_rate) << '\n';
  out << "mf_reg=" << fmt_double(c.mf_reg) << '\n';
  out << "baseline_epochs=" << c.baseline_epochs << '\n';
  out << "baseline_learn_rate=" << fmt_double(c.baseline_learn_rate) << '\n';
  out << "baseline_reg=" << fmt_double(c.baseline_reg) << '\n';
  return out.str();
}

}  // namespace adc
