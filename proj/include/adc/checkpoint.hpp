#pragma once

#include <cstring>
#include <fstream>
#include <string>

#include "adc/balancer.hpp"
#include "adc/factorization.hpp"
#include "adc/network.hpp"
#include "adc/trainer.hpp"

namespace adc {

namespace detail {

inline void write_net(std::ostream& out, const NetworkParams& net) {
  write_i32(out, net.p);
  write_i32(out, net.d);
  write_i32(out, net.h);
  write_i32(out, net.s);
  for (const auto& w : net.layer_w) write_mat(out, w);
  for (const auto& b : net.layer_b) write_vec(out, b);
  write_mat(out, net.head_w);
  write_vec(out, net.head_b);
  write_i32(out, static_cast<std::int32_t>(net.item_factors.size()));
  for (const auto& v : net.item_factors) write_mat(out, v);
  write_u64(out, net.revision);
}

inline NetworkParams read_net(std::istream& in) {
  NetworkParams net;
  net.p = read_i32(in);
  net.d = read_i32(in);
  net.h = read_i32(in);
  net.s = read_i32(in);
  for (int l = 0; l < net.h; ++l) net.layer_w.push_back(read_mat(in));
  for (int l = 0; l < net.h; ++l) net.layer_b.push_back(read_vec(in));
  net.head_w = read_mat(in);
  net.head_b = read_vec(in);
  int nk = read_i32(in);
  for (int k = 0; k < nk; ++k) net.item_factors.push_back(read_mat(in));
  net.revision = read_u64(in);
  return net;
}

inline void write_balancer(std::ostream& out, const BalancerState& st) {
  write_vec(out, st.weights);
  write_vec(out, st.initial_losses);
  write_f64(out, st.gamma);
  write_f64(out, st.learn_rate);
  write_u64(out, static_cast<std::uint64_t>(st.iteration));
  write_f64(out, st.w_min);
  write_i32(out, st.use_ema ? 1 : 0);
  write_f64(out, st.ema_decay);
  write_vec(out, st.smoothed_losses);
}

inline BalancerState read_balancer(std::istream& in) {
  BalancerState st;
  st.weights = read_vec(in);
  st.initial_losses = read_vec(in);
  st.gamma = read_f64(in);
  st.learn_rate = read_f64(in);
  st.iteration = static_cast<long>(read_u64(in));
  st.w_min = read_f64(in);
  st.use_ema = read_i32(in) != 0;
  st.ema_decay = read_f64(in);
  st.smoothed_losses = read_vec(in);
  return st;
}

inline void write_opt(std::ostream& out, const SgdMomentum& o) {
  write_i32(out, static_cast<std::int32_t>(o.layer_w.size()));
  for (const auto& w : o.layer_w) write_mat(out, w);
  for (const auto& b : o.layer_b) write_vec(out, b);
  write_mat(out, o.head_w);
  write_vec(out, o.head_b);
  write_i32(out, static_cast<std::int32_t>(o.item_factors.size()));
  for (const auto& v : o.item_factors) write_mat(out, v);
}

inline SgdMomentum read_opt(std::istream& in) {
  SgdMomentum o;
  int nl = read_i32(in);
  for (int l = 0; l < nl; ++l) o.layer_w.push_back(read_mat(in));
  for (int l = 0; l < nl; ++l) o.layer_b.push_back(read_vec(in));
  o.head_w = read_mat(in);
  o.head_b = read_vec(in);
  int nk = read_i32(in);
  for (int k = 0; k < nk; ++k) o.item_factors.push_back(read_mat(in));
  return o;
}

}  // namespace detail

// Bit-exact round-trip: all floats are raw little-endian doubles.
inline void save_checkpoint(const std::string& path, const TrainerState& st) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write("ADCK", 4);
  detail::write_i32(out, 1);  // version
  detail::write_net(out, st.net);
  detail::write_balancer(out, st.balancer);
  detail::write_opt(out, st.opt);
  detail::write_i32(out, st.epochs_done);
  detail::write_f64(out, st.best_val);
  detail::write_i32(out, st.best_epoch);
  detail::write_i32(out, st.since_improve);
  detail::write_net(out, st.best_net);
  detail::write_balancer(out, st.best_balancer);
}

inline TrainerState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  detail::read_bytes(in, magic, 4);
  if (std::memcmp(magic, "ADCK", 4) != 0) throw DataError("bad checkpoint magic: " + path);
  int version = detail::read_i32(in);
  if (version != 1) throw DataError("unsupported checkpoint version");
  TrainerState st;
  st.net = detail::read_net(in);
  st.balancer = detail::read_balancer(in);
  st.opt = detail::read_opt(in);
  st.epochs_done = detail::read_i32(in);
  st.best_val = detail::read_f64(in);
  st.best_epoch = detail::read_i32(in);
  st.since_improve = detail::read_i32(in);
  st.best_net = detail::read_net(in);
  st.best_balancer = detail::read_balancer(in);
  return st;
}

}  // namespace adc
