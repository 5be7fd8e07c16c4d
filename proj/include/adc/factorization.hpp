#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "adc/common.hpp"
#include "adc/dataset.hpp"
#include "adc/matrix.hpp"

namespace adc {

struct FactorModel {
  Mat U;  // n_users x d
  Mat V;  // n_items x d
  int d = 0;

  double predict(int u, int i) const { return dot(U.row(u), V.row(i), d); }
};

struct FactorizeOptions {
  int d = 16;
  int epochs = 30;
  double learn_rate = 0.01;
  double reg = 1e-4;
  std::uint64_t seed = 1;
};

// Per-entry objective used by SGD: (r - u.v)^2 + reg*(|u|^2 + |v|^2).
// Exposed so the analytic step can be checked against finite differences.
inline double mf_entry_loss(const double* u, const double* v, double r, double reg, int d) {
  double e = r - dot(u, v, d);
  double l = e * e;
  for (int c = 0; c < d; ++c) l += reg * (u[c] * u[c] + v[c] * v[c]);
  return l;
}

inline void mf_entry_grads(const double* u, const double* v, double r, double reg, int d,
                           double* gu, double* gv) {
  double e = r - dot(u, v, d);
  for (int c = 0; c < d; ++c) {
    gu[c] = -2.0 * e * v[c] + 2.0 * reg * u[c];
    gv[c] = -2.0 * e * u[c] + 2.0 * reg * v[c];
  }
}

inline double squared_error(const std::vector<Triple>& triples, const FactorModel& m) {
  double s = 0.0;
  for (const auto& t : triples) {
    double e = t.value - m.predict(t.user, t.item);
    s += e * e;
  }
  return s;
}

// Plain SGD over shuffled observed entries. With reg=0 this minimizes the
// bare reconstruction error sum (r_ui - u.v)^2.
inline FactorModel factorize(const std::vector<Triple>& train_triples, int n_users,
                             int n_items, const FactorizeOptions& opt) {
  if (opt.d < 1) throw ConfigError("factorize: d must be >= 1");
  if (opt.epochs < 1) throw ConfigError("factorize: epochs must be >= 1");
  if (opt.learn_rate <= 0.0) throw ConfigError("factorize: learn_rate must be > 0");

  FactorModel m;
  m.d = opt.d;
  m.U = Mat(n_users, opt.d);
  m.V = Mat(n_items, opt.d);
  Rng init(derive_seed(opt.seed, Stream::MfInit));
  for (auto& x : m.U.a) x = init.uniform(-0.01, 0.01);
  for (auto& x : m.V.a) x = init.uniform(-0.01, 0.01);

  std::vector<std::size_t> order(train_triples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> gu(opt.d), gv(opt.d);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng rng(derive_seed(opt.seed, Stream::MfShuffle, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    for (std::size_t idx : order) {
      const auto& t = train_triples[idx];
      double* u = m.U.row(t.user);
      double* v = m.V.row(t.item);
      mf_entry_grads(u, v, t.value, opt.reg, opt.d, gu.data(), gv.data());
      for (int c = 0; c < opt.d; ++c) {
        u[c] -= opt.learn_rate * gu[c];
        v[c] -= opt.learn_rate * gv[c];
      }
    }
    if (!train_triples.empty()) {
      double sse = squared_error(train_triples, m);
      if (!std::isfinite(sse))
        throw NumericalError("factorize: loss diverged; reduce learn_rate");
    }
  }
  return m;
}

// Mean of the user's vectors from the domains where they are present; used
// to fill the concatenated input slice of every absent domain.
inline std::vector<double> impute_missing_user(int global_user,
                                               const std::vector<FactorModel>& models,
                                               const GlobalUserIndex& gx) {
  const auto& local = gx.local_index[global_user];
  int d = models.empty() ? 0 : models[0].d;
  std::vector<double> mean(d, 0.0);
  int n = 0;
  for (int k = 0; k < static_cast<int>(models.size()); ++k) {
    if (local[k] < 0) continue;
    const double* row = models[k].U.row(local[k]);
    for (int c = 0; c < d; ++c) mean[c] += row[c];
    ++n;
  }
  if (n == 0) throw DataError("impute_missing_user: user present in no domain");
  for (double& x : mean) x /= n;
  return mean;
}

// u_con: domain-order concatenation of the user's real or imputed vectors.
inline std::vector<double> build_concat_input(int global_user,
                                              const std::vector<FactorModel>& models,
                                              const GlobalUserIndex& gx) {
  const int p = static_cast<int>(models.size());
  const int d = p == 0 ? 0 : models[0].d;
  std::vector<double> u_con(static_cast<std::size_t>(p) * d, 0.0);
  std::vector<double> imputed;
  bool have_imputed = false;
  const auto& local = gx.local_index[global_user];
  for (int k = 0; k < p; ++k) {
    double* dst = u_con.data() + static_cast<std::size_t>(k) * d;
    if (local[k] >= 0) {
      std::memcpy(dst, models[k].U.row(local[k]), sizeof(double) * d);
    } else {
      if (!have_imputed) {
        imputed = impute_missing_user(global_user, models, gx);
        have_imputed = true;
      }
      std::memcpy(dst, imputed.data(), sizeof(double) * d);
    }
  }
  return u_con;
}

namespace detail {

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
inline void read_bytes(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw DataError("truncated binary file");
}
inline void write_i32(std::ostream& out, std::int32_t v) { write_bytes(out, &v, 4); }
inline std::int32_t read_i32(std::istream& in) {
  std::int32_t v;
  read_bytes(in, &v, 4);
  return v;
}
inline void write_u64(std::ostream& out, std::uint64_t v) { write_bytes(out, &v, 8); }
inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v;
  read_bytes(in, &v, 8);
  return v;
}
inline void write_f64(std::ostream& out, double v) { write_bytes(out, &v, 8); }
inline double read_f64(std::istream& in) {
  double v;
  read_bytes(in, &v, 8);
  return v;
}
inline void write_mat(std::ostream& out, const Mat& m) {
  write_i32(out, m.rows);
  write_i32(out, m.cols);
  if (!m.a.empty()) write_bytes(out, m.a.data(), m.a.size() * sizeof(double));
}
inline Mat read_mat(std::istream& in) {
  int r = read_i32(in);
  int c = read_i32(in);
  if (r < 0 || c < 0) throw DataError("corrupt matrix header");
  Mat m(r, c);
  if (!m.a.empty()) read_bytes(in, m.a.data(), m.a.size() * sizeof(double));
  return m;
}
inline void write_vec(std::ostream& out, const std::vector<double>& v) {
  write_i32(out, static_cast<std::int32_t>(v.size()));
  if (!v.empty()) write_bytes(out, v.data(), v.size() * sizeof(double));
}
inline std::vector<double> read_vec(std::istream& in) {
  int n = read_i32(in);
  if (n < 0) throw DataError("corrupt vector header");
  std::vector<double> v(static_cast<std::size_t>(n));
  if (n > 0) read_bytes(in, v.data(), v.size() * sizeof(double));
  return v;
}

}  // namespace detail

inline void save_factors(const std::string& path, const FactorModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write factor file: " + path);
  out.write("ADCF", 4);
  detail::write_i32(out, m.d);
  detail::write_mat(out, m.U);
  detail::write_mat(out, m.V);
}

inline FactorModel load_factors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open factor file: " + path);
  char magic[4];
  detail::read_bytes(in, magic, 4);
  if (std::memcmp(magic, "ADCF", 4) != 0) throw DataError("bad factor file magic: " + path);
  FactorModel m;
  m.d = detail::read_i32(in);
  m.U = detail::read_mat(in);
  m.V = detail::read_mat(in);
  if (m.U.cols != m.d || m.V.cols != m.d) throw DataError("factor file shape mismatch");
  return m;
}

}  // namespace adc
