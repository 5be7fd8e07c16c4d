#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "adc/checkpoint.hpp"
#include "adc/config.hpp"
#include "adc/dataset.hpp"
#include "adc/manifest.hpp"
#include "adc/metrics.hpp"
#include "adc/synthetic.hpp"
#include "adc/trainer.hpp"

namespace adc::cli {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

// Relative output paths land under $ADC_RUN_ROOT when it is set.
inline fs::path resolve_out_dir(const std::string& dir) {
  fs::path p(dir);
  if (p.is_absolute()) return p;
  const char* root = std::getenv("ADC_RUN_ROOT");
  if (root && *root) return fs::path(root) / p;
  return p;
}

template <class F>
int guarded(F&& f, std::ostream& err) {
  try {
    f();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

// ---------------------------------------------------------------------------
// prep

struct PrepOptions {
  std::vector<std::pair<std::string, std::string>> domain_files;  // (name, path)
  std::string synthetic;          // "p,users,items,overlap,noise"
  std::string synthetic_items;    // per-domain item counts, comma separated
  std::string synthetic_density;  // per-domain densities, comma separated
  int synthetic_latent_dim = 8;
  int target = 0;
  std::uint64_t seed = 1;
  std::string out_dir;
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  return out;
}

inline SyntheticSpec parse_synthetic(const PrepOptions& opt) {
  auto fields = split_csv(opt.synthetic);
  if (fields.size() != 5)
    throw ConfigError("--synthetic expects p,users,items,overlap,noise");
  SyntheticSpec spec;
  try {
    spec.p = std::stoi(fields[0]);
    spec.users = std::stoi(fields[1]);
    spec.items = std::stoi(fields[2]);
    spec.overlap = std::stod(fields[3]);
    spec.noise = std::stod(fields[4]);
  } catch (const std::exception&) {
    throw ConfigError("--synthetic: could not parse " + opt.synthetic);
  }
  spec.latent_dim = opt.synthetic_latent_dim;
  spec.seed = opt.seed;
  for (const auto& f : split_csv(opt.synthetic_items))
    if (!f.empty()) spec.items_per_domain.push_back(std::stoi(f));
  for (const auto& f : split_csv(opt.synthetic_density))
    if (!f.empty()) spec.density_per_domain.push_back(std::stod(f));
  return spec;
}

inline void write_stats_table(std::ostream& out, const std::vector<DomainDataset>& domains,
                              const std::vector<std::string>& names) {
  out << "Domain            Users     Items   Ratings  Density (%)\n";
  for (std::size_t k = 0; k < domains.size(); ++k) {
    const auto& ds = domains[k];
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-15s %7d  %8d  %8zu  %10.3f\n", names[k].c_str(),
                  ds.n_users, ds.n_items, ds.triples.size(), 100.0 * ds.density());
    out << buf;
  }
}

}  // namespace detail

inline int cmd_prep(const PrepOptions& opt, std::ostream& log, std::ostream& err = std::cerr) {
  return guarded(
      [&] {
        if (opt.out_dir.empty()) throw ConfigError("prep: --out is required");
        fs::path dir = resolve_out_dir(opt.out_dir);
        fs::create_directories(dir / "data");

        std::vector<std::string> names;
        std::vector<fs::path> files;
        if (!opt.synthetic.empty()) {
          SyntheticSpec spec = detail::parse_synthetic(opt);
          auto raw = generate_synthetic(spec);
          for (int k = 0; k < static_cast<int>(raw.size()); ++k) {
            std::string name = "synthetic" + std::to_string(k);
            fs::path file = dir / "data" / ("domain_" + std::to_string(k) + ".tsv");
            write_rating_file(file.string(), raw[k]);
            names.push_back(name);
            files.push_back(file);
          }
        } else {
          if (opt.domain_files.size() < 2)
            throw ConfigError("prep: need at least 2 --domain files (or --synthetic)");
          for (int k = 0; k < static_cast<int>(opt.domain_files.size()); ++k) {
            const auto& [name, src] = opt.domain_files[k];
            if (!fs::exists(src)) throw DataError("prep: no such file: " + src);
            fs::path dst = dir / "data" / ("domain_" + std::to_string(k) + ".tsv");
            fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
            names.push_back(name);
            files.push_back(dst);
          }
        }

        std::vector<DomainDataset> domains;
        for (int k = 0; k < static_cast<int>(files.size()); ++k)
          domains.push_back(load_domain(files[k].string(), k));
        if (opt.target < 0 || opt.target >= static_cast<int>(domains.size()))
          throw ConfigError("prep: target out of range");

        detail::write_stats_table(log, domains, names);
        {
          std::ofstream stats(dir / "stats.txt");
          detail::write_stats_table(stats, domains, names);
        }
        {
          std::ofstream dl(dir / "domains.tsv");
          for (std::size_t k = 0; k < names.size(); ++k)
            dl << k << '\t' << names[k] << '\t' << "data/domain_" << k << ".tsv" << '\n';
        }

        SplitAssignment sp = split(domains, opt.target, opt.seed);
        save_split_manifest((dir / "split.tsv").string(), domains, sp);

        RunManifest manifest;
        manifest.set("kind", "prep");
        manifest.set("target", std::to_string(opt.target));
        manifest.set("seed", std::to_string(opt.seed));
        manifest.set("created", timestamp_utc());
        for (const auto& f : files) manifest.add_digest(f.string());
        manifest.add_digest((dir / "split.tsv").string());
        manifest.save((dir / "manifest.txt").string());

        log << "prep written to " << dir.string() << '\n';
      },
      err);
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string prep_dir;
  std::string config_file;
  std::vector<std::string> overrides;  // key=value
  std::string out_dir;
  bool with_baseline = false;
  bool dry_run = false;
  bool resume = false;
};

struct LoadedPrep {
  ProblemData problem;
  std::vector<std::string> names;
  fs::path dir;
};

inline LoadedPrep load_prep(const std::string& prep_dir) {
  LoadedPrep lp;
  lp.dir = resolve_out_dir(prep_dir);
  std::ifstream dl(lp.dir / "domains.tsv");
  if (!dl) throw DataError("not a prep directory (missing domains.tsv): " + lp.dir.string());
  std::vector<DomainDataset> domains;
  std::string line;
  while (std::getline(dl, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    int id;
    std::string name, rel;
    if (!(ss >> id >> name >> rel)) throw DataError("malformed domains.tsv row: " + line);
    domains.push_back(load_domain((lp.dir / rel).string(), id));
    lp.names.push_back(name);
  }
  SplitAssignment sp = load_split_manifest((lp.dir / "split.tsv").string(), domains);
  lp.problem = build_problem(std::move(domains), std::move(sp));
  return lp;
}

inline TrainConfig resolve_config(const TrainOptions& opt) {
  TrainConfig cfg;
  if (!opt.config_file.empty()) cfg = apply_config(load_config_file(opt.config_file));
  if (!opt.overrides.empty()) {
    std::map<std::string, std::string> kv;
    for (const auto& ov : opt.overrides) {
      auto eq = ov.find('=');
      if (eq == std::string::npos)
        throw ConfigError("override must be key=value: " + ov);
      kv[ov.substr(0, eq)] = ov.substr(eq + 1);
    }
    cfg = apply_config(kv, cfg);
  }
  auto errs = validate_config(cfg);
  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

inline int cmd_train(const TrainOptions& opt, std::ostream& log, std::ostream& err = std::cerr) {
  return guarded(
      [&] {
        if (opt.prep_dir.empty()) throw ConfigError("train: --prep is required");
        TrainConfig cfg = resolve_config(opt);
        LoadedPrep lp = load_prep(opt.prep_dir);
        const ProblemData& pd = lp.problem;

        if (opt.dry_run) {
          log << "config ok; " << pd.p() << " domains, target " << pd.target() << ", "
              << pd.gindex.n_users() << " global users, "
              << pd.val_relevance.evaluable_users().size() << " validation users, "
              << pd.test_relevance.evaluable_users().size() << " test users\n";
          return;
        }
        if (opt.out_dir.empty()) throw ConfigError("train: --out is required");
        fs::path dir = resolve_out_dir(opt.out_dir);
        fs::create_directories(dir);

        {
          std::ofstream cf(dir / "config.txt");
          cf << serialize_config(cfg);
        }

        std::vector<FactorModel> factors;
        if (opt.resume) {
          for (int k = 0; k < pd.p(); ++k)
            factors.push_back(
                load_factors((dir / ("factors_" + std::to_string(k) + ".bin")).string()));
        } else {
          factors = factorize_all(pd, cfg);
          for (int k = 0; k < pd.p(); ++k)
            save_factors((dir / ("factors_" + std::to_string(k) + ".bin")).string(),
                         factors[k]);
        }

        TrainerState resume_state;
        TrainHistory prior;
        bool resuming = false;
        if (opt.resume) {
          resume_state = load_checkpoint((dir / "checkpoint.bin").string());
          std::ifstream hf(dir / "history.tsv");
          if (hf) prior = read_history(hf);
          while (!prior.rows.empty() && prior.rows.back().epoch >= resume_state.epochs_done)
            prior.rows.pop_back();
          resuming = true;
          log << "resuming from epoch " << resume_state.epochs_done << '\n';
        }

        std::ofstream telemetry(dir / "telemetry.tsv",
                                resuming ? std::ios::app : std::ios::out);
        if (!resuming) write_telemetry_header(telemetry, pd.p());

        std::ofstream hist_out(dir / "history.tsv");
        write_history_header(hist_out, pd.p());
        for (const auto& r : prior.rows) write_history_row(hist_out, r);
        hist_out.flush();

        auto on_epoch = [&](const EpochRow& row, const TrainerState& st) {
          write_history_row(hist_out, row);
          hist_out.flush();
          save_checkpoint((dir / "checkpoint.bin").string(), st);
        };

        TrainResult res = train(cfg, pd, factors, &telemetry,
                                resuming ? &resume_state : nullptr, on_epoch);
        log << "trained " << res.last.epochs_done << " epochs; best val NDCG@10 "
            << fmt_double(res.best_val) << " at epoch " << res.best_epoch << '\n';
        if (res.sampler_warnings > 0)
          log << "sampler warnings (user with all items observed): " << res.sampler_warnings
              << '\n';

        if (opt.with_baseline) {
          FactorModel base = train_bpr_baseline(cfg, pd.domains[pd.target()], pd.split);
          save_factors((dir / "baseline.bin").string(), base);
          log << "baseline BPR model written\n";
        }

        RunManifest manifest;
        manifest.set("kind", "run");
        manifest.set("prep", lp.dir.string());
        manifest.set("seed", std::to_string(cfg.seed));
        manifest.set("split_seed", std::to_string(pd.split.seed));
        manifest.set("target", std::to_string(pd.target()));
        manifest.set("best_epoch", std::to_string(res.best_epoch));
        manifest.set("created", timestamp_utc());
        manifest.add_digest((lp.dir / "split.tsv").string());
        manifest.add_digest((dir / "config.txt").string());
        manifest.add_digest((dir / "history.tsv").string());
        manifest.save((dir / "manifest.txt").string());
      },
      err);
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::vector<std::string> run_dirs;
  std::vector<int> cutoffs = {5, 10, 15, 20};
  std::string out_dir;  // default: first run dir
};

struct RunEval {
  RunRecord adc;
  RunRecord baseline;
  bool has_baseline = false;
};

inline RunEval evaluate_run_dir(const std::string& run_dir, const std::vector<int>& cutoffs) {
  fs::path dir = resolve_out_dir(run_dir);
  RunManifest manifest = RunManifest::load((dir / "manifest.txt").string());
  auto prep_it = manifest.fields.find("prep");
  if (prep_it == manifest.fields.end()) throw DataError("run manifest has no prep field");
  LoadedPrep lp = load_prep(prep_it->second);
  const ProblemData& pd = lp.problem;

  TrainerState st = load_checkpoint((dir / "checkpoint.bin").string());
  std::vector<FactorModel> factors;
  for (int k = 0; k < pd.p(); ++k)
    factors.push_back(load_factors((dir / ("factors_" + std::to_string(k) + ".bin")).string()));
  Mat all_inputs = build_all_inputs(pd, factors);

  RunEval out;
  AdcScorer scorer(st.best_net, all_inputs, pd.gindex, pd.domains[pd.target()]);
  out.adc.metrics = evaluate_model(scorer, pd.test_relevance, cutoffs);
  out.adc.split_seed = pd.split.seed;
  {
    auto it = manifest.fields.find("seed");
    if (it != manifest.fields.end()) out.adc.train_seed = std::stoull(it->second);
  }
  if (fs::exists(dir / "baseline.bin")) {
    FactorModel base = load_factors((dir / "baseline.bin").string());
    BprScorer bscorer(base);
    out.baseline.metrics = evaluate_model(bscorer, pd.test_relevance, cutoffs);
    out.baseline.split_seed = out.adc.split_seed;
    out.baseline.train_seed = out.adc.train_seed;
    out.has_baseline = true;
  }
  return out;
}

inline int cmd_eval(const EvalOptions& opt, std::ostream& log, std::ostream& err = std::cerr) {
  return guarded(
      [&] {
        if (opt.run_dirs.empty()) throw ConfigError("eval: at least one --run is required");
        std::vector<RunRecord> adc_runs, base_runs;
        bool all_baseline = true;
        for (const auto& rd : opt.run_dirs) {
          RunEval re = evaluate_run_dir(rd, opt.cutoffs);
          adc_runs.push_back(re.adc);
          if (re.has_baseline) base_runs.push_back(re.baseline);
          else all_baseline = false;
        }
        RankingReport adc_rep = aggregate_runs(adc_runs);
        write_report_table(log, "ADC", adc_rep);
        RankingReport base_rep;
        bool have_base = all_baseline && !base_runs.empty();
        if (have_base) {
          base_rep = aggregate_runs(base_runs);
          write_report_table(log, "BPR", base_rep);
        }

        fs::path out_dir =
            resolve_out_dir(opt.out_dir.empty() ? opt.run_dirs.front() : opt.out_dir);
        {
          std::ofstream t(out_dir / "report.txt");
          write_report_table(t, "ADC", adc_rep);
          if (have_base) write_report_table(t, "BPR", base_rep);
        }
        {
          std::ofstream r(out_dir / "report.tsv");
          r << "model\tcutoff\tmetric\tvalue\tstderr\n";
          write_report_rows(r, "ADC", adc_rep);
          if (have_base) write_report_rows(r, "BPR", base_rep);
        }
      },
      err);
}

// ---------------------------------------------------------------------------
// sweep

struct SweepOptions {
  std::vector<std::string> prep_dirs;
  std::string axis;  // "h" | "gamma"
  std::vector<double> values;
  std::string config_file;
  std::vector<std::string> overrides;
  std::string out_dir;
  int repeats = 1;
  int parallel = 1;
};

inline int cmd_sweep(const SweepOptions& opt, std::ostream& log, std::ostream& err = std::cerr) {
  return guarded(
      [&] {
        if (opt.prep_dirs.empty()) throw ConfigError("sweep: --prep is required");
        if (opt.axis != "h" && opt.axis != "gamma")
          throw ConfigError("sweep: --axis must be h or gamma");
        if (opt.values.empty()) throw ConfigError("sweep: --values is required");
        if (opt.out_dir.empty()) throw ConfigError("sweep: --out is required");
        if (opt.repeats < 1) throw ConfigError("sweep: --repeats must be >= 1");
        fs::path dir = resolve_out_dir(opt.out_dir);
        fs::create_directories(dir);

        struct Job {
          double value;
          std::string prep;
          int repeat;
          std::string run_dir;
        };
        std::vector<Job> jobs;
        for (double v : opt.values) {
          std::string vname = opt.axis + "_" + fmt_double(v);
          for (std::size_t pi = 0; pi < opt.prep_dirs.size(); ++pi)
            for (int r = 0; r < opt.repeats; ++r)
              jobs.push_back({v, opt.prep_dirs[pi],
                              static_cast<int>(pi) * opt.repeats + r,
                              (dir / (vname + "_run" + std::to_string(pi) + "_" +
                                      std::to_string(r))).string()});
        }

        std::mutex mu;
        std::vector<std::string> failures;
        auto run_job = [&](const Job& job) {
          TrainOptions to;
          to.prep_dir = job.prep;
          to.config_file = opt.config_file;
          to.overrides = opt.overrides;
          TrainConfig base = resolve_config(to);
          if (opt.axis == "gamma")
            to.overrides.push_back("gamma=" + fmt_double(job.value));
          else
            to.overrides.push_back("h=" + std::to_string(static_cast<int>(job.value)));
          to.overrides.push_back("seed=" +
                                 std::to_string(base.seed + static_cast<unsigned>(job.repeat)));
          to.out_dir = job.run_dir;
          std::ostringstream sublog;
          int rc = cmd_train(to, sublog, sublog);
          if (rc != kExitOk) {
            std::lock_guard<std::mutex> lk(mu);
            failures.push_back(job.run_dir + ": " + sublog.str());
          }
        };

        if (opt.parallel <= 1) {
          for (const auto& job : jobs) run_job(job);
        } else {
          std::size_t next = 0;
          std::mutex qmu;
          auto worker = [&] {
            for (;;) {
              std::size_t idx;
              {
                std::lock_guard<std::mutex> lk(qmu);
                if (next >= jobs.size()) return;
                idx = next++;
              }
              run_job(jobs[idx]);
            }
          };
          std::vector<std::thread> pool;
          for (int t = 0; t < opt.parallel; ++t) pool.emplace_back(worker);
          for (auto& t : pool) t.join();
        }
        if (!failures.empty()) {
          std::string msg = "sweep runs failed:";
          for (const auto& f : failures) msg += "\n" + f;
          throw NumericalError(msg);
        }

        // one NDCG@10 (and recall@10) column per value, averaged over runs
        std::ofstream tsv(dir / "sweep.tsv");
        tsv << opt.axis << "\tndcg10\tndcg10_stderr\trecall10\tn_runs\n";
        log << opt.axis << "      ndcg@10    recall@10\n";
        for (double v : opt.values) {
          std::string vname = opt.axis + "_" + fmt_double(v);
          std::vector<RunRecord> runs;
          for (std::size_t pi = 0; pi < opt.prep_dirs.size(); ++pi)
            for (int r = 0; r < opt.repeats; ++r) {
              RunEval re = evaluate_run_dir(
                  (dir / (vname + "_run" + std::to_string(pi) + "_" + std::to_string(r)))
                      .string(),
                  {10});
              runs.push_back(re.adc);
            }
          RankingReport rep = aggregate_runs(runs);
          tsv << fmt_double(v) << '\t' << fmt_double(rep.ndcg.at(10)) << '\t'
              << fmt_double(rep.ndcg_stderr.at(10)) << '\t' << fmt_double(rep.recall.at(10))
              << '\t' << runs.size() << '\n';
          char buf[96];
          std::snprintf(buf, sizeof(buf), "%-8s %9.4f   %9.4f\n", fmt_double(v).c_str(),
                        rep.ndcg.at(10), rep.recall.at(10));
          log << buf;
        }
      },
      err);
}

// ---------------------------------------------------------------------------
// report

struct ReportOptions {
  std::string run_dir;
};

inline int cmd_report(const ReportOptions& opt, std::ostream& log,
                      std::ostream& err = std::cerr) {
  return guarded(
      [&] {
        fs::path dir = resolve_out_dir(opt.run_dir);
        RunManifest manifest = RunManifest::load((dir / "manifest.txt").string());
        manifest.verify();
        log << "manifest ok (" << manifest.digests.size() << " digests verified)\n";
        for (const auto& [k, v] : manifest.fields) log << "  " << k << " = " << v << '\n';
        std::ifstream rep(dir / "report.txt");
        if (rep) log << rep.rdbuf();
        else log << "no report yet; run `adc eval --run " << opt.run_dir << "`\n";
      },
      err);
}

}  // namespace adc::cli
