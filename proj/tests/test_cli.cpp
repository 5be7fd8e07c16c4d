#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "adc/cli.hpp"
#include "support/test_util.hpp"

using namespace adc;
using namespace adc::cli;

static PrepOptions synthetic_prep(const std::string& out_dir, std::uint64_t seed = 3) {
  PrepOptions opt;
  opt.synthetic = "2,30,10,1.0,0.2";
  opt.synthetic_density = "0.3,0.3";
  opt.synthetic_latent_dim = 4;
  opt.target = 0;
  opt.seed = seed;
  opt.out_dir = out_dir;
  return opt;
}

static std::vector<std::string> small_overrides() {
  return {"d=4", "h=2", "max_epochs=3", "batch_size=16", "mf_epochs=4",
          "negatives_per_positive=2", "baseline_epochs=3", "patience=10"};
}

TEST_CASE("key=value config files parse with overrides and full error reporting") {
  testutil::TempDir tmp("config");
  testutil::write_file(tmp.file("good.cfg"), "d=8\ngamma=1.5\n# comment\nseed=42\n");
  TrainConfig cfg = apply_config(load_config_file(tmp.file("good.cfg")));
  REQUIRE(cfg.d == 8);
  REQUIRE(cfg.gamma == 1.5);
  REQUIRE(cfg.seed == 42);

  testutil::write_file(tmp.file("bad.cfg"), "d=zero\nlearn_rate=-2\nmystery=1\n");
  try {
    apply_config(load_config_file(tmp.file("bad.cfg")));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    REQUIRE(msg.find("d:") != std::string::npos);
    REQUIRE(msg.find("learn_rate") != std::string::npos);
    REQUIRE(msg.find("mystery") != std::string::npos);
  }
}

TEST_CASE("config snapshots round-trip") {
  TrainConfig cfg;
  cfg.d = 7;
  cfg.gamma = 2.5;
  cfg.freeze_items = true;
  cfg.reg_on = "inputs";
  std::istringstream in(serialize_config(cfg));
  TrainConfig back = apply_config(parse_config_text(in, "snapshot"));
  REQUIRE(back.d == 7);
  REQUIRE(back.gamma == 2.5);
  REQUIRE(back.freeze_items);
  REQUIRE(back.reg_on == "inputs");
}

TEST_CASE("prep generates synthetic domains and a split manifest") {
  testutil::TempDir tmp("prep");
  std::ostringstream log;
  int rc = cmd_prep(synthetic_prep(tmp.file("prep")), log, log);
  REQUIRE(rc == kExitOk);
  REQUIRE(std::filesystem::exists(tmp.file("prep") + "/split.tsv"));
  REQUIRE(std::filesystem::exists(tmp.file("prep") + "/stats.txt"));
  REQUIRE(std::filesystem::exists(tmp.file("prep") + "/data/domain_0.tsv"));
  REQUIRE(log.str().find("Domain") != std::string::npos);
}

TEST_CASE("prep echoes the counts of a tiny file") {
  testutil::TempDir tmp("prep2");
  testutil::write_file(tmp.file("a.tsv"), "u1\ti1\t4\nu1\ti2\t5\nu2\ti1\t3\n");
  std::string big;
  for (int i = 0; i < 12; ++i)
    big += "u" + std::to_string(i % 4) + "\tj" + std::to_string(i) + "\t3\n";
  testutil::write_file(tmp.file("b.tsv"), big);

  PrepOptions opt;
  opt.domain_files = {{"tiny", tmp.file("a.tsv")}, {"other", tmp.file("b.tsv")}};
  opt.target = 1;
  opt.seed = 1;
  opt.out_dir = tmp.file("prep");
  std::ostringstream log;
  REQUIRE(cmd_prep(opt, log, log) == kExitOk);
  REQUIRE(log.str().find("tiny") != std::string::npos);
  REQUIRE(log.str().find(" 2") != std::string::npos);  // 2 users in tiny
}

TEST_CASE("prep with a missing file exits with the data error code") {
  testutil::TempDir tmp("prep3");
  PrepOptions opt;
  opt.domain_files = {{"a", tmp.file("nope.tsv")}, {"b", tmp.file("nope2.tsv")}};
  opt.target = 0;
  opt.out_dir = tmp.file("prep");
  std::ostringstream log;
  REQUIRE(cmd_prep(opt, log, log) == kExitData);
}

TEST_CASE("dry-run validates without writing a run directory") {
  testutil::TempDir tmp("dry");
  std::ostringstream log;
  REQUIRE(cmd_prep(synthetic_prep(tmp.file("prep")), log, log) == kExitOk);
  TrainOptions to;
  to.prep_dir = tmp.file("prep");
  to.overrides = small_overrides();
  to.dry_run = true;
  std::ostringstream tlog;
  REQUIRE(cmd_train(to, tlog, tlog) == kExitOk);
  REQUIRE(tlog.str().find("config ok") != std::string::npos);
  REQUIRE(!std::filesystem::exists(tmp.file("run")));
}

TEST_CASE("invalid overrides exit with the usage code") {
  testutil::TempDir tmp("badcfg");
  std::ostringstream log;
  REQUIRE(cmd_prep(synthetic_prep(tmp.file("prep")), log, log) == kExitOk);
  TrainOptions to;
  to.prep_dir = tmp.file("prep");
  to.overrides = {"d=-3"};
  to.dry_run = true;
  std::ostringstream tlog;
  REQUIRE(cmd_train(to, tlog, tlog) == kExitUsage);
}

TEST_CASE("train then eval produces reports; identical seeds give identical files") {
  testutil::TempDir tmp("run");
  std::ostringstream log;
  REQUIRE(cmd_prep(synthetic_prep(tmp.file("prep")), log, log) == kExitOk);

  TrainOptions to;
  to.prep_dir = tmp.file("prep");
  to.overrides = small_overrides();
  to.out_dir = tmp.file("run_a");
  to.with_baseline = true;
  std::ostringstream alog;
  REQUIRE(cmd_train(to, alog, alog) == kExitOk);
  REQUIRE(std::filesystem::exists(tmp.file("run_a") + "/history.tsv"));
  REQUIRE(std::filesystem::exists(tmp.file("run_a") + "/checkpoint.bin"));
  REQUIRE(std::filesystem::exists(tmp.file("run_a") + "/telemetry.tsv"));
  REQUIRE(std::filesystem::exists(tmp.file("run_a") + "/baseline.bin"));

  to.out_dir = tmp.file("run_b");
  std::ostringstream blog;
  REQUIRE(cmd_train(to, blog, blog) == kExitOk);
  REQUIRE(testutil::read_file(tmp.file("run_a") + "/history.tsv") ==
          testutil::read_file(tmp.file("run_b") + "/history.tsv"));
  REQUIRE(testutil::read_file(tmp.file("run_a") + "/telemetry.tsv") ==
          testutil::read_file(tmp.file("run_b") + "/telemetry.tsv"));

  EvalOptions eo;
  eo.run_dirs = {tmp.file("run_a")};
  eo.cutoffs = {5, 10, 15, 20};
  std::ostringstream elog;
  REQUIRE(cmd_eval(eo, elog, elog) == kExitOk);
  REQUIRE(std::filesystem::exists(tmp.file("run_a") + "/report.tsv"));
  std::string rows = testutil::read_file(tmp.file("run_a") + "/report.tsv");
  for (const char* n : {"\t5\t", "\t10\t", "\t15\t", "\t20\t"})
    REQUIRE(rows.find(std::string("ADC") + n + "recall") != std::string::npos);
  REQUIRE(rows.find("BPR") != std::string::npos);

  eo.run_dirs = {tmp.file("run_b")};
  std::ostringstream elog2;
  REQUIRE(cmd_eval(eo, elog2, elog2) == kExitOk);
  REQUIRE(testutil::read_file(tmp.file("run_a") + "/report.tsv") ==
          testutil::read_file(tmp.file("run_b") + "/report.tsv"));
}

TEST_CASE("cutoff one with the lone relevant item ranked first recalls everything") {
  // degenerate evaluation path through the library used by eval
  RelevanceSet rel;
  rel.domain = 0;
  rel.mean_train[0] = 2.0;
  rel.relevant[0] = {3};
  Scorer scorer = [](int) { return std::vector<double>{0.0, 0.1, 0.2, 9.0}; };
  EvalResult res = evaluate_model(scorer, rel, {1});
  REQUIRE(res.recall.at(1) == 1.0);
}

TEST_CASE("evaluating an untrained checkpoint works and stays in range") {
  testutil::TempDir tmp("raw");
  std::ostringstream log;
  REQUIRE(cmd_prep(synthetic_prep(tmp.file("prep")), log, log) == kExitOk);
  TrainOptions to;
  to.prep_dir = tmp.file("prep");
  auto ov = small_overrides();
  ov.push_back("max_epochs=1");
  ov.push_back("learn_rate=1e-12");  // effectively untrained
  to.overrides = ov;
  to.out_dir = tmp.file("run");
  std::ostringstream tlog;
  REQUIRE(cmd_train(to, tlog, tlog) == kExitOk);
  EvalOptions eo;
  eo.run_dirs = {tmp.file("run")};
  std::ostringstream elog;
  REQUIRE(cmd_eval(eo, elog, elog) == kExitOk);
  RunEval re = evaluate_run_dir(tmp.file("run"), {5, 10});
  for (int n : {5, 10}) {
    REQUIRE(re.adc.metrics.ndcg.at(n) >= 0.0);
    REQUIRE(re.adc.metrics.ndcg.at(n) <= 1.0);
    REQUIRE(re.adc.metrics.recall.at(n) >= 0.0);
    REQUIRE(re.adc.metrics.recall.at(n) <= 1.0);
  }
}

TEST_CASE("resuming from the checkpoint reproduces the uninterrupted run") {
  testutil::TempDir tmp("resume");
  std::ostringstream log;
  REQUIRE(cmd_prep(synthetic_prep(tmp.file("prep")), log, log) == kExitOk);

  auto base = small_overrides();
  // uninterrupted: 6 epochs
  TrainOptions full;
  full.prep_dir = tmp.file("prep");
  full.overrides = base;
  full.overrides.push_back("max_epochs=6");
  full.out_dir = tmp.file("run_full");
  std::ostringstream l1;
  REQUIRE(cmd_train(full, l1, l1) == kExitOk);

  // interrupted at 3, then resumed to 6
  TrainOptions part = full;
  part.overrides = base;
  part.overrides.push_back("max_epochs=3");
  part.out_dir = tmp.file("run_part");
  std::ostringstream l2;
  REQUIRE(cmd_train(part, l2, l2) == kExitOk);
  TrainOptions cont = part;
  cont.overrides = base;
  cont.overrides.push_back("max_epochs=6");
  cont.resume = true;
  std::ostringstream l3;
  REQUIRE(cmd_train(cont, l3, l3) == kExitOk);

  REQUIRE(testutil::read_file(tmp.file("run_full") + "/history.tsv") ==
          testutil::read_file(tmp.file("run_part") + "/history.tsv"));

  EvalOptions eo;
  eo.run_dirs = {tmp.file("run_full")};
  std::ostringstream e1;
  REQUIRE(cmd_eval(eo, e1, e1) == kExitOk);
  eo.run_dirs = {tmp.file("run_part")};
  std::ostringstream e2;
  REQUIRE(cmd_eval(eo, e2, e2) == kExitOk);
  REQUIRE(testutil::read_file(tmp.file("run_full") + "/report.tsv") ==
          testutil::read_file(tmp.file("run_part") + "/report.tsv"));
}

TEST_CASE("gamma zero leaves balanced telemetry weights near one") {
  testutil::TempDir tmp("g0");
  std::ostringstream log;
  REQUIRE(cmd_prep(synthetic_prep(tmp.file("prep")), log, log) == kExitOk);
  TrainOptions to;
  to.prep_dir = tmp.file("prep");
  to.overrides = small_overrides();
  to.overrides.push_back("gamma=0");
  to.out_dir = tmp.file("run");
  std::ostringstream tlog;
  REQUIRE(cmd_train(to, tlog, tlog) == kExitOk);
  std::istringstream telemetry(testutil::read_file(tmp.file("run") + "/telemetry.tsv"));
  std::string line;
  std::getline(telemetry, line);  // header
  int rows = 0;
  while (std::getline(telemetry, line)) {
    std::istringstream ss(line);
    long t;
    double w0, w1;
    ss >> t >> w0 >> w1;
    REQUIRE_THAT(w0 + w1, Catch::Matchers::WithinAbs(2.0, 1e-12));
    ++rows;
  }
  REQUIRE(rows > 0);
}

TEST_CASE("a one-value sweep equals train plus eval") {
  testutil::TempDir tmp("sweep1");
  std::ostringstream log;
  REQUIRE(cmd_prep(synthetic_prep(tmp.file("prep")), log, log) == kExitOk);

  SweepOptions so;
  so.prep_dirs = {tmp.file("prep")};
  so.axis = "gamma";
  so.values = {1.0};
  so.overrides = small_overrides();
  so.out_dir = tmp.file("sweep");
  std::ostringstream slog;
  REQUIRE(cmd_sweep(so, slog, slog) == kExitOk);
  REQUIRE(std::filesystem::exists(tmp.file("sweep") + "/sweep.tsv"));

  // the same configuration trained directly gives the same ndcg@10
  TrainOptions to;
  to.prep_dir = tmp.file("prep");
  to.overrides = small_overrides();
  to.overrides.push_back("gamma=1");
  to.overrides.push_back("seed=1");
  to.out_dir = tmp.file("run");
  std::ostringstream tlog;
  REQUIRE(cmd_train(to, tlog, tlog) == kExitOk);
  RunEval direct = evaluate_run_dir(tmp.file("run"), {10});

  std::string sweep_tsv = testutil::read_file(tmp.file("sweep") + "/sweep.tsv");
  REQUIRE(sweep_tsv.find(fmt_double(direct.adc.metrics.ndcg.at(10))) != std::string::npos);
}

TEST_CASE("sweeps cover every requested axis value") {
  testutil::TempDir tmp("sweep2");
  std::ostringstream log;
  REQUIRE(cmd_prep(synthetic_prep(tmp.file("prep")), log, log) == kExitOk);
  SweepOptions so;
  so.prep_dirs = {tmp.file("prep")};
  so.axis = "h";
  so.values = {1, 2};
  auto ov = small_overrides();
  ov.front() = "d=4";
  so.overrides = ov;
  so.overrides.push_back("max_epochs=2");
  so.out_dir = tmp.file("sweep");
  std::ostringstream slog;
  REQUIRE(cmd_sweep(so, slog, slog) == kExitOk);
  std::string tsv = testutil::read_file(tmp.file("sweep") + "/sweep.tsv");
  REQUIRE(std::count(tsv.begin(), tsv.end(), '\n') == 3);  // header + 2 values
}

TEST_CASE("report verifies digests and flags tampering") {
  testutil::TempDir tmp("report");
  std::ostringstream log;
  REQUIRE(cmd_prep(synthetic_prep(tmp.file("prep")), log, log) == kExitOk);
  TrainOptions to;
  to.prep_dir = tmp.file("prep");
  to.overrides = small_overrides();
  to.out_dir = tmp.file("run");
  std::ostringstream tlog;
  REQUIRE(cmd_train(to, tlog, tlog) == kExitOk);

  ReportOptions ro;
  ro.run_dir = tmp.file("run");
  std::ostringstream rlog;
  REQUIRE(cmd_report(ro, rlog, rlog) == kExitOk);
  REQUIRE(rlog.str().find("manifest ok") != std::string::npos);

  // tamper with the history file
  std::ofstream(tmp.file("run") + "/history.tsv", std::ios::app) << "tampered\n";
  std::ostringstream rlog2;
  REQUIRE(cmd_report(ro, rlog2, rlog2) == kExitData);
}
