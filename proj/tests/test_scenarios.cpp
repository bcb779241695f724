#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "thz/scenarios.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace thz;
namespace fs = std::filesystem;

namespace {

Scenario parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in, "test.cfg");
}

std::size_t col(const Table& t, const std::string& name) {
  for (std::size_t i = 0; i < t.columns.size(); ++i)
    if (t.columns[i] == name) return i;
  FAIL("no column " << name);
  return 0;
}

std::string note(const Table& t, const std::string& key) {
  for (const auto& [k, v] : t.notes)
    if (k == key) return v;
  FAIL("no note " << key);
  return "";
}

Real column_max(const Table& t, const std::string& name) {
  const std::size_t c = col(t, name);
  Real m = -1;
  for (const auto& r : t.rows) m = std::max(m, r[c]);
  return m;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("thz_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_cli(const std::string& args, const fs::path& out_file) {
  const std::string cmd = std::string(DTS_PATH) + " " + args + " > " + out_file.string() + " 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("preset file gives the preset verbatim") {
  const Scenario s = parse("preset = \"L3\"\n");
  CHECK(canonical_config(s) == canonical_config(preset("L3")));
  CHECK(s.rates.chi == 12.5);
  CHECK(s.rates.kappa == 0.974);
  CHECK(s.rates.omega_c == 5116.9);
}

TEST_CASE("overrides merge onto the preset") {
  const Scenario s = parse("# comment\npreset = L1\ngamma_GHz = 0.05   # trailing\ntemperature_K = 4\nseed = 12\n");
  CHECK(s.rates.gamma == 0.05);
  CHECK(s.rates.chi == 4.0);
  CHECK(s.temperature == 4.0);
  REQUIRE(s.seed);
  CHECK(*s.seed == 12);
  CHECK(s.model_options().thermal);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse("preset = L1\nkappa_GHz = -1\n"), UnitViolation);
  CHECK_THROWS_AS(parse("preset = L1\nkappa = 3\n"), UnitViolation);
  CHECK_THROWS_AS(parse("preset = L1\ntau_K = 3\n"), UnitViolation);
  CHECK_THROWS_AS(parse("preset = L1\nbogus = 3\n"), UnknownKey);
  CHECK_THROWS_AS(parse("preset = L7\n"), UnknownKey);
  CHECK_THROWS_AS(parse("pulse = exp_rise_fall\n"), UnitViolation);
  try {
    parse("preset = L1\n\nchi_GHz = 4\nthis line has no equals\n");
    FAIL("no throw");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("test.cfg:4") != std::string::npos);
  }
  try {
    parse("chi_GHz = 4\npreset = L1\n");
    FAIL("no throw");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse("preset = L1\nchi_GHz = four\n"), ParseError);
  CHECK_THROWS_AS(parse("preset = L1\nflavor = exotic\n"), ParseError);
  CHECK_THROWS_AS(parse("name = \"unbalanced\n"), ParseError);
}

TEST_CASE("canonical text round trips") {
  for (const auto& name : preset_names()) {
    const Scenario s = preset(name);
    const std::string text = canonical_config(s);
    CHECK(canonical_config(parse(text)) == text);
    CHECK(config_hash(parse(text)) == config_hash(s));
  }
  Scenario c = parse(
      "preset = L3\nname = \"custom run\"\nflavor = jc\ndelta_GHz = 5000\ntau_ns = 0.9\npulse = exp_rise_fall\n"
      "tau_p_ns = 0.1\ninitial_state = bare_ground\nherald_rotation = false\nseed = 99\nn_max = 4\n");
  const std::string text = canonical_config(c);
  CHECK(canonical_config(parse(text)) == text);
  CHECK(config_hash(c) != config_hash(preset("L3")));
  CHECK(config_hash(c).size() == 16);
}

TEST_CASE("preset self-consistency") {
  const DressedParams l1 = derive_dressed(preset("L1").params());
  const DressedParams l3 = derive_dressed(preset("L3").params());
  CHECK(std::abs(l1.cooperativity_eff - 1.94) <= 0.01);
  CHECK(std::abs(l3.cooperativity_eff - 24.65) <= 0.05);
  CHECK(std::abs(l1.h - 0.0325) <= 1e-4);
  CHECK(std::abs(l3.h - 0.01955) <= 1e-4);
  CHECK(preset("L1").protocol.theta_init == doctest::Approx(l1.theta));
}

TEST_CASE("number formatting keeps 17 significant digits") {
  CHECK(format_real(0.1) == "0.10000000000000001");
  CHECK(format_real(1.0) == "1");
  CHECK(std::stod(format_real(M_PI)) == M_PI);
  CHECK(format_real(std::nan("")) == "nan");
}

TEST_CASE("csv and json writers") {
  Table t;
  t.columns = {"x", "y"};
  t.rows = {{1.0, 0.5}, {2.0, std::nan("")}};
  t.error_column = true;
  t.errors = {"", "bad, \"point\""};
  const std::string csv = table_csv(t);
  CHECK(csv == "x,y,error\n1,0.5,\n2,nan,\"bad, \"\"point\"\"\"\n");
  CHECK(csv.find('\r') == std::string::npos);

  RunMeta meta;
  meta.command = "sweep";
  meta.config_hash = "0123456789abcdef";
  meta.seed = 7;
  const std::string js = table_json(t, meta);
  CHECK(js == table_json(t, meta));
  CHECK(js.find("\"version\": \"" + std::string(kVersion) + "\"") != std::string::npos);
  CHECK(js.find("\"config_hash\": \"0123456789abcdef\"") != std::string::npos);
  CHECK(js.find("\"seed\": 7") != std::string::npos);
  CHECK(js.find("null") != std::string::npos);
}

TEST_CASE("atomic file writes") {
  const fs::path d = scratch_dir("atomic");
  write_file_atomic((d / "a.csv").string(), "one\n");
  write_file_atomic((d / "a.csv").string(), "two\n");
  CHECK(slurp(d / "a.csv") == "two\n");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(d)) files += e.is_regular_file();
  CHECK(files == 1);
  write_file_atomic((d / "sub" / "b.csv").string(), "x");
  CHECK(slurp(d / "sub" / "b.csv") == "x");
  CHECK(!fs::exists(d / "sub" / "b.csv.tmp"));
  fs::remove_all(d);
}

TEST_CASE("tau sweep on L1 rises and falls once") {
  SweepSpec spec;
  spec.axis = SweepAxis::Tau;
  spec.grid = linspace(0.05, 15.0, 200);
  spec.outputs = {"P0", "P1", "P_gt1"};
  const SweepResult r = sweep(preset("L1"), spec);
  REQUIRE(r.failures == 0);
  const std::size_t c = col(r.table, "P1");
  int turns = 0;
  std::size_t peak = 0;
  for (std::size_t i = 1; i + 1 < r.table.rows.size(); ++i) {
    const Real a = r.table.rows[i - 1][c], b = r.table.rows[i][c], n = r.table.rows[i + 1][c];
    if (b > a && b >= n) {
      ++turns;
      peak = i;
    }
  }
  CHECK(turns == 1);
  CHECK((peak > 0 && peak + 1 < r.table.rows.size()));
  for (const auto& row : r.table.rows) CHECK(std::abs(row[1] + row[2] + row[3] - 1.0) <= 1e-6);
}

TEST_CASE("sweep cache and worker count do not change results") {
  SweepSpec spec;
  spec.axis = SweepAxis::Tau;
  spec.grid = linspace(0.2, 3.0, 12);
  spec.outputs = {"P0", "P1", "P2", "E", "E_tilde"};
  const Scenario s = preset("L3");
  spec.cache = true;
  const SweepResult cached = sweep(s, spec);
  spec.cache = false;
  const SweepResult fresh = sweep(s, spec);
  spec.cache = true;
  spec.workers = 3;
  const SweepResult parallel = sweep(s, spec);
  for (std::size_t i = 0; i < cached.table.rows.size(); ++i)
    for (std::size_t k = 0; k < cached.table.rows[i].size(); ++k)
      CHECK(std::abs(cached.table.rows[i][k] - fresh.table.rows[i][k]) <= 1e-12);
  CHECK(table_csv(cached.table) == table_csv(parallel.table));
  CHECK(table_csv(cached.table) == table_csv(sweep(s, spec).table));
}

TEST_CASE("failed sweep points land in the error column") {
  SweepSpec spec;
  spec.axis = SweepAxis::H;
  spec.grid = {0.01, 0.02, 1.5};
  spec.outputs = {"P_max"};
  Scenario s = preset("L1");
  s.n_max = 3;
  const SweepResult r = sweep(s, spec);
  CHECK(r.failures == 1);
  CHECK(r.table.errors[0].empty());
  CHECK(!r.table.errors[2].empty());
  CHECK(std::isnan(r.table.rows[2][1]));
  CHECK(std::isfinite(r.table.rows[1][1]));

  spec.grid = {0.02, 0.01};
  CHECK_THROWS_AS(sweep(s, spec), ConfigError);
  spec.grid = {0.01};
  CHECK_THROWS_AS(sweep(s, spec), ConfigError);
  spec.grid = {0.01, 0.02};
  spec.outputs = {"nonsense"};
  CHECK_THROWS_AS(sweep(s, spec), ConfigError);
}

TEST_CASE("low temperatures leave P_max alone") {
  SweepSpec spec;
  spec.axis = SweepAxis::T;
  spec.grid = {1.0, 10.0, 20.0, 25.0, 28.0, 29.0, 29.9};
  spec.outputs = {"P_max"};
  const SweepResult r = sweep(preset("L3"), spec);
  REQUIRE(r.failures == 0);
  const Real ref = r.table.rows.front()[1];
  for (const auto& row : r.table.rows) {
    INFO("T = " << row[0] << " K, P_max " << row[1]);
    CHECK(std::abs(row[1] - ref) <= 1e-3);
  }
}

TEST_CASE("figure 2 maxima and runtime") {
  const auto t0 = std::chrono::steady_clock::now();
  const Table a = reproduce("fig2a");
  const Real secs = std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
  CHECK(a.rows.size() == 200);
  CHECK(secs <= 60.0);
  CHECK(a.columns == std::vector<std::string>{"tau_ns", "P1_numeric", "P1_analytic", "E_herald", "E_tilde_herald"});
  CHECK(std::abs(column_max(a, "P1_numeric") - 0.67) <= 0.02);
  CHECK(std::abs(std::stod(note(a, "P_max")) - 0.67) <= 0.02);

  const Table b = reproduce("fig2b");
  CHECK(std::abs(column_max(b, "P1_numeric") - 0.90) <= 0.02);
  CHECK(std::abs(std::stod(note(b, "P_max")) - 0.90) <= 0.02);
}

TEST_CASE("dephasing hurts indistinguishability first") {
  const Table t = reproduce("s_dephasing");
  const Real l_i = std::stod(note(t, "Lambda50_I_GHz"));
  const Real l_p = std::stod(note(t, "Lambda50_P_max_GHz"));
  MESSAGE("Lambda50 I " << l_i << " GHz, P_max " << l_p << " GHz");
  CHECK(l_i < l_p);
  const Real c1 = t.rows[0][col(t, "Lambda_crit1_GHz")];
  const Real c2 = t.rows[0][col(t, "Lambda_crit2_GHz")];
  CHECK((c1 >= 0.1 && c1 <= 0.4));
  CHECK((c2 >= 0.002 && c2 <= 0.008));
}

TEST_CASE("initial state choice matters only through the |-> weight") {
  const Table t = reproduce("s_initialstate");
  const std::size_t ch = col(t, "h"), cp = col(t, "P_max_dressed_plus"), cd = col(t, "abs_diff");
  for (const auto& row : t.rows) {
    const Real h = row[ch];
    const Real s2 = h * h / (1 + h * h);  // sin^2 theta
    // population starting in |-> cannot emit, so the loss is at most s^2 P_max
    CHECK(row[cd] <= s2 * row[cp] + 1e-9);
    if (h < 0.1) CHECK(row[cd] / row[cp] < 1e-2);
    if (h <= 0.04) CHECK(row[cd] < 1e-3);
  }
}

TEST_CASE("near-resonant formula tracks the full model") {
  const Table t = reproduce("s1");
  const std::size_t ct = col(t, "tau_ns"), cf = col(t, "P1_full_ghz"), ca = col(t, "P1_analytic_ghz");
  Real worst = 0;
  for (const auto& row : t.rows)
    if (row[ct] > 0.5) worst = std::max(worst, std::abs(row[cf] - row[ca]));
  MESSAGE("max |full - formula| for tau > 0.5 ns: " << worst);
  CHECK(worst <= 0.05);
}

TEST_CASE("P0 / P1 / P>1 split closes") {
  const Table t = reproduce("s_p0split", {.points = 13});
  for (const auto& row : t.rows) {
    CHECK(std::abs(row[col(t, "P0")] + row[col(t, "P1")] + row[col(t, "P_gt1")] - 1.0) <= 1e-6);
    CHECK(row[col(t, "P2")] <= row[col(t, "P_gt1")] + 1e-9);
  }
  // large C_tilde follows the asymptotes
  const auto& last = t.rows.back();
  CHECK(std::abs(last[col(t, "P0")] - last[col(t, "P0_asymptotic")]) < 0.01);
}

TEST_CASE("randomized figures need a seed and are reproducible") {
  CHECK_THROWS_AS(reproduce("s2"), ConfigError);
  ReproduceOptions o;
  o.seed = 3;
  o.n_traj = 200;
  o.points = 4;
  const Table a = reproduce("s2", o);
  const Table b = reproduce("s2", o);
  CHECK(table_csv(a) == table_csv(b));
  o.workers = 2;
  CHECK(table_csv(reproduce("s2", o)) == table_csv(a));
  CHECK_THROWS_AS(reproduce("nope"), ConfigError);
}

TEST_CASE("command line") {
  const fs::path d = scratch_dir("cli");
  const fs::path log = d / "log.txt";

  CHECK(run_cli("--version", log) == 0);
  CHECK(slurp(log).find(kVersion) != std::string::npos);

  CHECK(run_cli("analytic --preset L1", log) == 0);
  CHECK(slurp(log).find("\"C_tilde\"") != std::string::npos);

  // byte-identical outputs for identical inputs
  CHECK(run_cli("simulate --preset L3 --nmax 3 --points 20 --out " + (d / "a").string(), log) == 0);
  CHECK(run_cli("simulate --preset L3 --nmax 3 --points 20 --out " + (d / "b").string(), log) == 0);
  CHECK(slurp(d / "a" / "stats.json") == slurp(d / "b" / "stats.json"));
  CHECK(slurp(d / "a" / "p1.csv") == slurp(d / "b" / "p1.csv"));

  CHECK(run_cli("traj --preset L3 --n-traj 200 --seed 5 --tau 0.9 --dump " + (d / "j1.csv").string(), log) == 0);
  const std::string first = slurp(log);
  CHECK(run_cli("traj --preset L3 --n-traj 200 --seed 5 --tau 0.9 --workers 2 --dump " + (d / "j2.csv").string(), log) ==
        0);
  CHECK(slurp(log) == first);
  CHECK(slurp(d / "j1.csv") == slurp(d / "j2.csv"));
  CHECK(slurp(d / "j1.csv").rfind("seed,index,jump_time_ns,channel\n", 0) == 0);

  // exit codes
  std::ofstream(d / "bad.cfg") << "preset = L1\nkappa_GHz = -1\n";
  CHECK(run_cli("simulate --config " + (d / "bad.cfg").string(), log) == 2);
  CHECK(run_cli("traj --preset L3 --n-traj 200", log) == 2);  // no seed
  CHECK(run_cli("frobnicate", log) == 2);
  CHECK(run_cli("traj --preset L3 --n-traj 200 --seed 1 --pulse exp_rise_fall --tau-p 1e-11 --tau 1", log) == 3);
  CHECK(run_cli("sweep --preset L1 --nmax 3 --axis h --values 0.01,0.02,1.5 --outputs P_max", log) == 4);

  fs::remove_all(d);
}
