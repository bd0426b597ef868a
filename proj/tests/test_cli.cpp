#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mmtomo/cli.hpp"
#include "support.hpp"

using namespace mmtomo;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = MMTOMO_SOURCE_DIR "/configs";

// parse -> serialize -> parse must be the identity; compared on the bytes
// of the second serialization.
template <typename T>
void check_round_trip(const T& value) {
  const Json first = value;
  const T parsed = first.get<T>();
  const Json second = parsed;
  CHECK(io::dump(first) == io::dump(second));
  const T reparsed = Json::parse(io::dump(second)).get<T>();
  CHECK(io::dump(Json(reparsed)) == io::dump(second));
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mmtomo_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int run(const std::string& cmd, const std::string& config, const fs::path& out,
        std::optional<std::uint64_t> seed = std::nullopt, OutputFormat format = OutputFormat::Both) {
  std::ostringstream log, err;
  RunOptions o;
  o.config_path = config;
  o.out_dir = out.string();
  o.seed = seed;
  o.format = format;
  const int code = run_command(cmd, o, log, err);
  if (code != 0) MESSAGE(err.str());
  return code;
}

std::string write_config(const fs::path& dir, const Json& j) {
  const fs::path p = dir / "config.json";
  io::write_text_file(p.string(), io::dump(j));
  return p.string();
}

const RabiCalibration kReadout = RabiCalibration::diagonal({2.0 * kPi * 10e3, 2.0 * kPi * 13.7e3});

}  // namespace

TEST_CASE("schema round trips for every artifact type") {
  std::mt19937_64 rng(5);
  check_round_trip(HilbertConfig::uniform(2, 3, 1, 8));
  RabiCalibration cal = RabiCalibration::uniform(2, 3, 1.25, 7.5);
  cal.spin_phase_offset = 0.3;
  check_round_trip(cal);

  PulseSequence seq;
  seq.config = HilbertConfig::uniform(2, 3, 1);
  seq.ops = {Carrier{0.5, 0.1, 0}, BlueSideband{1, 1.0, -0.2, 0}, RedSideband{0, 2.0, 0.3, 0},
             SpinDepDisplace{1, Complex(0.2, -0.4), 0.7, 0}};
  check_round_trip(seq);
  for (const NamedState& s : std::vector<NamedState>{Bell00_11{0.4}, Bell01_10{-1.0},
                                                     CoherentProduct{{Complex(0.1, 0.2)}}, WState{0.1, 0.2, 0.3}})
    check_round_trip(s);

  SampleOptions so;
  so.seed = 11;
  const TimeScanData scan = sample_scan(analytic_named_state(Bell00_11{0.0}), kReadout,
                                        default_time_grid({kReadout.sideband(0, 0), kReadout.sideband(1, 1)}, 20), so);
  check_round_trip(scan);

  const FockDistribution fit = fit_fock_distribution(scan, 1);
  check_round_trip(fit);
  const FockDistribution restricted = fit_fock_distribution_restricted(scan, {{0, 0}, {1, 1}});
  check_round_trip(restricted);

  const DensityMatrix rho = testing::random_density(2, 1, rng);
  const DisplacementGrid grid{{0.52, 0.51}, 1, {0.1, -0.2}};
  const QDataset q = exact_qdataset(rho, grid, 2);
  check_round_trip(q);
  check_round_trip(reconstruct(q, analytic_named_state(Bell00_11{kPi / 2})));

  PhaseScanOptions po;
  po.seed = 3;
  check_round_trip(parity_phase_scan(analytic_named_state(WState{}), 0, 2, po));
  SpinPhaseOptions sp;
  sp.seed = 4;
  check_round_trip(calibrate_spin_phase(0.5, sp));

  for (const char* name : {"bell.json", "bell_exact.json", "w_state.json", "calibrate.json"}) {
    CAPTURE(name);
    const PipelineConfig cfg = load_config(kConfigs + "/" + name);
    check_round_trip(cfg);
  }
}

TEST_CASE("complex numbers and matrices use the documented layout") {
  const Json z = io::complex_to_json(Complex(1.5, -2.0));
  CHECK(z.dump() == R"({"re":1.5,"im":-2.0})");
  CMatrix m(1, 2);
  m << Complex(1, 2), Complex(3, 4);
  CHECK(io::cmatrix_to_json(m).dump() == R"({"real":[[1.0,3.0]],"imag":[[2.0,4.0]]})");
  const Json scan = sample_scan(analytic_named_state(Bell00_11{0.0}), kReadout, {0.0, 1e-5}, SampleOptions{});
  CHECK(scan.at("schema") == "mmtomo/1");
  CHECK(scan.at("configs") == Json::array({"dd", "du", "ud", "uu"}));
}

TEST_CASE("malformed documents are config errors") {
  Json scan = sample_scan(analytic_named_state(Bell00_11{0.0}), kReadout, {0.0, 1e-5}, SampleOptions{});
  Json wrong_schema = scan;
  wrong_schema["schema"] = "mmtomo/0";
  CHECK_THROWS_AS(io::parse<TimeScanData>(wrong_schema, "scan"), ConfigError);
  Json no_cal = scan;
  no_cal.erase("calibration");
  CHECK_THROWS_AS(io::parse<TimeScanData>(no_cal, "scan"), ConfigError);
  Json bad_rows = scan;
  bad_rows["populations"][0] = Json::array({0.5, 0.5});
  CHECK_THROWS_AS(io::parse<TimeScanData>(bad_rows, "scan"), ConfigError);
  CHECK_THROWS_AS(io::parse<PulseOp>(Json{{"op", "laser"}}, "op"), ConfigError);
  CHECK_THROWS_AS(io::parse<FockDistribution>(scan, "fock"), ConfigError);
}

TEST_CASE("displacement helpers agree with the Fock-space operators") {
  std::mt19937_64 rng(8);
  const PureState psi = testing::random_pure(2, 1, rng);
  const std::vector<Complex> alphas{Complex(0.3, 0.1), Complex(-0.2, 0.4)};
  const PureState moved = displace(psi, alphas, 14);
  const DensityMatrix moved_rho = displace(DensityMatrix::from_pure(psi), alphas, 14);
  CHECK((DensityMatrix::from_pure(moved).matrix - moved_rho.matrix).cwiseAbs().maxCoeff() < 1e-12);
  // Q_k(alpha) measured on D(-alpha) rho D(-alpha)^dag.
  const PureState back = displace(psi, {-alphas[0], -alphas[1]}, 14);
  const RVector q = displaced_populations(DensityMatrix::from_pure(resize(psi, {14, 14})), alphas);
  const RVector direct = DensityMatrix::from_pure(back).populations();
  CHECK((q - direct).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(displace(psi, {Complex(3.0, 0.0), Complex(0.0)}, 4), TruncationLeak);
}

TEST_CASE("simulated grid scans without shot noise reconstruct the state") {
  const PureState bell = analytic_named_state(Bell00_11{kPi / 2});
  const DisplacementGrid grid{{0.52, 0.51}, 1, {}};
  SampleOptions exact;
  exact.shots = std::nullopt;
  const auto times = default_time_grid({kReadout.sideband(0, 0), kReadout.sideband(1, 1)}, 40);
  const auto scans = simulate_grid_scans(DensityMatrix::from_pure(bell), grid, kReadout, times, exact, 12);
  CHECK(scans.size() == 16);
  const QDataset q = fit_grid_scans(scans, grid, 3);
  const ReconstructedState r = reconstruct(q, bell);
  CHECK(*r.fidelity_raw > 0.999);
  CHECK(r.rho_raw(0, 3).imag() == doctest::Approx(-0.5).epsilon(1e-3));
}

TEST_CASE("simulate writes a four-configuration Bell scan; fit recovers P00 = P11 = 1/2") {
  const fs::path dir = fresh_dir("bell");
  Json cfg = io::read_json_file(kConfigs + "/bell.json");
  cfg["scan"]["shots"] = nullptr;
  cfg.erase("reconstruction");
  const std::string path = write_config(dir, cfg);
  REQUIRE(run("simulate", path, dir / "out") == kExitOk);
  const TimeScanData scan = io::parse<TimeScanData>(io::read_json_file((dir / "out/scan.json").string()), "scan");
  CHECK(scan.num_configs() == 4);
  CHECK(fs::exists(dir / "out/scan.csv"));
  CHECK(slurp(dir / "out/scan.csv").rfind("time_us,dd,du,ud,uu\n", 0) == 0);
  REQUIRE(run("fit", path, dir / "out") == kExitOk);
  const FockDistribution p = io::parse<FockDistribution>(io::read_json_file((dir / "out/fock.json").string()), "fock");
  CHECK(p({0, 0}) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(p({1, 1}) == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("W configuration: restricted fit near 1/3 and verify amplitude near 1/3") {
  const fs::path dir = fresh_dir("w");
  Json cfg = io::read_json_file(kConfigs + "/w_state.json");
  cfg["scan"]["shots"] = nullptr;
  cfg["verify"]["shots"] = nullptr;
  const std::string path = write_config(dir, cfg);
  REQUIRE(run("simulate", path, dir / "out", std::nullopt, OutputFormat::Json) == kExitOk);
  CHECK(!fs::exists(dir / "out/scan.csv"));
  REQUIRE(run("fit", path, dir / "out") == kExitOk);
  const FockDistribution p = io::parse<FockDistribution>(io::read_json_file((dir / "out/fock.json").string()), "fock");
  for (const MultiIndex& k : {MultiIndex{1, 0, 0}, MultiIndex{0, 1, 0}, MultiIndex{0, 0, 1}})
    CHECK(p(k) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  REQUIRE(run("verify", path, dir / "out") == kExitOk);
  const PhaseScanResult r =
      io::parse<PhaseScanResult>(io::read_json_file((dir / "out/phase_scan_12.json").string()), "scan");
  CHECK(r.amplitude == doctest::Approx(1.0 / 3.0).epsilon(1e-8));

  cfg["state"]["dephase"] = true;
  const std::string dephased = write_config(dir, cfg);
  REQUIRE(run("verify", dephased, dir / "dephased") == kExitOk);
  const PhaseScanResult d =
      io::parse<PhaseScanResult>(io::read_json_file((dir / "dephased/phase_scan_01.json").string()), "scan");
  CHECK(d.amplitude < 1e-10);
}

TEST_CASE("exact reconstruction and calibration commands") {
  const fs::path dir = fresh_dir("exact");
  REQUIRE(run("reconstruct", kConfigs + "/bell_exact.json", dir) == kExitOk);
  const ReconstructedState r =
      io::parse<ReconstructedState>(io::read_json_file((dir / "reconstruction.json").string()), "r");
  CHECK(*r.fidelity_raw > 0.999);

  Json cfg = io::read_json_file(kConfigs + "/calibrate.json");
  cfg["calibrate"]["shots"] = nullptr;
  cfg["calibrate"].erase("thermal");
  REQUIRE(run("calibrate", write_config(dir, cfg), dir / "cal") == kExitOk);
  const SpinPhaseCalibration c =
      io::parse<SpinPhaseCalibration>(io::read_json_file((dir / "cal/spin_phase.json").string()), "c");
  CHECK(c.phi_b_min * 180.0 / kPi == doctest::Approx(110.0).epsilon(1e-6));
}

TEST_CASE("incomplete Q manifest lists the missing settings") {
  const fs::path dir = fresh_dir("incomplete");
  Json cfg = io::read_json_file(kConfigs + "/bell.json");
  cfg["scan"]["shots"] = nullptr;
  cfg["scan"]["points"] = 16;
  const std::string path = write_config(dir, cfg);
  REQUIRE(run("simulate", path, dir / "out") == kExitOk);
  REQUIRE(run("fit", path, dir / "out") == kExitOk);
  Json manifest = io::read_json_file((dir / "out/q_manifest.json").string());
  manifest["entries"].erase(0);
  io::write_text_file((dir / "out/q_manifest.json").string(), io::dump(manifest));
  std::ostringstream log, err;
  RunOptions o;
  o.config_path = path;
  o.out_dir = (dir / "out").string();
  CHECK(run_command("reconstruct", o, log, err) == kExitConfigError);
  CHECK(err.str().find("missing 1 setting") != std::string::npos);
  CHECK(err.str().find("(-2,-2)") != std::string::npos);
}

TEST_CASE("exit codes") {
  const fs::path dir = fresh_dir("errors");
  Json cfg = io::read_json_file(kConfigs + "/bell.json");
  Json zero = cfg;
  zero["scan"]["points"] = 0;
  CHECK(run("simulate", write_config(dir, zero), dir / "o") == kExitConfigError);
  Json low_k = cfg;
  low_k["reconstruction"]["k_max"] = 0;
  CHECK(run("simulate", write_config(dir, low_k), dir / "o") == kExitConfigError);
  Json leak = cfg;
  leak["reconstruction"]["grid"]["magnitudes"] = Json::array({2.5, 2.5});
  leak["reconstruction"]["simulation_cutoff"] = 3;
  CHECK(run("simulate", write_config(dir, leak), dir / "o") == kExitNumericalError);
  CHECK(run("frobnicate", kConfigs + "/bell.json", dir / "o") == kExitConfigError);
  CHECK(run("simulate", (dir / "missing.json").string(), dir / "o") == kExitConfigError);
  CHECK_THROWS_AS(parse_output_format("xml"), ConfigError);
}

TEST_CASE("every command is byte-identical when re-run with the same seed") {
  const std::vector<std::pair<std::string, std::vector<std::string>>> plans = {
      {"bell.json", {"simulate", "fit", "reconstruct"}},
      {"w_state.json", {"simulate", "fit", "verify"}},
      {"calibrate.json", {"calibrate"}}};
  for (const auto& [config, commands] : plans) {
    CAPTURE(config);
    const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
    for (const auto& cmd : commands) {
      REQUIRE(run(cmd, kConfigs + "/" + config, a, 42) == kExitOk);
      REQUIRE(run(cmd, kConfigs + "/" + config, b, 42) == kExitOk);
    }
    int files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
      if (!entry.is_regular_file()) continue;
      ++files;
      const fs::path other = b / fs::relative(entry.path(), a);
      CHECK(slurp(entry.path()) == slurp(other));
    }
    CHECK(files > 0);
  }
}
