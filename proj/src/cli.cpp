#include "mmtomo/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;

namespace mmtomo {

namespace {

// Applies a single-mode operator (levels x levels) to the row index of m.
// The row index runs over the product basis of `config` (mode 0 slowest).
void apply_to_rows(CMatrix& m, const HilbertConfig& config, int mode, const CMatrix& op) {
  const std::int64_t levels = config.levels(mode);
  std::int64_t inner = 1;
  for (int j = mode + 1; j < config.num_modes(); ++j) inner *= config.levels(j);
  const std::int64_t outer = config.mode_dimension() / (levels * inner);
  CMatrix block(levels, m.cols());
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      for (std::int64_t n = 0; n < levels; ++n) block.row(n) = m.row((o * levels + n) * inner + i);
      block = op * block;
      for (std::int64_t n = 0; n < levels; ++n) m.row((o * levels + n) * inner + i) = block.row(n);
    }
}

void check_alphas(const HilbertConfig& config, const std::vector<Complex>& alphas) {
  if (config.num_spins != 0) throw ConfigError("displace: expected a motional state");
  if (static_cast<int>(alphas.size()) != config.num_modes())
    throw DimensionMismatch("displace: need one alpha per mode");
}

std::string setting_tag(const MultiIndex& p) {
  std::string tag = "p";
  for (int v : p) tag += (v < 0 ? "_m" : "_") + std::to_string(std::abs(v));
  return tag;
}

std::optional<std::int64_t> shots_value(const Json& j, const char* key, std::optional<std::int64_t> fallback) {
  if (!j.contains(key)) return fallback;
  if (j.at(key).is_null()) return std::nullopt;
  const auto s = j.at(key).get<std::int64_t>();
  if (s <= 0) throw ConfigError(std::string(key) + " must be positive or null");
  return s;
}

Json shots_json(const std::optional<std::int64_t>& s) { return s ? Json(*s) : Json(nullptr); }

std::string resolve(const std::string& base, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? p.string() : (fs::path(base) / p).lexically_normal().string();
}

int named_modes(const NamedState& s) {
  return std::visit(
      [](const auto& v) -> int {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, CoherentProduct>) return static_cast<int>(v.alphas.size());
        else if constexpr (std::is_same_v<T, WState>) return 3;
        else return 2;
      },
      s);
}

std::vector<double> scan_times(const PipelineConfig& cfg) {
  if (!cfg.scan.times.empty()) return cfg.scan.times;
  return default_time_grid(cfg.readout_rates, cfg.scan.points, cfg.scan.span_periods);
}

SampleOptions sample_options(const PipelineConfig& cfg) {
  SampleOptions o;
  o.shots = cfg.scan.shots;
  o.seed = cfg.scan.seed;
  o.misassignment = cfg.scan.misassignment;
  o.coherence_time = cfg.scan.coherence_time;
  o.label = cfg.experiment;
  return o;
}

FitOptions fit_options(const PipelineConfig& cfg, const FitSettings& settings) {
  FitOptions o;
  o.all_down_only = settings.all_down_only;
  o.nonnegative = settings.nonnegative;
  o.simplex = settings.simplex;
  o.seed = derive_seed(cfg.scan.seed, 1001);
  o.coherence_time = cfg.scan.coherence_time;
  return o;
}

// Writes `stem`.json and/or `stem`.csv under the output directory.
class Writer {
 public:
  Writer(const RunOptions& opts, std::ostream& log) : opts_(opts), log_(log) {}

  std::string path(const std::string& name) const { return (fs::path(opts_.out_dir) / name).string(); }

  void json(const std::string& stem, const Json& j) const {
    if (opts_.format == OutputFormat::Csv) return;
    write(stem + ".json", io::dump(j));
  }
  void csv(const std::string& stem, const std::string& text) const {
    if (opts_.format == OutputFormat::Json) return;
    write(stem + ".csv", text);
  }
  // Manifests and per-setting files feed later commands, so they are
  // written whatever the format.
  void plumbing(const std::string& name, const Json& j) const { write(name, io::dump(j)); }

 private:
  void write(const std::string& name, const std::string& text) const {
    io::write_text_file(path(name), text);
    log_ << "wrote " << path(name) << '\n';
  }
  const RunOptions& opts_;
  std::ostream& log_;
};

std::optional<PureState> reconstruction_target(const PipelineConfig& cfg, int n_max) {
  if (!cfg.state.named || cfg.state.dephase) return std::nullopt;
  const PureState ideal = analytic_named_state(*cfg.state.named);
  try {
    return resize(ideal, std::vector<int>(static_cast<std::size_t>(ideal.config.num_modes()), n_max), 1e-9);
  } catch (const TruncationLeak&) {
    return std::nullopt;  // the target does not fit in the reconstructed space
  }
}

// ---------------------------------------------------------------------------

void cmd_simulate(const PipelineConfig& cfg, const RunOptions& opts, std::ostream& log) {
  const Writer out(opts, log);
  const DensityMatrix rho = prepare_state(cfg);
  const RabiCalibration readout = RabiCalibration::diagonal(cfg.readout_rates);
  const std::vector<double> times = scan_times(cfg);
  const TimeScanData scan = sample_scan(rho, readout, times, sample_options(cfg));
  out.json("scan", scan);
  out.csv("scan", io::scan_csv(scan));

  if (cfg.reconstruction && cfg.reconstruction->source == "simulate") {
    const ReconstructionSettings& rs = *cfg.reconstruction;
    const auto scans = simulate_grid_scans(rho, rs.grid, readout, times, sample_options(cfg), rs.simulation_cutoff);
    Json manifest;
    manifest["schema"] = kSchemaVersion;
    manifest["kind"] = "grid_scan_manifest";
    manifest["grid"] = rs.grid;
    Json entries = Json::array();
    for (const auto& g : scans) {
      const std::string file = "grid_scans/" + setting_tag(g.p) + ".json";
      out.plumbing(file, g.scan);
      entries.push_back(Json{{"p", g.p}, {"file", file}});
    }
    manifest["entries"] = entries;
    out.plumbing("grid_manifest.json", manifest);
  }
}

void cmd_fit(const PipelineConfig& cfg, const RunOptions& opts, std::ostream& log) {
  const Writer out(opts, log);
  bool did_something = false;

  if (cfg.fit) {
    const FitSettings& settings = *cfg.fit;
    std::vector<std::string> files;
    for (const auto& f : settings.scan_files) files.push_back(resolve(cfg.base_dir, f));
    if (files.empty()) files.push_back(out.path("scan.json"));
    const FitOptions fo = fit_options(cfg, settings);
    std::vector<MultiIndex> subset = settings.subset;
    if (subset.empty() && !settings.neighborhood.empty()) subset = neighborhood_subset(settings.neighborhood, settings.radius);
    for (std::size_t i = 0; i < files.size(); ++i) {
      const TimeScanData scan = io::parse<TimeScanData>(io::read_json_file(files[i]), files[i]);
      FockDistribution p = subset.empty() ? fit_fock_distribution(scan, settings.k_max, fo)
                                          : fit_fock_distribution_restricted(scan, subset, fo);
      p.label = scan.label;
      const std::string stem = files.size() == 1 ? "fock" : "fock_" + std::to_string(i);
      out.json(stem, p);
      out.csv(stem, io::fock_csv(p));
      for (const auto& w : p.diagnostics.warnings) log << "warning: " << w << '\n';
    }
    did_something = true;
  }

  if (cfg.reconstruction && cfg.reconstruction->source == "simulate") {
    const ReconstructionSettings& rs = *cfg.reconstruction;
    const std::string manifest_path = out.path("grid_manifest.json");
    if (!fs::exists(manifest_path))
      throw ConfigError("fit: " + manifest_path + " not found (run simulate first)");
    const Json manifest = io::read_json_file(manifest_path);
    io::check_kind(manifest, "grid_scan_manifest");
    const DisplacementGrid grid = io::parse<DisplacementGrid>(manifest.at("grid"), "grid_scan_manifest");
    std::vector<GridScan> scans;
    for (const auto& e : manifest.at("entries")) {
      const std::string file = out.path(e.at("file").get<std::string>());
      scans.push_back({e.at("p").get<MultiIndex>(), io::parse<TimeScanData>(io::read_json_file(file), file)});
    }
    FitSettings grid_fit;
    grid_fit.k_max = rs.k_max;
    const QDataset q = fit_grid_scans(scans, grid, rs.k_max, fit_options(cfg, grid_fit));
    Json qm;
    qm["schema"] = kSchemaVersion;
    qm["kind"] = "q_manifest";
    qm["grid"] = grid;
    qm["k_max"] = rs.k_max;
    Json entries = Json::array();
    for (const auto& [p, dist] : q.points) {
      const std::string file = "q/" + setting_tag(p) + ".json";
      out.plumbing(file, dist);
      entries.push_back(Json{{"p", p}, {"file", file}});
    }
    qm["entries"] = entries;
    out.plumbing("q_manifest.json", qm);
    did_something = true;
  }
  if (!did_something) throw ConfigError("fit: the config has neither a fit nor a simulated reconstruction section");
}

QDataset load_q_manifest(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("reconstruct: " + path + " not found (run simulate and fit first)");
  const Json m = io::read_json_file(path);
  io::check_kind(m, "q_manifest");
  QDataset q;
  q.grid = io::parse<DisplacementGrid>(m.at("grid"), path);
  q.k_max = m.at("k_max").get<int>();
  const fs::path dir = fs::path(path).parent_path();
  for (const auto& e : m.at("entries")) {
    const std::string file = (dir / e.at("file").get<std::string>()).string();
    q.points[e.at("p").get<MultiIndex>()] = io::parse<FockDistribution>(io::read_json_file(file), file);
  }
  q.validate();
  return q;
}

void cmd_reconstruct(const PipelineConfig& cfg, const RunOptions& opts, std::ostream& log) {
  if (!cfg.reconstruction) throw ConfigError("reconstruct: the config has no reconstruction section");
  const ReconstructionSettings& rs = *cfg.reconstruction;
  const Writer out(opts, log);
  QDataset q;
  if (rs.source == "exact") {
    q = exact_qdataset(prepare_state(cfg), rs.grid, rs.k_max);
  } else {
    q = load_q_manifest(rs.manifest.empty() ? out.path("q_manifest.json") : resolve(cfg.base_dir, rs.manifest));
  }
  const ReconstructedState r = reconstruct(q, reconstruction_target(cfg, rs.grid.n_max));
  out.json("reconstruction", r);
  out.csv("reconstruction", io::reconstruction_csv(r));
  std::ostringstream summary;
  summary << std::setprecision(4);
  if (r.fidelity_raw) summary << "fidelity raw " << *r.fidelity_raw << ", psd " << *r.fidelity_psd << "; ";
  summary << "trace " << r.trace << ", min eigenvalue " << r.min_eigenvalue;
  log << summary.str() << '\n';
  for (const auto& w : r.warnings) log << "warning: " << w << '\n';
}

void cmd_verify(const PipelineConfig& cfg, const RunOptions& opts, std::ostream& log) {
  const VerifySettings settings = cfg.verify.value_or(VerifySettings{});
  const Writer out(opts, log);
  const DensityMatrix rho = prepare_state(cfg);
  auto pairs = settings.pairs;
  if (pairs.empty())
    for (int i = 0; i < rho.config.num_modes(); ++i)
      for (int j = i + 1; j < rho.config.num_modes(); ++j) pairs.emplace_back(i, j);
  PhaseScanOptions po;
  po.phi1 = po.phi2 = uniform_phase_grid(settings.phi_points);
  po.shots = settings.shots;
  po.sideband_rabi = cfg.sideband_rabi;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    po.seed = derive_seed(cfg.scan.seed, 2000 + k);
    const PhaseScanResult r = parity_phase_scan(rho, pairs[k].first, pairs[k].second, po);
    const std::string stem = "phase_scan_" + std::to_string(r.mode_i) + std::to_string(r.mode_j);
    out.json(stem, r);
    out.csv(stem, io::phase_scan_csv(r));
    std::ostringstream line;
    line << std::setprecision(4) << "modes (" << r.mode_i << "," << r.mode_j << "): amplitude " << r.amplitude
         << " +/- " << r.amplitude_sigma;
    log << line.str() << '\n';
    for (const auto& w : r.warnings) log << "warning: " << w << '\n';
  }
}

void cmd_calibrate(const PipelineConfig& cfg, const RunOptions& opts, std::ostream& log) {
  const CalibrateSettings settings = cfg.calibrate.value_or(CalibrateSettings{});
  const Writer out(opts, log);
  SpinPhaseOptions so;
  so.phi_b = uniform_phase_grid(settings.points);
  so.push = settings.push;
  so.cutoff = settings.cutoff;
  so.shots = settings.shots;
  so.seed = derive_seed(cfg.scan.seed, 3000);
  so.two_tone = settings.two_tone;
  const SpinPhaseCalibration c = calibrate_spin_phase(settings.offset_deg * kPi / 180.0, so);
  out.json("spin_phase", c);
  out.csv("spin_phase", io::spin_phase_csv(c));
  std::ostringstream line;
  line << std::setprecision(5) << "spin phase: minimum at phi_b = " << c.phi_b_min * 180.0 / kPi << " deg (+/- "
       << c.phi_b_sigma * 180.0 / kPi << "), phi_s = " << c.phi_s * 180.0 / kPi << " deg";
  log << line.str() << '\n';

  if (settings.thermal) {
    const ThermalSettings& ts = *settings.thermal;
    const double rabi = cfg.readout_rates.empty() ? cfg.sideband_rabi : cfg.readout_rates.front();
    const FockDistribution p = FockDistribution::thermal({ts.nbar}, 40);
    DensityMatrix rho{HilbertConfig::uniform(1, 40), CMatrix::Zero(41, 41)};
    rho.matrix.diagonal() = (p.values / p.total()).cast<Complex>();
    SampleOptions o;
    o.shots = ts.shots;
    o.seed = derive_seed(cfg.scan.seed, 3001);
    o.label = "thermal";
    const TimeScanData scan =
        sample_scan(rho, RabiCalibration::diagonal({rabi}), default_time_grid({rabi}, ts.points, ts.span_periods), o);
    const ScalarFit fit = fit_thermal_nbar(scan);
    Json j;
    j["schema"] = kSchemaVersion;
    j["kind"] = "thermal_calibration";
    j["nbar_true"] = ts.nbar;
    j["fit"] = fit;
    out.json("thermal", j);
    out.csv("thermal_scan", io::scan_csv(scan));
    std::ostringstream t;
    t << std::setprecision(4) << "thermal: nbar = " << fit.value << " +/- " << fit.sigma << " (true " << ts.nbar << ")";
    log << t.str() << '\n';
  }
}

}  // namespace

// ---------------------------------------------------------------------------

DensityMatrix displace(const DensityMatrix& rho, const std::vector<Complex>& alphas, int cutoff,
                       double leak_tolerance) {
  check_alphas(rho.config, alphas);
  const std::vector<int> cutoffs(alphas.size(), cutoff);
  DensityMatrix out = resize(rho, cutoffs, leak_tolerance);
  CMatrix m = out.matrix;
  for (int j = 0; j < out.config.num_modes(); ++j)
    apply_to_rows(m, out.config, j, displacement_matrix(alphas[j], cutoff + 1, out.config.guard_levels));
  m = m.adjoint().eval();
  for (int j = 0; j < out.config.num_modes(); ++j)
    apply_to_rows(m, out.config, j, displacement_matrix(alphas[j], cutoff + 1, out.config.guard_levels));
  const double kept = m.trace().real();
  const double leaked = rho.trace() - kept;
  if (leaked > leak_tolerance) throw TruncationLeak("displace", leaked, leak_tolerance);
  out.matrix = hermitize(m) / kept;
  return out;
}

PureState displace(const PureState& state, const std::vector<Complex>& alphas, int cutoff, double leak_tolerance) {
  check_alphas(state.config, alphas);
  PureState out = resize(state, std::vector<int>(alphas.size(), cutoff), leak_tolerance);
  CMatrix v = out.amplitudes;
  for (int j = 0; j < out.config.num_modes(); ++j)
    apply_to_rows(v, out.config, j, displacement_matrix(alphas[j], cutoff + 1, out.config.guard_levels));
  const double kept = v.squaredNorm();
  const double leaked = state.amplitudes.squaredNorm() - kept;
  if (leaked > leak_tolerance) throw TruncationLeak("displace", leaked, leak_tolerance);
  out.amplitudes = v.col(0) / std::sqrt(kept);
  return out;
}

std::vector<GridScan> simulate_grid_scans(const DensityMatrix& rho, const DisplacementGrid& grid,
                                          const RabiCalibration& readout, const std::vector<double>& times,
                                          const SampleOptions& options, int cutoff) {
  grid.validate();
  if (grid.num_modes() != rho.config.num_modes())
    throw DimensionMismatch("simulate_grid_scans: grid and state differ in mode count");
  // A rank-one state is displaced as a vector, which keeps sample_scan on
  // its pure-state path.
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(rho.matrix);
  const Eigen::Index top = eig.eigenvalues().size() - 1;
  const bool pure = std::abs(eig.eigenvalues()(top) - rho.trace()) < 1e-12;
  const PureState psi{rho.config, eig.eigenvectors().col(top)};

  const auto settings = grid.settings();
  std::vector<GridScan> out(settings.size());
  for (std::size_t f = 0; f < settings.size(); ++f) {
    std::vector<Complex> alphas = grid.alphas(settings[f]);
    for (auto& a : alphas) a = -a;
    SampleOptions o = options;
    o.seed = derive_seed(options.seed, f);
    o.label = options.label.empty() ? setting_tag(settings[f]) : options.label + " " + setting_tag(settings[f]);
    out[f].p = settings[f];
    out[f].scan = pure ? sample_scan(displace(psi, alphas, cutoff, options.leak_tolerance), readout, times, o)
                       : sample_scan(displace(rho, alphas, cutoff, options.leak_tolerance), readout, times, o);
    out[f].scan.seed = o.seed;
  }
  return out;
}

QDataset fit_grid_scans(const std::vector<GridScan>& scans, const DisplacementGrid& grid, int k_max,
                        const FitOptions& options) {
  QDataset q;
  q.grid = grid;
  q.k_max = k_max;
  for (const auto& g : scans) {
    FockDistribution p = fit_fock_distribution(g.scan, k_max, options);
    p.label = setting_tag(g.p);
    q.points[g.p] = std::move(p);
  }
  q.validate();
  return q;
}

// ---------------------------------------------------------------------------

int PipelineConfig::num_modes() const {
  if (state.named) return named_modes(*state.named);
  if (state.sequence) return state.sequence->config.num_modes();
  return 0;
}

void PipelineConfig::validate() const {
  if (state.named.has_value() == state.sequence.has_value())
    throw ConfigError("config: state needs exactly one of \"named\" or \"sequence\"");
  const int d = num_modes();
  if (d < 1) throw ConfigError("config: the state has no modes");
  if (static_cast<int>(readout_rates.size()) != d)
    throw ConfigError("config: calibration.readout_rates needs one rate per mode (" + std::to_string(d) + ")");
  for (double r : readout_rates)
    if (!(r > 0.0)) throw ConfigError("config: readout rates must be positive");
  if (!(sideband_rabi > 0.0)) throw ConfigError("config: sideband_rabi must be positive");
  if (scan.times.empty() && scan.points < 1) throw ConfigError("config: zero-length time grid");
  for (double t : scan.times)
    if (!(t >= 0.0)) throw ConfigError("config: scan times must be non-negative");
  if (scan.shots && *scan.shots <= 0) throw ConfigError("config: scan.shots must be positive or null");
  if (scan.coherence_time && !(*scan.coherence_time > 0.0))
    throw ConfigError("config: scan.coherence_time must be positive");
  if (fit) {
    if (fit->k_max < 0) throw ConfigError("config: fit.k_max must be non-negative");
    for (const auto& f : fit->scan_files)
      if (!fs::exists(resolve(base_dir, f))) throw ConfigError("config: scan file " + f + " does not exist");
  }
  if (reconstruction) {
    const auto& r = *reconstruction;
    r.grid.validate();
    if (r.grid.num_modes() != d) throw ConfigError("config: reconstruction grid needs one magnitude per mode");
    if (r.k_max < r.grid.n_max) throw ConfigError("config: reconstruction requires k_max >= n_max");
    if (r.source != "simulate" && r.source != "exact")
      throw ConfigError("config: reconstruction.source must be \"simulate\" or \"exact\"");
    if (r.simulation_cutoff < r.k_max) throw ConfigError("config: simulation_cutoff must be at least k_max");
    if (!r.manifest.empty() && !fs::exists(resolve(base_dir, r.manifest)))
      throw ConfigError("config: manifest " + r.manifest + " does not exist");
  }
  if (verify) {
    if (verify->phi_points < 3) throw ConfigError("config: verify.phi_points must be at least 3");
    for (const auto& [i, j] : verify->pairs)
      if (i < 0 || j < 0 || i >= d || j >= d || i == j) throw ConfigError("config: invalid verify pair");
  }
  if (calibrate && calibrate->points < 3) throw ConfigError("config: calibrate.points must be at least 3");
}

void to_json(Json& j, const PipelineConfig& v) {
  j = Json();
  j["schema"] = kSchemaVersion;
  j["kind"] = "pipeline_config";
  j["experiment"] = v.experiment;
  j["calibration"] = Json{{"sideband_rabi", v.sideband_rabi},
                          {"carrier_rabi", v.carrier_rabi},
                          {"spin_phase_offset", v.spin_phase_offset},
                          {"readout_rates", v.readout_rates}};
  Json state;
  if (v.state.named) state["named"] = *v.state.named;
  if (v.state.sequence) state["sequence"] = *v.state.sequence;
  state["cutoff"] = v.state.cutoff;
  state["dephase"] = v.state.dephase;
  j["state"] = state;
  j["scan"] = Json{{"times", v.scan.times},
                   {"points", v.scan.points},
                   {"span_periods", v.scan.span_periods},
                   {"shots", shots_json(v.scan.shots)},
                   {"seed", v.scan.seed},
                   {"coherence_time", v.scan.coherence_time ? Json(*v.scan.coherence_time) : Json(nullptr)},
                   {"misassignment", v.scan.misassignment}};
  if (v.fit)
    j["fit"] = Json{{"k_max", v.fit->k_max},
                    {"all_down_only", v.fit->all_down_only},
                    {"nonnegative", v.fit->nonnegative},
                    {"simplex", v.fit->simplex},
                    {"subset", v.fit->subset},
                    {"neighborhood", v.fit->neighborhood},
                    {"radius", v.fit->radius},
                    {"scan_files", v.fit->scan_files}};
  if (v.reconstruction)
    j["reconstruction"] = Json{{"grid", v.reconstruction->grid},
                               {"k_max", v.reconstruction->k_max},
                               {"source", v.reconstruction->source},
                               {"manifest", v.reconstruction->manifest},
                               {"simulation_cutoff", v.reconstruction->simulation_cutoff}};
  if (v.verify) {
    Json pairs = Json::array();
    for (const auto& [a, b] : v.verify->pairs) pairs.push_back(Json::array({a, b}));
    j["verify"] = Json{{"pairs", pairs}, {"phi_points", v.verify->phi_points}, {"shots", shots_json(v.verify->shots)}};
  }
  if (v.calibrate) {
    Json c{{"offset_deg", v.calibrate->offset_deg}, {"push", v.calibrate->push},
           {"points", v.calibrate->points},         {"cutoff", v.calibrate->cutoff},
           {"shots", shots_json(v.calibrate->shots)}, {"two_tone", v.calibrate->two_tone}};
    if (v.calibrate->thermal) {
      const ThermalSettings& t = *v.calibrate->thermal;
      c["thermal"] = Json{{"nbar", t.nbar},
                          {"points", t.points},
                          {"span_periods", t.span_periods},
                          {"shots", shots_json(t.shots)}};
    }
    j["calibrate"] = c;
  }
}

void from_json(const Json& j, PipelineConfig& v) {
  io::check_kind(j, "pipeline_config");
  v = PipelineConfig{};
  v.experiment = j.value("experiment", std::string("experiment"));

  const Json& cal = j.at("calibration");
  // Frequencies in Hz are accepted as a convenience and stored as rad/s.
  if (cal.contains("sideband_frequency_hz")) v.sideband_rabi = 2.0 * kPi * cal.at("sideband_frequency_hz").get<double>();
  if (cal.contains("carrier_frequency_hz")) v.carrier_rabi = 2.0 * kPi * cal.at("carrier_frequency_hz").get<double>();
  v.sideband_rabi = cal.value("sideband_rabi", v.sideband_rabi);
  v.carrier_rabi = cal.value("carrier_rabi", v.carrier_rabi);
  v.spin_phase_offset = cal.value("spin_phase_offset", 0.0);
  if (cal.contains("readout_frequencies_hz"))
    for (double f : cal.at("readout_frequencies_hz").get<std::vector<double>>()) v.readout_rates.push_back(2.0 * kPi * f);
  if (cal.contains("readout_rates")) v.readout_rates = cal.at("readout_rates").get<std::vector<double>>();

  const Json& st = j.at("state");
  if (st.contains("named")) v.state.named = st.at("named").get<NamedState>();
  if (st.contains("sequence")) v.state.sequence = st.at("sequence").get<PulseSequence>();
  v.state.cutoff = st.value("cutoff", 0);
  v.state.dephase = st.value("dephase", false);

  if (j.contains("scan")) {
    const Json& s = j.at("scan");
    v.scan.times = s.value("times", std::vector<double>{});
    v.scan.points = s.value("points", 60);
    v.scan.span_periods = s.value("span_periods", 1.0);
    v.scan.shots = shots_value(s, "shots", std::int64_t{100});
    v.scan.seed = s.value("seed", std::uint64_t{0});
    if (s.contains("coherence_time") && !s.at("coherence_time").is_null())
      v.scan.coherence_time = s.at("coherence_time").get<double>();
    v.scan.misassignment = s.value("misassignment", 0.0);
  }
  if (j.contains("fit")) {
    const Json& f = j.at("fit");
    FitSettings settings;
    settings.k_max = f.value("k_max", 1);
    settings.all_down_only = f.value("all_down_only", false);
    settings.nonnegative = f.value("nonnegative", false);
    settings.simplex = f.value("simplex", false);
    settings.subset = f.value("subset", std::vector<MultiIndex>{});
    settings.neighborhood = f.value("neighborhood", std::vector<MultiIndex>{});
    settings.radius = f.value("radius", 1);
    settings.scan_files = f.value("scan_files", std::vector<std::string>{});
    v.fit = settings;
  }
  if (j.contains("reconstruction")) {
    const Json& r = j.at("reconstruction");
    ReconstructionSettings settings;
    settings.grid = r.at("grid").get<DisplacementGrid>();
    settings.k_max = r.value("k_max", 3);
    settings.source = r.value("source", std::string("simulate"));
    settings.manifest = r.value("manifest", std::string());
    settings.simulation_cutoff = r.value("simulation_cutoff", 12);
    v.reconstruction = settings;
  }
  if (j.contains("verify")) {
    const Json& r = j.at("verify");
    VerifySettings settings;
    for (const auto& p : r.value("pairs", Json::array())) {
      if (p.size() != 2) throw ConfigError("config: verify pairs need two modes each");
      settings.pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
    }
    settings.phi_points = r.value("phi_points", 8);
    settings.shots = shots_value(r, "shots", std::int64_t{400});
    v.verify = settings;
  }
  if (j.contains("calibrate")) {
    const Json& c = j.at("calibrate");
    CalibrateSettings settings;
    settings.offset_deg = c.value("offset_deg", 55.0);
    settings.push = c.value("push", 1.0);
    settings.points = c.value("points", 36);
    settings.cutoff = c.value("cutoff", 14);
    settings.shots = shots_value(c, "shots", std::int64_t{400});
    settings.two_tone = c.value("two_tone", true);
    if (c.contains("thermal")) {
      const Json& t = c.at("thermal");
      ThermalSettings ts;
      ts.nbar = t.value("nbar", 0.03);
      ts.points = t.value("points", 800);
      ts.span_periods = t.value("span_periods", 2.5);
      ts.shots = shots_value(t, "shots", std::int64_t{400});
      settings.thermal = ts;
    }
    v.calibrate = settings;
  }
}

PipelineConfig load_config(const std::string& path) {
  PipelineConfig cfg = io::parse<PipelineConfig>(io::read_json_file(path), path);
  const fs::path parent = fs::path(path).parent_path();
  cfg.base_dir = parent.empty() ? "." : parent.string();
  cfg.validate();
  return cfg;
}

DensityMatrix prepare_state(const PipelineConfig& cfg) {
  PureState full;
  if (cfg.state.named) {
    RabiCalibration calib = RabiCalibration::uniform(1, cfg.num_modes(), cfg.sideband_rabi, cfg.carrier_rabi);
    calib.spin_phase_offset = cfg.spin_phase_offset;
    full = prepare_named_state(*cfg.state.named, calib, cfg.state.cutoff);
  } else {
    const PulseSequence& seq = *cfg.state.sequence;
    RabiCalibration calib =
        RabiCalibration::uniform(seq.config.num_spins, seq.config.num_modes(), cfg.sideband_rabi, cfg.carrier_rabi);
    calib.spin_phase_offset = cfg.spin_phase_offset;
    full = run_sequence(seq, calib);
  }
  DensityMatrix rho = DensityMatrix::from_pure(motional_part(full, 1e-6));
  if (cfg.state.dephase) rho.matrix = CMatrix(rho.matrix.diagonal().asDiagonal());
  return rho;
}

OutputFormat parse_output_format(const std::string& name) {
  if (name == "json") return OutputFormat::Json;
  if (name == "csv") return OutputFormat::Csv;
  if (name == "both") return OutputFormat::Both;
  throw ConfigError("unknown format \"" + name + "\" (expected json, csv or both)");
}

int run_command(const std::string& command, const RunOptions& options, std::ostream& log, std::ostream& err) {
  try {
    PipelineConfig cfg = load_config(options.config_path);
    if (options.seed) cfg.scan.seed = *options.seed;
    if (command == "simulate") cmd_simulate(cfg, options, log);
    else if (command == "fit") cmd_fit(cfg, options, log);
    else if (command == "reconstruct") cmd_reconstruct(cfg, options, log);
    else if (command == "verify") cmd_verify(cfg, options, log);
    else if (command == "calibrate") cmd_calibrate(cfg, options, log);
    else throw ConfigError("unknown command \"" + command + "\"");
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumericalError;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumericalError;
  }
}

}  // namespace mmtomo
