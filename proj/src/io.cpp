#include "mmtomo/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace mmtomo {

namespace {

// Non-finite values are stored as null so that the output stays valid JSON.
Json real_json(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

double real_value(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

Json optional_real(const std::optional<double>& x) { return x ? real_json(*x) : Json(nullptr); }

std::optional<double> optional_real(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

Json optional_shots(const std::optional<std::int64_t>& s) { return s ? Json(*s) : Json(nullptr); }

std::optional<std::int64_t> optional_shots(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::int64_t>();
}

Json rvector_json(const RVector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(real_json(v(i)));
  return out;
}

RVector rvector_value(const Json& j) {
  RVector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = real_value(j.at(i));
  return v;
}

Json header(const char* kind) {
  Json j;
  j["schema"] = kSchemaVersion;
  j["kind"] = kind;
  return j;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

}  // namespace

namespace io {

Json complex_to_json(Complex z) { return Json{{"re", real_json(z.real())}, {"im", real_json(z.imag())}}; }

Complex complex_from_json(const Json& j) {
  return {real_value(j.at("re")), real_value(j.at("im"))};
}

Json rmatrix_to_json(const RMatrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(rvector_json(m.row(r).transpose()));
  return rows;
}

RMatrix rmatrix_from_json(const Json& j) {
  if (j.is_null() || j.empty()) return {};
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  RMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ConfigError("matrix rows have unequal length");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = real_value(row.at(static_cast<std::size_t>(c)));
  }
  return m;
}

Json cmatrix_to_json(const CMatrix& m) {
  return Json{{"real", rmatrix_to_json(m.real())}, {"imag", rmatrix_to_json(m.imag())}};
}

CMatrix cmatrix_from_json(const Json& j) {
  const RMatrix re = rmatrix_from_json(j.at("real"));
  const RMatrix im = rmatrix_from_json(j.at("imag"));
  if (re.rows() != im.rows() || re.cols() != im.cols())
    throw ConfigError("complex matrix: real and imaginary parts differ in shape");
  CMatrix m(re.rows(), re.cols());
  m.real() = re;
  m.imag() = im;
  return m;
}

void check_kind(const Json& j, const std::string& kind) {
  if (!j.is_object()) throw ConfigError(kind + ": expected a JSON object");
  if (!j.contains("schema") || j.at("schema") != kSchemaVersion)
    throw ConfigError(kind + ": missing or unsupported schema (expected \"" + kSchemaVersion + "\")");
  if (!j.contains("kind") || j.at("kind") != kind)
    throw ConfigError("expected a \"" + kind + "\" document");
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << content;
}

std::string scan_csv(const TimeScanData& scan) {
  std::ostringstream os;
  const int d = scan.num_modes();
  os << "time_us";
  for (int s = 0; s < scan.num_configs(); ++s) os << ',' << config_label(static_cast<SpinConfig>(s), d);
  os << '\n';
  for (std::size_t i = 0; i < scan.times.size(); ++i) {
    os << fmt(scan.times[i] * 1e6);
    for (int s = 0; s < scan.num_configs(); ++s) os << ',' << fmt(scan.populations(static_cast<Eigen::Index>(i), s));
    os << '\n';
  }
  return os.str();
}

std::string fock_csv(const FockDistribution& p) {
  std::ostringstream os;
  os << "state,population,sigma\n";
  const auto indices = p.support.empty() ? p.box.all() : p.support;
  for (const auto& k : indices) {
    os << '|';
    for (int v : k) os << v;
    os << ">," << fmt(p(k)) << ',' << (p.has_covariance() ? fmt(p.sigma(k)) : std::string()) << '\n';
  }
  return os.str();
}

std::string reconstruction_csv(const ReconstructedState& r) {
  std::ostringstream os;
  os << "row,col,re_raw,im_raw,sigma_re,sigma_im,re_psd,im_psd\n";
  const IndexBox box = r.rho_psd.config.mode_box();
  auto label = [&](Eigen::Index i) {
    std::string s;
    for (int v : box.unflatten(i)) s += std::to_string(v);
    return s;
  };
  for (Eigen::Index m = 0; m < r.rho_raw.rows(); ++m)
    for (Eigen::Index n = 0; n < r.rho_raw.cols(); ++n)
      os << label(m) << ',' << label(n) << ',' << fmt(r.rho_raw(m, n).real()) << ',' << fmt(r.rho_raw(m, n).imag())
         << ',' << fmt(r.sigma_real(m, n)) << ',' << fmt(r.sigma_imag(m, n)) << ','
         << fmt(r.rho_psd.matrix(m, n).real()) << ',' << fmt(r.rho_psd.matrix(m, n).imag()) << '\n';
  return os.str();
}

std::string phase_scan_csv(const PhaseScanResult& r) {
  std::ostringstream os;
  os << "phi1,phi2,p_down,model\n";
  for (std::size_t a = 0; a < r.phi1.size(); ++a)
    for (std::size_t b = 0; b < r.phi2.size(); ++b) {
      const double model = r.offset + r.amplitude * std::cos(r.phi1[a] + r.phi2[b] + r.phase);
      os << fmt(r.phi1[a]) << ',' << fmt(r.phi2[b]) << ','
         << fmt(r.p_down(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))) << ',' << fmt(model) << '\n';
    }
  return os.str();
}

std::string spin_phase_csv(const SpinPhaseCalibration& c) {
  std::ostringstream os;
  os << "phi_b_deg,p_up\n";
  for (std::size_t i = 0; i < c.phi_b.size(); ++i)
    os << fmt(c.phi_b[i] * 180.0 / kPi) << ',' << fmt(c.p_up(static_cast<Eigen::Index>(i))) << '\n';
  return os.str();
}

}  // namespace io

void to_json(Json& j, const HilbertConfig& v) {
  j = Json{{"cutoffs", v.cutoffs}, {"spins", v.num_spins}, {"guard_levels", v.guard_levels}};
}

void from_json(const Json& j, HilbertConfig& v) {
  v.cutoffs = j.at("cutoffs").get<std::vector<int>>();
  v.num_spins = j.value("spins", 0);
  v.guard_levels = j.value("guard_levels", kDefaultGuardLevels);
  v.validate();
}

void to_json(Json& j, const RabiCalibration& v) {
  j = Json{{"sideband", io::rmatrix_to_json(v.sideband)},
           {"carrier", rvector_json(v.carrier)},
           {"spin_phase_offset", v.spin_phase_offset}};
}

void from_json(const Json& j, RabiCalibration& v) {
  v.sideband = io::rmatrix_from_json(j.at("sideband"));
  v.carrier = j.contains("carrier") ? rvector_value(j.at("carrier")) : RVector::Zero(v.sideband.rows());
  v.spin_phase_offset = j.value("spin_phase_offset", 0.0);
  if (v.carrier.size() != v.sideband.rows())
    throw ConfigError("calibration: carrier needs one rate per spin");
}

void to_json(Json& j, const PulseOp& v) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Carrier>) {
          j = Json{{"op", "carrier"}, {"angle", p.angle}, {"phase", p.phase}, {"spin", p.spin}};
        } else if constexpr (std::is_same_v<T, SpinDepDisplace>) {
          j = Json{{"op", "push"},
                   {"mode", p.mode},
                   {"alpha", io::complex_to_json(p.alpha)},
                   {"spin_phase", p.spin_phase},
                   {"spin", p.spin}};
        } else {
          const char* name = std::is_same_v<T, BlueSideband> ? "bsb" : "rsb";
          j = Json{{"op", name}, {"mode", p.mode}, {"angle", p.angle}, {"phase", p.phase}, {"spin", p.spin}};
        }
      },
      v);
}

void from_json(const Json& j, PulseOp& v) {
  const std::string op = j.at("op").get<std::string>();
  const int spin = j.value("spin", 0);
  if (op == "carrier") {
    v = Carrier{j.at("angle").get<double>(), j.value("phase", 0.0), spin};
  } else if (op == "bsb") {
    v = BlueSideband{j.at("mode").get<int>(), j.at("angle").get<double>(), j.value("phase", 0.0), spin};
  } else if (op == "rsb") {
    v = RedSideband{j.at("mode").get<int>(), j.at("angle").get<double>(), j.value("phase", 0.0), spin};
  } else if (op == "push") {
    v = SpinDepDisplace{j.at("mode").get<int>(), io::complex_from_json(j.at("alpha")), j.value("spin_phase", 0.0),
                        spin};
  } else {
    throw ConfigError("unknown pulse op \"" + op + "\" (expected carrier, bsb, rsb or push)");
  }
}

void to_json(Json& j, const PulseSequence& v) {
  if (v.initial) throw ConfigError("pulse sequence: an explicit initial state cannot be serialized");
  j = Json{{"hilbert", v.config}, {"ops", v.ops}};
}

void from_json(const Json& j, PulseSequence& v) {
  v.config = j.at("hilbert").get<HilbertConfig>();
  v.initial.reset();
  v.ops = j.at("ops").get<std::vector<PulseOp>>();
}

void to_json(Json& j, const NamedState& v) {
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Bell00_11> || std::is_same_v<T, Bell01_10>) {
          j = Json{{"name", state_name(v)}, {"phi", s.phi}};
        } else if constexpr (std::is_same_v<T, CoherentProduct>) {
          Json alphas = Json::array();
          for (const Complex a : s.alphas) alphas.push_back(io::complex_to_json(a));
          j = Json{{"name", "coherent_product"}, {"alphas", alphas}};
        } else {
          j = Json{{"name", "w_state"}, {"phases", {s.phi1, s.phi2, s.phi3}}};
        }
      },
      v);
}

void from_json(const Json& j, NamedState& v) {
  const std::string name = j.at("name").get<std::string>();
  if (name == "bell_00_11") {
    v = Bell00_11{j.value("phi", 0.0)};
  } else if (name == "bell_01_10") {
    v = Bell01_10{j.value("phi", 0.0)};
  } else if (name == "coherent_product") {
    CoherentProduct c;
    for (const auto& a : j.at("alphas")) c.alphas.push_back(io::complex_from_json(a));
    v = c;
  } else if (name == "w_state") {
    const auto phases = j.contains("phases") ? j.at("phases").get<std::vector<double>>() : std::vector<double>(3, 0.0);
    if (phases.size() != 3) throw ConfigError("w_state: expected three phases");
    v = WState{phases[0], phases[1], phases[2]};
  } else {
    throw ConfigError("unknown named state \"" + name +
                      "\" (expected bell_00_11, bell_01_10, coherent_product or w_state)");
  }
}

void to_json(Json& j, const FitDiagnostics& v) {
  j = Json{{"condition_number", real_json(v.condition_number)},
           {"chi2", real_json(v.chi2)},
           {"dof", v.dof},
           {"residual_rms", real_json(v.residual_rms)},
           {"poor_fit", v.poor_fit},
           {"warnings", v.warnings}};
}

void from_json(const Json& j, FitDiagnostics& v) {
  v.condition_number = real_value(j.at("condition_number"));
  v.chi2 = real_value(j.at("chi2"));
  v.dof = j.at("dof").get<int>();
  v.residual_rms = real_value(j.at("residual_rms"));
  v.poor_fit = j.at("poor_fit").get<bool>();
  v.warnings = j.at("warnings").get<std::vector<std::string>>();
}

void to_json(Json& j, const ScalarFit& v) {
  j = Json{{"value", real_json(v.value)}, {"sigma", real_json(v.sigma)}, {"chi2", real_json(v.chi2)}, {"dof", v.dof}};
}

void from_json(const Json& j, ScalarFit& v) {
  v.value = real_value(j.at("value"));
  v.sigma = real_value(j.at("sigma"));
  v.chi2 = real_value(j.at("chi2"));
  v.dof = j.at("dof").get<int>();
}

void to_json(Json& j, const DisplacementGrid& v) {
  j = Json{{"magnitudes", v.magnitudes}, {"n_max", v.n_max}, {"phase_offsets", v.phase_offsets}};
}

void from_json(const Json& j, DisplacementGrid& v) {
  v.magnitudes = j.at("magnitudes").get<std::vector<double>>();
  v.n_max = j.value("n_max", 1);
  v.phase_offsets = j.value("phase_offsets", std::vector<double>{});
  v.validate();
}

void to_json(Json& j, const TimeScanData& v) {
  j = header("time_scan");
  j["label"] = v.label;
  j["seed"] = v.seed;
  j["shots"] = optional_shots(v.shots);
  j["calibration"] = v.calibration;
  std::vector<std::string> configs;
  for (int s = 0; s < v.num_configs(); ++s) configs.push_back(config_label(static_cast<SpinConfig>(s), v.num_modes()));
  j["configs"] = configs;
  j["times"] = v.times;
  j["populations"] = io::rmatrix_to_json(v.populations);
}

void from_json(const Json& j, TimeScanData& v) {
  io::check_kind(j, "time_scan");
  v.label = j.value("label", std::string());
  v.seed = j.value("seed", std::uint64_t{0});
  v.shots = optional_shots(j, "shots");
  if (!j.contains("calibration")) throw ConfigError("time_scan: missing calibration");
  v.calibration = j.at("calibration").get<RabiCalibration>();
  v.times = j.at("times").get<std::vector<double>>();
  v.populations = io::rmatrix_from_json(j.at("populations"));
  if (j.contains("configs")) {
    const auto configs = j.at("configs").get<std::vector<std::string>>();
    for (std::size_t s = 0; s < configs.size(); ++s)
      if (parse_config_label(configs[s]) != s) throw ConfigError("time_scan: configs out of order");
  }
  v.validate();
}

void to_json(Json& j, const FockDistribution& v) {
  j = header("fock_distribution");
  j["label"] = v.label;
  j["extents"] = v.box.extents();
  j["index"] = v.box.all();
  j["values"] = rvector_json(v.values);
  if (v.has_covariance()) {
    RVector sigma(v.values.size());
    for (Eigen::Index i = 0; i < sigma.size(); ++i) sigma(i) = std::sqrt(std::max(v.covariance(i, i), 0.0));
    j["sigma"] = rvector_json(sigma);
    j["covariance"] = io::rmatrix_to_json(v.covariance);
  } else {
    j["sigma"] = nullptr;
    j["covariance"] = nullptr;
  }
  j["support"] = v.support;
  j["diagnostics"] = v.diagnostics;
}

void from_json(const Json& j, FockDistribution& v) {
  io::check_kind(j, "fock_distribution");
  v.label = j.value("label", std::string());
  v.box = IndexBox(j.at("extents").get<std::vector<int>>());
  v.values = rvector_value(j.at("values"));
  if (v.values.size() != v.box.size()) throw ConfigError("fock_distribution: values do not match extents");
  if (j.contains("index")) {
    const auto index = j.at("index").get<std::vector<MultiIndex>>();
    if (index != v.box.all()) throw ConfigError("fock_distribution: index map does not match extents");
  }
  v.covariance = j.contains("covariance") ? io::rmatrix_from_json(j.at("covariance")) : RMatrix();
  if (v.has_covariance() && (v.covariance.rows() != v.values.size() || v.covariance.cols() != v.values.size()))
    throw ConfigError("fock_distribution: covariance shape does not match values");
  v.support = j.value("support", std::vector<MultiIndex>{});
  v.diagnostics = j.contains("diagnostics") ? j.at("diagnostics").get<FitDiagnostics>() : FitDiagnostics{};
}

void to_json(Json& j, const QDataset& v) {
  j = header("q_dataset");
  j["grid"] = v.grid;
  j["k_max"] = v.k_max;
  Json points = Json::array();
  for (const auto& [p, dist] : v.points) points.push_back(Json{{"p", p}, {"distribution", dist}});
  j["points"] = points;
}

void from_json(const Json& j, QDataset& v) {
  io::check_kind(j, "q_dataset");
  v.grid = j.at("grid").get<DisplacementGrid>();
  v.k_max = j.at("k_max").get<int>();
  v.points.clear();
  for (const auto& e : j.at("points")) v.points[e.at("p").get<MultiIndex>()] = e.at("distribution").get<FockDistribution>();
  v.validate();
}

void to_json(Json& j, const ReconstructedState& v) {
  j = header("reconstruction");
  j["hilbert"] = v.rho_psd.config;
  j["basis"] = v.rho_psd.config.mode_box().all();
  j["rho_raw"] = io::cmatrix_to_json(v.rho_raw);
  j["sigma_real"] = io::rmatrix_to_json(v.sigma_real);
  j["sigma_imag"] = io::rmatrix_to_json(v.sigma_imag);
  j["rho_psd"] = io::cmatrix_to_json(v.rho_psd.matrix);
  j["fidelity_raw"] = optional_real(v.fidelity_raw);
  j["fidelity_psd"] = optional_real(v.fidelity_psd);
  j["trace_distance_raw_psd"] = real_json(v.trace_distance_raw_psd);
  j["min_eigenvalue"] = real_json(v.min_eigenvalue);
  j["trace"] = real_json(v.trace);
  j["gamma_condition"] = real_json(v.gamma_condition);
  j["warnings"] = v.warnings;
  j["covariance"] = io::rmatrix_to_json(v.covariance);
}

void from_json(const Json& j, ReconstructedState& v) {
  io::check_kind(j, "reconstruction");
  const HilbertConfig cfg = j.at("hilbert").get<HilbertConfig>();
  v.rho_raw = io::cmatrix_from_json(j.at("rho_raw"));
  v.sigma_real = io::rmatrix_from_json(j.at("sigma_real"));
  v.sigma_imag = io::rmatrix_from_json(j.at("sigma_imag"));
  v.rho_psd = DensityMatrix::from_matrix(cfg, io::cmatrix_from_json(j.at("rho_psd")));
  v.fidelity_raw = optional_real(j, "fidelity_raw");
  v.fidelity_psd = optional_real(j, "fidelity_psd");
  v.trace_distance_raw_psd = real_value(j.at("trace_distance_raw_psd"));
  v.min_eigenvalue = real_value(j.at("min_eigenvalue"));
  v.trace = real_value(j.at("trace"));
  v.gamma_condition = real_value(j.at("gamma_condition"));
  v.warnings = j.at("warnings").get<std::vector<std::string>>();
  v.covariance = io::rmatrix_from_json(j.at("covariance"));
  if (v.rho_raw.rows() != v.rho_psd.matrix.rows())
    throw ConfigError("reconstruction: rho_raw and rho_psd differ in size");
}

void to_json(Json& j, const PhaseScanResult& v) {
  j = header("phase_scan");
  j["modes"] = {v.mode_i, v.mode_j};
  j["seed"] = v.seed;
  j["shots"] = optional_shots(v.shots);
  j["phi1"] = v.phi1;
  j["phi2"] = v.phi2;
  j["p_down"] = io::rmatrix_to_json(v.p_down);
  j["fit"] = Json{{"offset", real_json(v.offset)},
                  {"amplitude", real_json(v.amplitude)},
                  {"phase", real_json(v.phase)},
                  {"offset_sigma", real_json(v.offset_sigma)},
                  {"amplitude_sigma", real_json(v.amplitude_sigma)},
                  {"phase_sigma", real_json(v.phase_sigma)},
                  {"residual_rms", real_json(v.residual_rms)},
                  {"chi2", real_json(v.chi2)},
                  {"dof", v.dof}};
  j["off_manifold_population"] = real_json(v.off_manifold_population);
  j["warnings"] = v.warnings;
}

void from_json(const Json& j, PhaseScanResult& v) {
  io::check_kind(j, "phase_scan");
  const auto modes = j.at("modes").get<std::vector<int>>();
  if (modes.size() != 2) throw ConfigError("phase_scan: expected two modes");
  v.mode_i = modes[0];
  v.mode_j = modes[1];
  v.seed = j.at("seed").get<std::uint64_t>();
  v.shots = optional_shots(j, "shots");
  v.phi1 = j.at("phi1").get<std::vector<double>>();
  v.phi2 = j.at("phi2").get<std::vector<double>>();
  v.p_down = io::rmatrix_from_json(j.at("p_down"));
  const Json& f = j.at("fit");
  v.offset = real_value(f.at("offset"));
  v.amplitude = real_value(f.at("amplitude"));
  v.phase = real_value(f.at("phase"));
  v.offset_sigma = real_value(f.at("offset_sigma"));
  v.amplitude_sigma = real_value(f.at("amplitude_sigma"));
  v.phase_sigma = real_value(f.at("phase_sigma"));
  v.residual_rms = real_value(f.at("residual_rms"));
  v.chi2 = real_value(f.at("chi2"));
  v.dof = f.at("dof").get<int>();
  v.off_manifold_population = real_value(j.at("off_manifold_population"));
  v.warnings = j.at("warnings").get<std::vector<std::string>>();
}

void to_json(Json& j, const SpinPhaseCalibration& v) {
  j = header("spin_phase_calibration");
  j["offset_true"] = v.offset_true;
  j["seed"] = v.seed;
  j["shots"] = optional_shots(v.shots);
  j["phi_b"] = v.phi_b;
  j["p_up"] = rvector_json(v.p_up);
  j["phi_b_min"] = real_json(v.phi_b_min);
  j["phi_b_min_deg"] = real_json(v.phi_b_min * 180.0 / kPi);
  j["phi_s"] = real_json(v.phi_s);
  j["phi_b_sigma"] = real_json(v.phi_b_sigma);
  j["amplitude"] = real_json(v.amplitude);
  j["amplitude_sigma"] = real_json(v.amplitude_sigma);
}

void from_json(const Json& j, SpinPhaseCalibration& v) {
  io::check_kind(j, "spin_phase_calibration");
  v.offset_true = j.at("offset_true").get<double>();
  v.seed = j.at("seed").get<std::uint64_t>();
  v.shots = optional_shots(j, "shots");
  v.phi_b = j.at("phi_b").get<std::vector<double>>();
  v.p_up = rvector_value(j.at("p_up"));
  v.phi_b_min = real_value(j.at("phi_b_min"));
  v.phi_s = real_value(j.at("phi_s"));
  v.phi_b_sigma = real_value(j.at("phi_b_sigma"));
  v.amplitude = real_value(j.at("amplitude"));
  v.amplitude_sigma = real_value(j.at("amplitude_sigma"));
}

}  // namespace mmtomo
