#ifndef MMTOMO_IO_HPP
#define MMTOMO_IO_HPP

// JSON and CSV forms of every artifact exchanged between CLI stages.
//
// Artifacts are JSON objects with a "schema" field ("mmtomo/1") and a
// "kind" field naming the type. Complex scalars are {"re": .., "im": ..};
// complex matrices are {"real": [[..]], "imag": [[..]]}. Keys keep their
// insertion order, so a given value always serializes to the same bytes.

#include <string>

#include <json.hpp>

#include "mmtomo/fitting.hpp"
#include "mmtomo/measurement.hpp"
#include "mmtomo/reconstruction.hpp"
#include "mmtomo/verification.hpp"

namespace mmtomo {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchemaVersion = "mmtomo/1";

namespace io {

Json complex_to_json(Complex z);
Complex complex_from_json(const Json& j);
Json cmatrix_to_json(const CMatrix& m);
CMatrix cmatrix_from_json(const Json& j);
Json rmatrix_to_json(const RMatrix& m);
RMatrix rmatrix_from_json(const Json& j);

/// Throws ConfigError unless j carries the current schema and `kind`.
void check_kind(const Json& j, const std::string& kind);

/// Parses a file; syntax errors and missing files become ConfigError.
Json read_json_file(const std::string& path);
/// Pretty-printed with a trailing newline.
std::string dump(const Json& j);
/// Creates parent directories as needed.
void write_text_file(const std::string& path, const std::string& content);

// CSV mirrors for plotting. Numbers use 12 significant digits.
std::string scan_csv(const TimeScanData& scan);
std::string fock_csv(const FockDistribution& p);
std::string reconstruction_csv(const ReconstructedState& r);
std::string phase_scan_csv(const PhaseScanResult& r);
std::string spin_phase_csv(const SpinPhaseCalibration& c);

}  // namespace io

// nlohmann ADL hooks. from_json throws nlohmann exceptions on malformed
// input; callers that face user data go through io::parse.
void to_json(Json& j, const HilbertConfig& v);
void from_json(const Json& j, HilbertConfig& v);
void to_json(Json& j, const RabiCalibration& v);
void from_json(const Json& j, RabiCalibration& v);
void to_json(Json& j, const PulseOp& v);
void from_json(const Json& j, PulseOp& v);
void to_json(Json& j, const PulseSequence& v);
void from_json(const Json& j, PulseSequence& v);
void to_json(Json& j, const NamedState& v);
void from_json(const Json& j, NamedState& v);
void to_json(Json& j, const FitDiagnostics& v);
void from_json(const Json& j, FitDiagnostics& v);
void to_json(Json& j, const ScalarFit& v);
void from_json(const Json& j, ScalarFit& v);
void to_json(Json& j, const DisplacementGrid& v);
void from_json(const Json& j, DisplacementGrid& v);

// Top-level artifacts (these carry schema and kind).
void to_json(Json& j, const TimeScanData& v);
void from_json(const Json& j, TimeScanData& v);
void to_json(Json& j, const FockDistribution& v);
void from_json(const Json& j, FockDistribution& v);
void to_json(Json& j, const QDataset& v);
void from_json(const Json& j, QDataset& v);
void to_json(Json& j, const ReconstructedState& v);
void from_json(const Json& j, ReconstructedState& v);
void to_json(Json& j, const PhaseScanResult& v);
void from_json(const Json& j, PhaseScanResult& v);
void to_json(Json& j, const SpinPhaseCalibration& v);
void from_json(const Json& j, SpinPhaseCalibration& v);

namespace io {

/// j.get<T>() with nlohmann errors rethrown as ConfigError naming `what`.
template <typename T>
T parse(const Json& j, const std::string& what) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

}  // namespace io

}  // namespace mmtomo

#endif  // MMTOMO_IO_HPP
