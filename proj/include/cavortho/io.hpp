#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cavortho/core.hpp"
#include "cavortho/metrics.hpp"
#include "cavortho/steering.hpp"

namespace cavortho::io {

// Matrix files come in two flavours:
//
//   text    first line "rows,cols", then one comma-separated row per line;
//           numbers use the shortest representation that round-trips.
//   binary  "CAVM", version byte 1, u32 rows, u32 cols (little-endian),
//           then rows*cols little-endian float64 in row-major order.
//
// Readers detect the flavour from the magic bytes; writers pick binary for
// the .cavm and .bin extensions.

enum class MatrixFormat { Text, Binary };

inline constexpr int kBundleVersion = 1;

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(std::string_view text, const std::string& context);

MatrixFormat format_for(const std::filesystem::path& path);

void write_matrix_text(std::ostream& os, const Matrix& m);
Matrix read_matrix_text(std::istream& is, const std::string& context);
std::string encode_matrix_binary(const Matrix& m);
Matrix decode_matrix_binary(std::string_view bytes, const std::string& context);

void write_matrix(const std::filesystem::path& path, const Matrix& m);
void write_matrix(const std::filesystem::path& path, const Matrix& m, MatrixFormat format);
Matrix read_matrix(const std::filesystem::path& path);

/// Labels: first line holds the concept names, then rows of -1 / +1.
void write_labels(std::ostream& os, const LabelMatrix& t);
void write_labels(const std::filesystem::path& path, const LabelMatrix& t);
LabelMatrix read_labels(std::istream& is, const std::string& context);
LabelMatrix read_labels(const std::filesystem::path& path);

/// Fitted or fine-tuned CAVs with where they came from.
struct CavBundle {
  int format_version = kBundleVersion;
  CavSet cavs;
  /// Ordered key/value pairs: fit method, configuration echo, epochs run.
  std::vector<std::pair<std::string, std::string>> provenance;
  std::optional<MetricsSnapshot> final_snapshot;

  std::optional<std::string> provenance_value(const std::string& key) const;
};

void write_bundle(std::ostream& os, const CavBundle& bundle);
void write_bundle(const std::filesystem::path& path, const CavBundle& bundle);
CavBundle read_bundle(std::istream& is, const std::string& context);
CavBundle read_bundle(const std::filesystem::path& path);

/// Long format: epoch,metric,concept,value. Aggregates use concept "*".
void write_history(std::ostream& os, const MetricsHistory& history,
                   const std::vector<std::string>& concept_names);

/// Cosine matrix, per-concept AUROC and O_i, and macro aggregates.
void write_metrics_report(std::ostream& os, const CosineMatrix& cos, const MetricsSnapshot& snap,
                          const std::vector<std::string>& concept_names);

/// Rows: mode,parameter,concept,role,mean_abs_score_delta where parameter
/// is the step for insertion and tau for removal.
void write_steering_report(std::ostream& os, std::string_view mode, double parameter,
                           const SteeringReport& report,
                           const std::vector<std::string>& concept_names);
void write_steering_header(std::ostream& os);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace cavortho::io
