#include "cavortho/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace cavortho::io {
namespace {

constexpr std::array<char, 4> kMagic{'C', 'A', 'V', 'M'};
constexpr std::uint8_t kBinaryVersion = 1;

[[noreturn]] void malformed(const std::string& context, const std::string& msg) {
  throw Error(ErrorCode::InvalidMatrix, context + ": " + msg);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool next_line(std::istream& is, std::string& line, std::size_t& line_no) {
  if (!std::getline(is, line)) return false;
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

Index parse_index(std::string_view text, const std::string& context) {
  long long v = 0;
  text = trim(text);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || v < 0) {
    malformed(context, "expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return static_cast<Index>(v);
}

std::pair<Index, Index> parse_shape(std::string_view line, const std::string& context) {
  const auto parts = split(line, ',');
  if (parts.size() != 2) malformed(context, "expected header 'rows,cols'");
  return {parse_index(parts[0], context), parse_index(parts[1], context)};
}

std::string join_doubles(const Vector& v) {
  std::string out;
  for (Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

Vector parse_doubles(std::string_view text, const std::string& context) {
  if (trim(text).empty()) return Vector();
  const auto parts = split(text, ',');
  Vector v(static_cast<Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) v[static_cast<Index>(i)] = parse_double(parts[i], context);
  return v;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
  }
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  return os;
}

void finish(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw Error(ErrorCode::InvalidMatrix, "cannot format number");
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text, const std::string& context) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    malformed(context, "'" + std::string(text) + "' is not a number");
  }
  return v;
}

MatrixFormat format_for(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".cavm" || ext == ".bin") ? MatrixFormat::Binary : MatrixFormat::Text;
}

void write_matrix_text(std::ostream& os, const Matrix& m) {
  os << m.rows() << ',' << m.cols() << '\n';
  std::string line;
  for (Index i = 0; i < m.rows(); ++i) {
    line.clear();
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) line += ',';
      line += format_double(m(i, j));
    }
    os << line << '\n';
  }
}

Matrix read_matrix_text(std::istream& is, const std::string& context) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_line(is, line, line_no)) malformed(context, "missing 'rows,cols' header");
  const auto [rows, cols] = parse_shape(line, context + ":1");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const std::string where = context + ":" + std::to_string(line_no + 1);
    if (!next_line(is, line, line_no)) malformed(where, "expected " + std::to_string(rows) + " rows");
    const auto parts = split(line, ',');
    if (static_cast<Index>(parts.size()) != cols) {
      malformed(where, "expected " + std::to_string(cols) + " values, got " +
                           std::to_string(parts.size()));
    }
    for (Index j = 0; j < cols; ++j) m(i, j) = parse_double(parts[static_cast<std::size_t>(j)], where);
  }
  return m;
}

std::string encode_matrix_binary(const Matrix& m) {
  if (m.rows() > 0xFFFFFFFFLL || m.cols() > 0xFFFFFFFFLL) {
    throw Error(ErrorCode::InvalidMatrix, "matrix too large for the binary format");
  }
  std::string out(kMagic.begin(), kMagic.end());
  out.push_back(static_cast<char>(kBinaryVersion));
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.reserve(out.size() + static_cast<std::size_t>(m.size()) * 8);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const auto bits = std::bit_cast<std::uint64_t>(m(i, j));
      for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
    }
  }
  return out;
}

Matrix decode_matrix_binary(std::string_view bytes, const std::string& context) {
  constexpr std::size_t header = 4 + 1 + 4 + 4;
  if (bytes.size() < header || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    malformed(context, "missing CAVM magic");
  }
  if (static_cast<std::uint8_t>(bytes[4]) != kBinaryVersion) {
    malformed(context, "unsupported binary version " +
                           std::to_string(static_cast<unsigned char>(bytes[4])));
  }
  const std::uint64_t rows = get_u32(bytes, 5);
  const std::uint64_t cols = get_u32(bytes, 9);
  if (bytes.size() != header + rows * cols * 8) {
    malformed(context, "payload length does not match " + std::to_string(rows) + "x" +
                           std::to_string(cols));
  }
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  std::size_t at = header;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + b])) << (8 * b);
      }
      m(i, j) = std::bit_cast<double>(bits);
      at += 8;
    }
  }
  return m;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << is.rdbuf();
  if (is.bad()) throw Error(ErrorCode::IoError, "failed reading '" + path.string() + "'");
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  auto os = open_out(path);
  os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  finish(os, path);
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  write_matrix(path, m, format_for(path));
}

void write_matrix(const std::filesystem::path& path, const Matrix& m, MatrixFormat format) {
  if (format == MatrixFormat::Binary) {
    write_file(path, encode_matrix_binary(m));
    return;
  }
  auto os = open_out(path);
  write_matrix_text(os, m);
  finish(os, path);
}

Matrix read_matrix(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 4 && std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    return decode_matrix_binary(bytes, path.string());
  }
  std::istringstream is(bytes);
  return read_matrix_text(is, path.string());
}

void write_labels(std::ostream& os, const LabelMatrix& t) {
  const auto& names = t.concept_names();
  for (std::size_t c = 0; c < names.size(); ++c) os << (c ? "," : "") << names[c];
  os << '\n';
  for (Index i = 0; i < t.samples(); ++i) {
    for (Index c = 0; c < t.concepts(); ++c) os << (c ? "," : "") << t.data()(i, c);
    os << '\n';
  }
}

void write_labels(const std::filesystem::path& path, const LabelMatrix& t) {
  auto os = open_out(path);
  write_labels(os, t);
  finish(os, path);
}

LabelMatrix read_labels(std::istream& is, const std::string& context) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_line(is, line, line_no)) malformed(context, "missing concept-name header");
  std::vector<std::string> names;
  for (auto part : split(line, ',')) names.emplace_back(trim(part));
  const auto n = static_cast<Index>(names.size());

  std::vector<int> values;
  Index rows = 0;
  while (next_line(is, line, line_no)) {
    if (trim(line).empty()) continue;
    const std::string where = context + ":" + std::to_string(line_no);
    const auto parts = split(line, ',');
    if (static_cast<Index>(parts.size()) != n) {
      malformed(where, "expected " + std::to_string(n) + " labels, got " +
                           std::to_string(parts.size()));
    }
    for (auto p : parts) {
      p = trim(p);
      if (p == "1" || p == "+1") {
        values.push_back(1);
      } else if (p == "-1") {
        values.push_back(-1);
      } else {
        malformed(where, "label '" + std::string(p) + "' is not -1 or +1");
      }
    }
    ++rows;
  }
  LabelData data(rows, n);
  for (Index i = 0; i < rows; ++i) {
    for (Index c = 0; c < n; ++c) data(i, c) = values[static_cast<std::size_t>(i * n + c)];
  }
  return LabelMatrix(std::move(data), std::move(names));
}

LabelMatrix read_labels(const std::filesystem::path& path) {
  std::istringstream is(read_file(path));
  return read_labels(is, path.string());
}

std::optional<std::string> CavBundle::provenance_value(const std::string& key) const {
  for (const auto& [k, v] : provenance) {
    if (k == key) return v;
  }
  return std::nullopt;
}

void write_bundle(std::ostream& os, const CavBundle& bundle) {
  os << "format_version = " << bundle.format_version << '\n';
  const auto& names = bundle.cavs.concept_names();
  os << "concept_names = ";
  for (std::size_t c = 0; c < names.size(); ++c) os << (c ? "," : "") << names[c];
  os << '\n';
  for (const auto& [k, v] : bundle.provenance) os << "provenance." << k << " = " << v << '\n';
  if (const auto& s = bundle.final_snapshot) {
    os << "snapshot.epoch = " << s->epoch << '\n';
    os << "snapshot.macro_auroc = " << format_double(s->macro_auroc) << '\n';
    os << "snapshot.avg_orthogonality = " << format_double(s->avg_orthogonality) << '\n';
    os << "snapshot.auroc = " << join_doubles(s->per_concept_auroc) << '\n';
    os << "snapshot.orthogonality = " << join_doubles(s->per_concept_orthogonality) << '\n';
  }
  os << "vectors =\n";
  write_matrix_text(os, bundle.cavs.vectors());
  os << "biases =\n";
  write_matrix_text(os, Matrix(bundle.cavs.biases()));
}

void write_bundle(const std::filesystem::path& path, const CavBundle& bundle) {
  auto os = open_out(path);
  write_bundle(os, bundle);
  finish(os, path);
}

CavBundle read_bundle(std::istream& is, const std::string& context) {
  std::optional<int> version;
  std::vector<std::string> names;
  std::vector<std::pair<std::string, std::string>> provenance;
  std::optional<Matrix> vectors;
  std::optional<Matrix> biases;
  MetricsSnapshot snap;
  bool have_snapshot = false;

  std::string line;
  std::size_t line_no = 0;
  while (next_line(is, line, line_no)) {
    if (trim(line).empty() || trim(line).front() == '#') continue;
    const std::string where = context + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) malformed(where, "expected 'key = value'");
    const std::string key(trim(std::string_view(line).substr(0, eq)));
    const std::string value(trim(std::string_view(line).substr(eq + 1)));

    if (key == "vectors" || key == "biases") {
      Matrix m = read_matrix_text(is, where);
      line_no += static_cast<std::size_t>(m.rows()) + 1;
      (key == "vectors" ? vectors : biases) = std::move(m);
    } else if (key == "format_version") {
      version = static_cast<int>(parse_index(value, where));
    } else if (key == "concept_names") {
      for (auto part : split(value, ',')) names.emplace_back(trim(part));
    } else if (key.rfind("provenance.", 0) == 0) {
      provenance.emplace_back(key.substr(11), value);
    } else if (key.rfind("snapshot.", 0) == 0) {
      have_snapshot = true;
      const std::string field = key.substr(9);
      if (field == "epoch") {
        snap.epoch = static_cast<int>(parse_index(value, where));
      } else if (field == "macro_auroc") {
        snap.macro_auroc = parse_double(value, where);
      } else if (field == "avg_orthogonality") {
        snap.avg_orthogonality = parse_double(value, where);
      } else if (field == "auroc") {
        snap.per_concept_auroc = parse_doubles(value, where);
      } else if (field == "orthogonality") {
        snap.per_concept_orthogonality = parse_doubles(value, where);
      } else {
        malformed(where, "unknown snapshot field '" + field + "'");
      }
    } else {
      malformed(where, "unknown key '" + key + "'");
    }
  }

  if (!version) malformed(context, "missing format_version");
  if (*version != kBundleVersion) {
    malformed(context, "unsupported bundle version " + std::to_string(*version));
  }
  if (!vectors || !biases) malformed(context, "bundle needs both 'vectors' and 'biases'");
  if (biases->cols() != 1) malformed(context, "biases must be a single column");
  CavBundle bundle{*version, CavSet(std::move(*vectors), biases->col(0), std::move(names)),
                   std::move(provenance), std::nullopt};
  if (have_snapshot) bundle.final_snapshot = std::move(snap);
  return bundle;
}

CavBundle read_bundle(const std::filesystem::path& path) {
  std::istringstream is(read_file(path));
  return read_bundle(is, path.string());
}

void write_history(std::ostream& os, const MetricsHistory& history,
                   const std::vector<std::string>& concept_names) {
  os << "epoch,metric,concept,value\n";
  for (const auto& s : history.snapshots()) {
    for (std::size_t c = 0; c < concept_names.size(); ++c) {
      os << s.epoch << ",auroc," << concept_names[c] << ','
         << format_double(s.per_concept_auroc[static_cast<Index>(c)]) << '\n';
    }
    for (std::size_t c = 0; c < concept_names.size(); ++c) {
      os << s.epoch << ",orthogonality," << concept_names[c] << ','
         << format_double(s.per_concept_orthogonality[static_cast<Index>(c)]) << '\n';
    }
    os << s.epoch << ",macro_auroc,*," << format_double(s.macro_auroc) << '\n';
    os << s.epoch << ",avg_orthogonality,*," << format_double(s.avg_orthogonality) << '\n';
  }
}

void write_metrics_report(std::ostream& os, const CosineMatrix& cos, const MetricsSnapshot& snap,
                          const std::vector<std::string>& concept_names) {
  os << "# cosine\nconcept";
  for (const auto& n : concept_names) os << ',' << n;
  os << '\n';
  for (Index i = 0; i < cos.size(); ++i) {
    os << concept_names[static_cast<std::size_t>(i)];
    for (Index j = 0; j < cos.size(); ++j) os << ',' << format_double(cos(i, j));
    os << '\n';
  }
  os << "# per_concept\nconcept,auroc,orthogonality\n";
  for (Index i = 0; i < cos.size(); ++i) {
    os << concept_names[static_cast<std::size_t>(i)] << ','
       << format_double(snap.per_concept_auroc[i]) << ','
       << format_double(snap.per_concept_orthogonality[i]) << '\n';
  }
  os << "# aggregate\nmacro_auroc," << format_double(snap.macro_auroc) << '\n'
     << "avg_orthogonality," << format_double(snap.avg_orthogonality) << '\n';
}

void write_steering_header(std::ostream& os) {
  os << "mode,parameter,concept,role,mean_abs_score_delta\n";
}

void write_steering_report(std::ostream& os, std::string_view mode, double parameter,
                           const SteeringReport& report,
                           const std::vector<std::string>& concept_names) {
  for (std::size_t c = 0; c < concept_names.size(); ++c) {
    const auto idx = static_cast<Index>(c);
    const bool target = idx == report.target_concept;
    os << mode << ',' << format_double(parameter) << ',' << concept_names[c] << ',' << (target ? "target" : "other")
       << ',' << format_double(target ? report.target_score_delta : report.per_concept_score_delta[idx])
       << '\n';
  }
}

}  // namespace cavortho::io
