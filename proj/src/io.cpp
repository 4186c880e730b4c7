#include "sfofr/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "sfofr/error.hpp"

namespace sfofr {

namespace {

struct Line {
  std::size_t number;
  std::string_view text;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Non-blank lines with their one-based numbers.
std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> out;
  std::size_t number = 0;
  while (!text.empty()) {
    ++number;
    const auto end = text.find('\n');
    std::string_view line = text.substr(0, end);
    text = end == std::string_view::npos ? std::string_view{} : text.substr(end + 1);
    line = trim(line);
    if (!line.empty()) out.push_back({number, line});
  }
  return out;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  for (;;) {
    const auto comma = line.find(',');
    out.push_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return out;
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what) {
  throw ParseError(source + ":" + std::to_string(line) + ": " + what);
}

double parse_number(std::string_view field, const std::string& source, std::size_t line) {
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (field.empty() || ec != std::errc{} || ptr != last)
    fail(source, line, "expected a number, got '" + std::string(field) + "'");
  return value;
}

Index parse_index(std::string_view field, const std::string& source, std::size_t line) {
  long long value = 0;
  const auto* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), last, value);
  if (field.empty() || ec != std::errc{} || ptr != last || value < 0)
    fail(source, line, "expected a non-negative integer, got '" + std::string(field) + "'");
  return static_cast<Index>(value);
}

bool looks_numeric(std::string_view field) {
  double v = 0.0;
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  return !field.empty() && ec == std::errc{} && ptr == field.data() + field.size();
}

template <class F>
auto relabel(const std::string& source, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (ParseError&) {
    throw;
  } catch (Error& e) {
    e.add_context(source);
    throw;
  }
}

void append_row(std::string& out, const double* values, Index count, Index stride) {
  for (Index j = 0; j < count; ++j) {
    if (j > 0) out += ',';
    out += format_double(values[j * stride]);
  }
  out += '\n';
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text_atomic(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open " + tmp.string() + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    os.flush();
    if (!os) throw DataError("write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("cannot move output into place at " + path.string());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string curves_to_csv(const FunctionalDataset& data) {
  std::string out = "t";
  for (Index r = 0; r < data.grid_size(); ++r) out += "," + format_double(data.grid()[r]);
  out += '\n';
  const Matrix& v = data.values();
  for (Index i = 0; i < data.num_curves(); ++i) {
    out += data.ids()[static_cast<std::size_t>(i)];
    out += ',';
    append_row(out, v.data() + i, v.cols(), v.rows());
  }
  return out;
}

namespace {

struct RawCurves {
  Vector grid;
  Matrix values;
  std::vector<std::string> ids;
};

RawCurves parse_curves(std::string_view text, const std::string& source) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError(source + ": empty curve file");
  const auto header = split_fields(lines[0].text);
  if (header[0] != "t") fail(source, lines[0].number, "curve header must start with 't'");
  const Index T = static_cast<Index>(header.size()) - 1;
  if (T < 1) fail(source, lines[0].number, "curve header lists no grid points");
  Vector grid(T);
  for (Index r = 0; r < T; ++r) grid[r] = parse_number(header[static_cast<std::size_t>(r + 1)], source, lines[0].number);
  const Index n = static_cast<Index>(lines.size()) - 1;
  Matrix values(n, T);
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Line& line = lines[static_cast<std::size_t>(i + 1)];
    const auto fields = split_fields(line.text);
    if (static_cast<Index>(fields.size()) != T + 1)
      fail(source, line.number, "expected " + std::to_string(T + 1) + " fields, got " + std::to_string(fields.size()));
    if (fields[0].empty()) fail(source, line.number, "empty curve id");
    ids.emplace_back(fields[0]);
    for (Index r = 0; r < T; ++r) values(i, r) = parse_number(fields[static_cast<std::size_t>(r + 1)], source, line.number);
  }
  return RawCurves{std::move(grid), std::move(values), std::move(ids)};
}

}  // namespace

FunctionalDataset curves_from_csv(std::string_view text, const std::string& source) {
  RawCurves raw = parse_curves(text, source);
  return relabel(source, [&] { return FunctionalDataset(std::move(raw.grid), std::move(raw.values), std::move(raw.ids)); });
}

std::string curve_to_csv(const Vector& grid, const Vector& values, const std::string& id) {
  if (grid.size() != values.size()) throw ParameterError("curve: grid and values differ in length");
  std::string out = "t";
  for (Index r = 0; r < grid.size(); ++r) out += "," + format_double(grid[r]);
  out += "\n" + id + ",";
  append_row(out, values.data(), values.size(), 1);
  return out;
}

std::pair<Vector, Vector> curve_from_csv(std::string_view text, const std::string& source) {
  RawCurves raw = parse_curves(text, source);
  if (raw.values.rows() != 1) throw ParseError(source + ": expected exactly one curve");
  return {std::move(raw.grid), raw.values.row(0).transpose()};
}

void write_curves_csv(const std::filesystem::path& path, const FunctionalDataset& data) {
  write_text_atomic(path, curves_to_csv(data));
}

FunctionalDataset read_curves_csv(const std::filesystem::path& path) {
  return curves_from_csv(read_text(path), path.string());
}

std::string matrix_to_csv(const Matrix& M) {
  std::string out;
  for (Index i = 0; i < M.rows(); ++i) append_row(out, M.data() + i, M.cols(), M.rows());
  return out;
}

Matrix matrix_from_csv(std::string_view text, const std::string& source) {
  const auto lines = split_lines(text);
  if (lines.empty()) return Matrix(0, 0);
  const std::size_t cols = split_fields(lines[0].text).size();
  Matrix M(static_cast<Index>(lines.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto fields = split_fields(lines[i].text);
    if (fields.size() != cols)
      fail(source, lines[i].number, "expected " + std::to_string(cols) + " fields, got " + std::to_string(fields.size()));
    for (std::size_t j = 0; j < cols; ++j)
      M(static_cast<Index>(i), static_cast<Index>(j)) = parse_number(fields[j], source, lines[i].number);
  }
  return M;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& M) { write_text_atomic(path, matrix_to_csv(M)); }

Matrix read_matrix_csv(const std::filesystem::path& path) { return matrix_from_csv(read_text(path), path.string()); }

std::string weights_to_csv(const SpatialWeights& W, WeightsFormat format) {
  if (format == WeightsFormat::dense) return matrix_to_csv(W.dense());
  std::string out = "# units=" + std::to_string(W.size()) + "\ni,j,w\n";
  auto entries = W.triplets();
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row() != b.row() ? a.row() < b.row() : a.col() < b.col();
  });
  for (const auto& e : entries) {
    if (e.value() == 0.0) continue;
    out += std::to_string(e.row()) + "," + std::to_string(e.col()) + "," + format_double(e.value()) + "\n";
  }
  return out;
}

SpatialWeights weights_from_csv(std::string_view text, const std::string& source, WeightKind kind) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError(source + ": empty weight file");
  if (lines[0].text.front() != '#') {
    const Matrix M = matrix_from_csv(text, source);
    if (M.rows() != M.cols())
      throw ParseError(source + ": dense weight matrix is " + std::to_string(M.rows()) + " x " +
                       std::to_string(M.cols()));
    return relabel(source, [&] { return SpatialWeights::from_dense(M, kind); });
  }
  const std::string_view tag = trim(lines[0].text.substr(1));
  constexpr std::string_view prefix = "units=";
  if (tag.substr(0, prefix.size()) != prefix) fail(source, lines[0].number, "expected '# units=<n>'");
  const Index n = parse_index(trim(tag.substr(prefix.size())), source, lines[0].number);
  if (lines.size() < 2 || split_fields(lines[1].text) != std::vector<std::string_view>{"i", "j", "w"})
    fail(source, lines.size() < 2 ? lines[0].number + 1 : lines[1].number, "expected header 'i,j,w'");
  std::vector<Triplet> entries;
  std::map<std::pair<Index, Index>, std::size_t> seen;
  for (std::size_t k = 2; k < lines.size(); ++k) {
    const auto fields = split_fields(lines[k].text);
    if (fields.size() != 3) fail(source, lines[k].number, "expected 3 fields, got " + std::to_string(fields.size()));
    const Index i = parse_index(fields[0], source, lines[k].number);
    const Index j = parse_index(fields[1], source, lines[k].number);
    const double w = parse_number(fields[2], source, lines[k].number);
    if (i >= n || j >= n) fail(source, lines[k].number, "index out of range for " + std::to_string(n) + " units");
    if (!seen.emplace(std::make_pair(i, j), lines[k].number).second)
      fail(source, lines[k].number, "duplicate entry (" + std::to_string(i) + "," + std::to_string(j) + ")");
    entries.emplace_back(i, j, w);
  }
  return relabel(source, [&] { return SpatialWeights::from_triplets(n, entries, kind); });
}

void write_weights_csv(const std::filesystem::path& path, const SpatialWeights& W, WeightsFormat format) {
  write_text_atomic(path, weights_to_csv(W, format));
}

SpatialWeights read_weights_csv(const std::filesystem::path& path, WeightKind kind) {
  return weights_from_csv(read_text(path), path.string(), kind);
}

Coordinates coords_from_csv(std::string_view text, const std::string& source) {
  const auto lines = split_lines(text);
  Coordinates out;
  std::size_t start = 0;
  if (!lines.empty()) {
    const auto fields = split_fields(lines[0].text);
    if (fields.size() == 3 && !looks_numeric(fields[1])) start = 1;
  }
  for (std::size_t k = start; k < lines.size(); ++k) {
    const auto fields = split_fields(lines[k].text);
    if (fields.size() != 3) fail(source, lines[k].number, "expected id,lat,lon");
    const double lat = parse_number(fields[1], source, lines[k].number);
    const double lon = parse_number(fields[2], source, lines[k].number);
    if (!(lat >= -90.0 && lat <= 90.0)) fail(source, lines[k].number, "latitude outside [-90, 90]");
    if (!(lon >= -180.0 && lon <= 180.0)) fail(source, lines[k].number, "longitude outside [-180, 180]");
    out.ids.emplace_back(fields[0]);
    out.points.push_back({lat, lon});
  }
  if (out.points.empty()) throw ParseError(source + ": no coordinates");
  return out;
}

Coordinates read_coords_csv(const std::filesystem::path& path) {
  return coords_from_csv(read_text(path), path.string());
}

std::string coords_to_csv(const Coordinates& coords) {
  std::string out = "id,lat,lon\n";
  for (std::size_t k = 0; k < coords.points.size(); ++k)
    out += coords.ids[k] + "," + format_double(coords.points[k].lat) + "," + format_double(coords.points[k].lon) + "\n";
  return out;
}

std::string surface_to_csv(const SurfaceEstimate& surface) {
  std::string out = surface.kind == SurfaceKind::rho ? "u,t,value\n" : "s,t,value\n";
  for (Index a = 0; a < surface.row_grid.size(); ++a)
    for (Index b = 0; b < surface.col_grid.size(); ++b)
      out += format_double(surface.row_grid[a]) + "," + format_double(surface.col_grid[b]) + "," +
             format_double(surface.values(a, b)) + "\n";
  return out;
}

SurfaceEstimate surface_from_csv(std::string_view text, const std::string& source) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError(source + ": empty surface file");
  const auto header = split_fields(lines[0].text);
  SurfaceEstimate s;
  if (header == std::vector<std::string_view>{"u", "t", "value"}) {
    s.kind = SurfaceKind::rho;
  } else if (header == std::vector<std::string_view>{"s", "t", "value"}) {
    s.kind = SurfaceKind::beta;
  } else {
    fail(source, lines[0].number, "expected header 'u,t,value' or 's,t,value'");
  }
  std::vector<double> rows, cols, vals;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto f = split_fields(lines[k].text);
    if (f.size() != 3) fail(source, lines[k].number, "expected 3 fields");
    const double r = parse_number(f[0], source, lines[k].number);
    const double c = parse_number(f[1], source, lines[k].number);
    if (rows.empty() || rows.back() != r) rows.push_back(r);
    if (rows.size() == 1) cols.push_back(c);
    vals.push_back(parse_number(f[2], source, lines[k].number));
  }
  if (vals.size() != rows.size() * cols.size()) throw ParseError(source + ": surface is not a full grid");
  s.row_grid = Eigen::Map<const Vector>(rows.data(), static_cast<Index>(rows.size()));
  s.col_grid = Eigen::Map<const Vector>(cols.data(), static_cast<Index>(cols.size()));
  s.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      vals.data(), s.row_grid.size(), s.col_grid.size());
  return s;
}

}  // namespace sfofr
