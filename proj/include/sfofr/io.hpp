#pragma once

// CSV formats. Every number is written with 17 significant digits.
//
//   curves   : "t,<grid...>" then one "id,<values...>" row per curve
//   matrix   : rows of comma-separated numbers, no header
//   weights  : dense n x n matrix, or "# units=<n>" + "i,j,w" header + zero-based triplets
//   coords   : "id,lat,lon" (header optional), degrees
//   surface  : "<row>,t,value" header then one row per grid pair

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sfofr/fdbasis.hpp"
#include "sfofr/model.hpp"
#include "sfofr/spatial.hpp"

namespace sfofr {

enum class WeightsFormat { dense, triplet };

std::string format_double(double x);

/// Writes through a temporary file in the same directory and renames it into place.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_text(const std::filesystem::path& path);

std::string curves_to_csv(const FunctionalDataset& data);
FunctionalDataset curves_from_csv(std::string_view text, const std::string& source = "<memory>");
void write_curves_csv(const std::filesystem::path& path, const FunctionalDataset& data);
FunctionalDataset read_curves_csv(const std::filesystem::path& path);

/// A single curve (e.g. a mean function) in the curve layout.
std::string curve_to_csv(const Vector& grid, const Vector& values, const std::string& id);
std::pair<Vector, Vector> curve_from_csv(std::string_view text, const std::string& source = "<memory>");

std::string matrix_to_csv(const Matrix& M);
Matrix matrix_from_csv(std::string_view text, const std::string& source = "<memory>");
void write_matrix_csv(const std::filesystem::path& path, const Matrix& M);
Matrix read_matrix_csv(const std::filesystem::path& path);

std::string weights_to_csv(const SpatialWeights& W, WeightsFormat format);
SpatialWeights weights_from_csv(std::string_view text, const std::string& source = "<memory>",
                                WeightKind kind = WeightKind::custom);
void write_weights_csv(const std::filesystem::path& path, const SpatialWeights& W, WeightsFormat format);
SpatialWeights read_weights_csv(const std::filesystem::path& path, WeightKind kind = WeightKind::custom);

struct Coordinates {
  std::vector<std::string> ids;
  std::vector<GeoPoint> points;
};

Coordinates coords_from_csv(std::string_view text, const std::string& source = "<memory>");
Coordinates read_coords_csv(const std::filesystem::path& path);
std::string coords_to_csv(const Coordinates& coords);

std::string surface_to_csv(const SurfaceEstimate& surface);
SurfaceEstimate surface_from_csv(std::string_view text, const std::string& source = "<memory>");

}  // namespace sfofr
