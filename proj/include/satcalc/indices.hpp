#pragma once

#include "satcalc/grid.hpp"

#include <array>
#include <optional>
#include <string_view>

namespace satcalc {

struct IndexParams {
    double savi_L = 0.5;
    double evi_G = 2.5;
    double evi_C1 = 6.0;
    double evi_C2 = 7.5;
    double evi_L = 1.0;
    // Denominators smaller than this in magnitude turn the pixel into nodata.
    double denom_eps = 1e-8;

    void validate() const;
};

enum class IndexKind { NDVI, GNDVI, SAVI, EVI, NDWI };

inline constexpr std::array<IndexKind, 5> kAllIndexKinds{IndexKind::NDVI, IndexKind::GNDVI, IndexKind::SAVI,
                                                         IndexKind::EVI, IndexKind::NDWI};

std::string_view index_name(IndexKind k);
// Case-insensitive; nullopt for unknown names.
std::optional<IndexKind> parse_index_kind(std::string_view name);

// Scalar kernels. Return nullopt when the denominator is degenerate.
namespace kernel {
std::optional<double> normalized_difference(double a, double b, double eps);
std::optional<double> savi(double nir, double red, const IndexParams& p);
std::optional<double> evi(double nir, double red, double blue, const IndexParams& p);
} // namespace kernel

Grid2D normalized_difference(const Grid2D& a, const Grid2D& b, double eps);

Grid2D ndvi(const BandStack& x, const IndexParams& p = {});
Grid2D gndvi(const BandStack& x, const IndexParams& p = {});
Grid2D savi(const BandStack& x, const IndexParams& p = {});
Grid2D evi(const BandStack& x, const IndexParams& p = {});
Grid2D ndwi(const BandStack& x, const IndexParams& p = {});

Grid2D compute_index(IndexKind kind, const BandStack& x, const IndexParams& p = {});

} // namespace satcalc
