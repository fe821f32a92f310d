#pragma once

#include "satcalc/grid.hpp"

#include <optional>
#include <string_view>

namespace satcalc {

enum class ForestType { Coniferous, Broadleaf, Mixed, General };

// AGB = a * H^b, AGB in t/ha and H in metres.
struct AllometricCoeffs {
    double a = 0.067;
    double b = 2.58;
    ForestType forest_type = ForestType::General;
};

struct CarbonParams {
    double carbon_fraction = 0.47;

    void validate() const;
};

AllometricCoeffs coeffs_for(ForestType t);
std::optional<ForestType> parse_forest_type(std::string_view name);
std::string_view forest_type_name(ForestType t);

namespace kernel {
double agb(double height_m, const AllometricCoeffs& c);
double carbon(double agb_t_ha, const CarbonParams& p);
} // namespace kernel

// Throws DomainError for a negative height at a valid pixel.
Grid2D agb_from_height(const Grid2D& height_m, const AllometricCoeffs& c = {});
// Throws DomainError for a negative biomass at a valid pixel.
Grid2D carbon_stock(const Grid2D& agb_t_ha, const CarbonParams& p = {});

// Clamps valid heights to at most `cap_m`; used before building targets.
Grid2D cap_height(const Grid2D& height_m, double cap_m);

} // namespace satcalc
