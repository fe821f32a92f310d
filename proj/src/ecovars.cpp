#include "satcalc/ecovars.hpp"

#include "satcalc/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace satcalc {

void CarbonParams::validate() const
{
    if (!(carbon_fraction > 0.0 && carbon_fraction < 1.0))
        throw DomainError("carbon fraction must lie in (0, 1)");
}

AllometricCoeffs coeffs_for(ForestType t)
{
    switch (t) {
    case ForestType::Coniferous: return {0.118, 2.53, t};
    case ForestType::Broadleaf: return {0.052, 2.69, t};
    case ForestType::Mixed: return {0.067, 2.58, t};
    case ForestType::General: return {0.067, 2.58, t};
    }
    throw DomainError("unknown forest type");
}

std::string_view forest_type_name(ForestType t)
{
    switch (t) {
    case ForestType::Coniferous: return "coniferous";
    case ForestType::Broadleaf: return "broadleaf";
    case ForestType::Mixed: return "mixed";
    case ForestType::General: return "general";
    }
    return "?";
}

std::optional<ForestType> parse_forest_type(std::string_view name)
{
    std::string low(name);
    std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return std::tolower(c); });
    for (auto t : {ForestType::Coniferous, ForestType::Broadleaf, ForestType::Mixed, ForestType::General})
        if (forest_type_name(t) == low)
            return t;
    return std::nullopt;
}

namespace kernel {

double agb(double height_m, const AllometricCoeffs& c)
{
    if (height_m == 0.0)
        return 0.0;
    return c.a * std::pow(height_m, c.b);
}

double carbon(double agb_t_ha, const CarbonParams& p)
{
    return agb_t_ha * p.carbon_fraction;
}

} // namespace kernel

Grid2D agb_from_height(const Grid2D& height_m, const AllometricCoeffs& c)
{
    if (!(c.a > 0.0) || !(c.b > 0.0))
        throw DomainError("allometric coefficients must be positive");
    Grid2D out(height_m.height(), height_m.width(), 0.0f, false);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!height_m.valid_at(i))
            continue;
        const double h = height_m.value_at(i);
        if (h < 0.0)
            throw DomainError("negative canopy height " + std::to_string(h) + " at pixel " + std::to_string(i));
        out.set_at(i, static_cast<float>(kernel::agb(h, c)), true);
    }
    return out;
}

Grid2D carbon_stock(const Grid2D& agb_t_ha, const CarbonParams& p)
{
    p.validate();
    Grid2D out(agb_t_ha.height(), agb_t_ha.width(), 0.0f, false);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!agb_t_ha.valid_at(i))
            continue;
        const double v = agb_t_ha.value_at(i);
        if (v < 0.0)
            throw DomainError("negative biomass " + std::to_string(v) + " at pixel " + std::to_string(i));
        out.set_at(i, static_cast<float>(kernel::carbon(v, p)), true);
    }
    return out;
}

Grid2D cap_height(const Grid2D& height_m, double cap_m)
{
    Grid2D out = height_m;
    const float cap = static_cast<float>(cap_m);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out.valid_at(i) && out.value_at(i) > cap)
            out.set_at(i, cap, true);
    return out;
}

} // namespace satcalc
