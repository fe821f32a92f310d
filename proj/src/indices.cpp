#include "satcalc/indices.hpp"

#include "satcalc/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace satcalc {

void IndexParams::validate() const
{
    if (!(savi_L >= 0.0))
        throw DomainError("SAVI L must be >= 0");
    if (!(evi_G > 0.0))
        throw DomainError("EVI G must be > 0");
    if (!(denom_eps > 0.0))
        throw DomainError("denominator epsilon must be > 0");
    for (double v : {savi_L, evi_G, evi_C1, evi_C2, evi_L, denom_eps})
        if (!std::isfinite(v))
            throw DomainError("index parameters must be finite");
}

std::string_view index_name(IndexKind k)
{
    switch (k) {
    case IndexKind::NDVI: return "NDVI";
    case IndexKind::GNDVI: return "GNDVI";
    case IndexKind::SAVI: return "SAVI";
    case IndexKind::EVI: return "EVI";
    case IndexKind::NDWI: return "NDWI";
    }
    return "?";
}

std::optional<IndexKind> parse_index_kind(std::string_view name)
{
    std::string up(name);
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
    for (auto k : kAllIndexKinds)
        if (index_name(k) == up)
            return k;
    return std::nullopt;
}

namespace kernel {

std::optional<double> normalized_difference(double a, double b, double eps)
{
    const double den = a + b;
    if (std::abs(den) < eps)
        return std::nullopt;
    return (a - b) / den;
}

std::optional<double> savi(double nir, double red, const IndexParams& p)
{
    const double den = nir + red + p.savi_L;
    if (std::abs(den) < p.denom_eps)
        return std::nullopt;
    return (nir - red) * (1.0 + p.savi_L) / den;
}

std::optional<double> evi(double nir, double red, double blue, const IndexParams& p)
{
    const double den = nir + p.evi_C1 * red - p.evi_C2 * blue + p.evi_L;
    if (std::abs(den) < p.denom_eps)
        return std::nullopt;
    return p.evi_G * (nir - red) / den;
}

} // namespace kernel

namespace {

// Applies a per-pixel kernel over the joint mask of the input planes.
template <typename Fn>
Grid2D per_pixel(const Grid2D& like, std::initializer_list<const Grid2D*> inputs, Fn&& fn)
{
    for (const Grid2D* g : inputs)
        if (!g->same_shape(like))
            throw_shape("index inputs differ in shape");
    Grid2D out(like.height(), like.width(), 0.0f, false);
    for (std::size_t i = 0; i < out.size(); ++i) {
        bool ok = true;
        for (const Grid2D* g : inputs)
            ok = ok && g->valid_at(i);
        if (!ok)
            continue;
        const std::optional<double> v = fn(i);
        if (v && std::isfinite(static_cast<float>(*v)))
            out.set_at(i, static_cast<float>(*v), true);
    }
    return out;
}

} // namespace

Grid2D normalized_difference(const Grid2D& a, const Grid2D& b, double eps)
{
    return per_pixel(a, {&a, &b}, [&](std::size_t i) {
        return kernel::normalized_difference(a.value_at(i), b.value_at(i), eps);
    });
}

Grid2D ndvi(const BandStack& x, const IndexParams& p)
{
    return normalized_difference(x.band(Band::B8), x.band(Band::B4), p.denom_eps);
}

Grid2D gndvi(const BandStack& x, const IndexParams& p)
{
    return normalized_difference(x.band(Band::B8), x.band(Band::B3), p.denom_eps);
}

Grid2D savi(const BandStack& x, const IndexParams& p)
{
    const Grid2D& nir = x.band(Band::B8);
    const Grid2D& red = x.band(Band::B4);
    return per_pixel(nir, {&nir, &red},
                     [&](std::size_t i) { return kernel::savi(nir.value_at(i), red.value_at(i), p); });
}

Grid2D evi(const BandStack& x, const IndexParams& p)
{
    const Grid2D& nir = x.band(Band::B8);
    const Grid2D& red = x.band(Band::B4);
    const Grid2D& blue = x.band(Band::B2);
    return per_pixel(nir, {&nir, &red, &blue}, [&](std::size_t i) {
        return kernel::evi(nir.value_at(i), red.value_at(i), blue.value_at(i), p);
    });
}

Grid2D ndwi(const BandStack& x, const IndexParams& p)
{
    return normalized_difference(x.band(Band::B3), x.band(Band::B8), p.denom_eps);
}

Grid2D compute_index(IndexKind kind, const BandStack& x, const IndexParams& p)
{
    switch (kind) {
    case IndexKind::NDVI: return ndvi(x, p);
    case IndexKind::GNDVI: return gndvi(x, p);
    case IndexKind::SAVI: return savi(x, p);
    case IndexKind::EVI: return evi(x, p);
    case IndexKind::NDWI: return ndwi(x, p);
    }
    throw DomainError("unknown index kind");
}

} // namespace satcalc
