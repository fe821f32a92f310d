#include "oracle.hpp"
#include "satcalc/error.hpp"
#include "satcalc/indices.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace satcalc;
using testutil::uniform_bands;

namespace {

float at0(const Grid2D& g)
{
    REQUIRE(g.valid(0, 0));
    return g(0, 0);
}

} // namespace

TEST_CASE("normalized difference examples")
{
    const Grid2D a4(1, 1, 0.4f), a6(1, 1, 0.6f), b2(1, 1, 0.2f), z(1, 1, 0.0f);
    CHECK(at0(normalized_difference(a4, a4, 1e-8)) == 0.0f);
    CHECK(at0(normalized_difference(a6, b2, 1e-8)) == doctest::Approx(0.5).epsilon(1e-7));
    CHECK_FALSE(normalized_difference(z, z, 1e-8).valid(0, 0));
    CHECK_THROWS_AS(normalized_difference(a4, Grid2D(2, 1), 1e-8), ShapeError);
}

TEST_CASE("per-index worked examples")
{
    //                      B2    B3    B4    B8
    CHECK(at0(ndvi(uniform_bands(1, 1, 0.1f, 0.1f, 0.2f, 0.6f))) == doctest::Approx(0.5).epsilon(1e-7));
    CHECK(at0(ndvi(uniform_bands(1, 1, 0.1f, 0.1f, 0.3f, 0.3f))) == 0.0f);
    CHECK(at0(ndvi(uniform_bands(1, 1, 0.1f, 0.1f, 0.0f, 0.8f))) == 1.0f);

    CHECK(at0(gndvi(uniform_bands(1, 1, 0.1f, 0.3f, 0.2f, 0.6f))) == doctest::Approx(1.0 / 3.0).epsilon(1e-7));
    CHECK(at0(gndvi(uniform_bands(1, 1, 0.1f, 0.4f, 0.2f, 0.4f))) == 0.0f);
    CHECK(at0(gndvi(uniform_bands(1, 1, 0.1f, 0.5f, 0.2f, 0.0f))) == -1.0f);

    CHECK(at0(savi(uniform_bands(1, 1, 0.1f, 0.1f, 0.2f, 0.6f))) == doctest::Approx(0.6 / 1.3).epsilon(1e-7));
    CHECK(at0(savi(uniform_bands(1, 1, 0.1f, 0.1f, 0.35f, 0.35f))) == 0.0f);

    CHECK(at0(evi(uniform_bands(1, 1, 0.1f, 0.1f, 0.2f, 0.5f))) == doctest::Approx(0.75 / 1.95).epsilon(1e-7));
    CHECK(at0(evi(uniform_bands(1, 1, 0.1f, 0.1f, 0.3f, 0.3f))) == 0.0f);

    CHECK(at0(ndwi(uniform_bands(1, 1, 0.1f, 0.4f, 0.2f, 0.1f))) == doctest::Approx(0.6).epsilon(1e-7));
    CHECK(at0(ndwi(uniform_bands(1, 1, 0.1f, 0.25f, 0.2f, 0.25f))) == 0.0f);
    CHECK(at0(ndwi(uniform_bands(1, 1, 0.1f, 0.0f, 0.2f, 0.3f))) == -1.0f);
}

TEST_CASE("a vanishing EVI denominator yields nodata")
{
    // B8 + 6 B4 - 7.5 B2 + 1 == 0 exactly in the scalar kernel
    const IndexParams p;
    CHECK_FALSE(kernel::evi(0.5, 0.0, 0.2, p).has_value());
    // dyadic inputs keep the grid path exact: 0.875 + 0 - 7.5 * 0.25 + 1 == 0
    CHECK_FALSE(evi(uniform_bands(1, 1, 0.25f, 0.1f, 0.0f, 0.875f)).valid(0, 0));
    CHECK(evi(uniform_bands(1, 1, 0.25f, 0.1f, 0.0f, 0.9f)).valid(0, 0));
}

TEST_CASE("SAVI with L = 0 is NDVI")
{
    std::mt19937_64 rng(8);
    const BandStack x = testutil::random_bands(rng, 16, 16);
    IndexParams p;
    p.savi_L = 0.0;
    CHECK(savi(x, p) == ndvi(x, p));
}

TEST_CASE("compute_index dispatches and propagates nodata")
{
    std::mt19937_64 rng(4);
    const BandStack x = testutil::random_bands(rng, 9, 7, 0.2);
    CHECK(compute_index(IndexKind::NDVI, x) == ndvi(x));
    CHECK(compute_index(IndexKind::GNDVI, x) == gndvi(x));
    CHECK(compute_index(IndexKind::SAVI, x) == savi(x));
    CHECK(compute_index(IndexKind::EVI, x) == evi(x));
    CHECK(compute_index(IndexKind::NDWI, x) == ndwi(x));
    for (IndexKind k : kAllIndexKinds) {
        const Grid2D g = compute_index(k, x);
        CHECK(g.height() == 9);
        CHECK(g.width() == 7);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!x[0].valid_at(i))
                CHECK_FALSE(g.valid_at(i));
    }
}

TEST_CASE("index names parse case-insensitively")
{
    CHECK(parse_index_kind("ndvi") == IndexKind::NDVI);
    CHECK(parse_index_kind("EVI") == IndexKind::EVI);
    CHECK(parse_index_kind("Ndwi") == IndexKind::NDWI);
    CHECK_FALSE(parse_index_kind("bogus").has_value());
    for (IndexKind k : kAllIndexKinds)
        CHECK(parse_index_kind(index_name(k)) == k);
}

TEST_CASE("parameter validation")
{
    IndexParams p;
    CHECK_NOTHROW(p.validate());
    p.savi_L = -0.1;
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = {};
    p.evi_G = 0.0;
    CHECK_THROWS_AS(p.validate(), DomainError);
    p = {};
    p.denom_eps = 0.0;
    CHECK_THROWS_AS(p.validate(), DomainError);
}

TEST_CASE("ratio indices stay within [-1, 1] for non-negative bands")
{
    std::mt19937_64 rng(21);
    const BandStack x = testutil::random_bands(rng, 40, 40, 0.05);
    for (IndexKind k : {IndexKind::NDVI, IndexKind::GNDVI, IndexKind::NDWI}) {
        const Grid2D g = compute_index(k, x);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (g.valid_at(i)) {
                CHECK(g.value_at(i) >= -1.0f);
                CHECK(g.value_at(i) <= 1.0f);
            }
    }
}

TEST_CASE("rotation equivariance is exact for every index")
{
    std::mt19937_64 rng(31);
    const BandStack x = testutil::random_bands(rng, 6, 9, 0.1);
    for (IndexKind k : kAllIndexKinds)
        for (int q = 0; q < 4; ++q)
            CHECK(compute_index(k, rotate90(x, q)) == rotate90(compute_index(k, x), q));
}

TEST_CASE("ratio indices are invariant to a common band scale")
{
    std::mt19937_64 rng(41);
    const BandStack x = testutil::random_bands(rng, 20, 20, 0.0, 0.01, 1.0);
    for (double c : {0.1, 3.0}) {
        std::array<Grid2D, 4> scaled;
        for (int b = 0; b < 4; ++b) {
            scaled[b] = x[b];
            for (std::size_t i = 0; i < scaled[b].size(); ++i)
                scaled[b].set_at(i, static_cast<float>(x[b].value_at(i) * c));
        }
        const BandStack xs(scaled);
        for (IndexKind k : {IndexKind::NDVI, IndexKind::GNDVI, IndexKind::NDWI}) {
            const Grid2D a = compute_index(k, x);
            const Grid2D b = compute_index(k, xs);
            for (std::size_t i = 0; i < a.size(); ++i)
                CHECK(std::abs(a.value_at(i) - b.value_at(i)) <= 1e-7f + 1e-7f * std::abs(a.value_at(i)));
        }
    }
}

TEST_CASE("NDWI is the negated normalized difference of B8 and B3")
{
    std::mt19937_64 rng(51);
    const BandStack x = testutil::random_bands(rng, 12, 12, 0.1);
    const Grid2D w = ndwi(x);
    const Grid2D n = normalized_difference(x.band(Band::B8), x.band(Band::B3), 1e-8);
    for (std::size_t i = 0; i < w.size(); ++i) {
        CHECK(w.valid_at(i) == n.valid_at(i));
        CHECK(w.value_at(i) == -n.value_at(i));
    }
}

TEST_CASE("scalar kernels agree with the extended-precision oracle on 10^4 pixels")
{
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const IndexParams p;
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double b2 = u(rng), b3 = u(rng), b4 = u(rng), b8 = u(rng);
        auto cmp = [&](std::optional<double> got, std::optional<long double> want) {
            REQUIRE(got.has_value() == want.has_value());
            if (got)
                worst = std::max(worst, static_cast<double>(std::fabs(*got - *want)));
        };
        cmp(kernel::normalized_difference(b8, b4, p.denom_eps), oracle::ndvi(b8, b4));
        cmp(kernel::normalized_difference(b8, b3, p.denom_eps), oracle::gndvi(b8, b3));
        cmp(kernel::normalized_difference(b3, b8, p.denom_eps), oracle::ndwi(b3, b8));
        cmp(kernel::savi(b8, b4, p), oracle::savi(b8, b4));
        cmp(kernel::evi(b8, b4, b2, p), oracle::evi(b8, b4, b2));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("index grids agree with the oracle at float precision")
{
    std::mt19937_64 rng(71);
    const BandStack x = testutil::random_bands(rng, 100, 100);
    const Grid2D g_ndvi = ndvi(x), g_gndvi = gndvi(x), g_savi = savi(x), g_evi = evi(x), g_ndwi = ndwi(x);
    for (std::size_t i = 0; i < g_ndvi.size(); ++i) {
        const long double b2 = x[0].value_at(i), b3 = x[1].value_at(i), b4 = x[2].value_at(i),
                          b8 = x[3].value_at(i);
        auto bounded = [&](const Grid2D& g, std::optional<long double> want) {
            REQUIRE(g.valid_at(i) == want.has_value());
            if (want)
                CHECK(std::fabs(g.value_at(i) - *want) <= 1e-6L);
        };
        bounded(g_ndvi, oracle::ndvi(b8, b4));
        bounded(g_gndvi, oracle::gndvi(b8, b3));
        bounded(g_savi, oracle::savi(b8, b4));
        bounded(g_ndwi, oracle::ndwi(b3, b8));
        // EVI is unbounded near its pole; float storage keeps about 7 significant digits.
        const auto e = oracle::evi(b8, b4, b2);
        REQUIRE(g_evi.valid_at(i) == e.has_value());
        if (e)
            CHECK(std::fabs(g_evi.value_at(i) - *e) <= 1e-6L * std::max(1.0L, std::fabs(*e)));
    }
}

TEST_CASE("EVI grid meets the absolute bound over realistic reflectance")
{
    // Blue reflectance of vegetated and soil surfaces rarely exceeds 0.1,
    // which keeps the EVI denominator at least 0.25.
    std::mt19937_64 rng(81);
    std::uniform_real_distribution<double> u(0.0, 1.0), blue(0.0, 0.1);
    std::array<Grid2D, 4> b{Grid2D(100, 100), Grid2D(100, 100), Grid2D(100, 100), Grid2D(100, 100)};
    for (std::size_t i = 0; i < 10000; ++i) {
        b[0].set_at(i, static_cast<float>(blue(rng)));
        for (int k = 1; k < 4; ++k)
            b[k].set_at(i, static_cast<float>(u(rng)));
    }
    const BandStack x(b);
    const Grid2D g = evi(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto want = oracle::evi(x[3].value_at(i), x[2].value_at(i), x[0].value_at(i));
        REQUIRE(want.has_value());
        CHECK(std::fabs(g.value_at(i) - *want) <= 1e-6L);
    }
}
