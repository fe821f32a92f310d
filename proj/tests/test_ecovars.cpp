#include "oracle.hpp"
#include "satcalc/ecovars.hpp"
#include "satcalc/error.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace satcalc;

TEST_CASE("coefficient table")
{
    const auto con = coeffs_for(ForestType::Coniferous);
    CHECK(con.a == 0.118);
    CHECK(con.b == 2.53);
    const auto broad = coeffs_for(ForestType::Broadleaf);
    CHECK(broad.a == 0.052);
    CHECK(broad.b == 2.69);
    for (ForestType t : {ForestType::Mixed, ForestType::General}) {
        CHECK(coeffs_for(t).a == 0.067);
        CHECK(coeffs_for(t).b == 2.58);
    }
    const AllometricCoeffs def;
    CHECK(def.forest_type == ForestType::General);
    CHECK(CarbonParams{}.carbon_fraction == 0.47);
}

TEST_CASE("forest type names")
{
    CHECK(parse_forest_type("coniferous") == ForestType::Coniferous);
    CHECK(parse_forest_type("BROADLEAF") == ForestType::Broadleaf);
    CHECK(parse_forest_type("mixed") == ForestType::Mixed);
    CHECK(parse_forest_type("general") == ForestType::General);
    CHECK_FALSE(parse_forest_type("tropical").has_value());
    for (ForestType t : {ForestType::Coniferous, ForestType::Broadleaf, ForestType::Mixed, ForestType::General})
        CHECK(parse_forest_type(forest_type_name(t)) == t);
}

TEST_CASE("biomass examples")
{
    const AllometricCoeffs general;
    CHECK(kernel::agb(0.0, general) == 0.0);
    CHECK(std::abs(kernel::agb(10.0, general) - 25.47) <= 0.01);
    CHECK(std::abs(kernel::agb(20.0, coeffs_for(ForestType::Coniferous)) - 230.9) <= 0.2);

    const Grid2D h(1, 3, std::vector<float>{0.0f, 10.0f, 20.0f});
    const Grid2D agb = agb_from_height(h);
    CHECK(agb(0, 0) == 0.0f);
    CHECK(std::abs(agb(0, 1) - 25.47f) <= 0.01f);
}

TEST_CASE("carbon examples")
{
    const CarbonParams p;
    CHECK(kernel::carbon(0.0, p) == 0.0);
    CHECK(kernel::carbon(100.0, p) == doctest::Approx(47.0));
    CHECK(std::abs(kernel::carbon(25.47, p) - 11.97) <= 0.01);
    const Grid2D cs = carbon_stock(Grid2D(1, 1, 100.0f));
    CHECK(cs(0, 0) == doctest::Approx(47.0));
}

TEST_CASE("negative inputs at valid pixels are domain errors")
{
    Grid2D h(1, 2, std::vector<float>{1.0f, -1.0f});
    CHECK_THROWS_AS(agb_from_height(h), DomainError);
    h.set_nodata(0, 1);
    CHECK_NOTHROW(agb_from_height(h));
    CHECK_THROWS_AS(carbon_stock(Grid2D(1, 1, -5.0f)), DomainError);
    CarbonParams bad;
    bad.carbon_fraction = 1.5;
    CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("nodata masks pass through unchanged")
{
    std::mt19937_64 rng(3);
    const Grid2D h = testutil::random_grid(rng, 8, 8, 0, 60, 0.3);
    const Grid2D agb = agb_from_height(h);
    const Grid2D cs = carbon_stock(agb);
    CHECK(agb.mask() == h.mask());
    CHECK(cs.mask() == h.mask());
}

TEST_CASE("biomass is strictly increasing in height")
{
    for (ForestType t : {ForestType::Coniferous, ForestType::Broadleaf, ForestType::General}) {
        const auto c = coeffs_for(t);
        double prev = kernel::agb(0.01, c);
        for (double hm = 0.02; hm <= 60.0; hm += 0.37) {
            const double v = kernel::agb(hm, c);
            CHECK(v > prev);
            prev = v;
        }
    }
}

TEST_CASE("carbon is exactly the carbon fraction of biomass and never exceeds it")
{
    std::mt19937_64 rng(5);
    const Grid2D agb = testutil::random_grid(rng, 20, 20, 0, 800);
    const Grid2D cs = carbon_stock(agb);
    for (std::size_t i = 0; i < cs.size(); ++i) {
        CHECK(cs.value_at(i) <= agb.value_at(i));
        CHECK(cs.value_at(i) == static_cast<float>(0.47 * static_cast<double>(agb.value_at(i))));
    }
}

TEST_CASE("scalar kernels match the oracle to 1e-9 relative on 10^4 heights")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 60.0);
    const AllometricCoeffs c;
    const CarbonParams cp;
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double hm = u(rng);
        const long double want_agb = oracle::agb(hm, 0.067L, 2.58L);
        const long double want_cs = oracle::carbon(want_agb);
        const double got_agb = kernel::agb(hm, c);
        const double got_cs = kernel::carbon(got_agb, cp);
        if (want_agb > 0) {
            worst = std::max(worst, static_cast<double>(std::fabs(got_agb - want_agb) / want_agb));
            worst = std::max(worst, static_cast<double>(std::fabs(got_cs - want_cs) / want_cs));
        }
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("biomass grids match the oracle at float precision")
{
    std::mt19937_64 rng(9);
    const Grid2D h = testutil::random_grid(rng, 100, 100, 0, 60);
    const Grid2D agb = agb_from_height(h);
    const Grid2D cs = carbon_stock(agb);
    for (std::size_t i = 0; i < h.size(); ++i) {
        const long double want = oracle::agb(h.value_at(i), 0.067L, 2.58L);
        CHECK(std::fabs(agb.value_at(i) - want) <= 1e-6L * std::max(1.0L, want));
        CHECK(std::fabs(cs.value_at(i) - oracle::carbon(want)) <= 1e-6L * std::max(1.0L, want));
    }
}

TEST_CASE("height cap clamps valid pixels only")
{
    Grid2D h(1, 3, std::vector<float>{10.0f, 61.0f, 0.0f});
    h.set_nodata(0, 2);
    const Grid2D c = cap_height(h, 60.0);
    CHECK(c(0, 0) == 10.0f);
    CHECK(c(0, 1) == 60.0f);
    CHECK_FALSE(c.valid(0, 2));
}
