#include "satcalc/error.hpp"
#include "satcalc/tensor_io.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

using namespace satcalc;
using testutil::TempDir;

namespace {

std::vector<char> slurp(const std::filesystem::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<char>& bytes)
{
    std::ofstream f(p, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST_CASE("a 2x2 float tensor is a 15-byte header plus 16 payload bytes")
{
    TempDir d("io");
    const std::vector<std::uint32_t> dims{2, 2};
    const std::vector<float> vals{1, 2, 3, 4};
    write_tensor(d / "a.satc", dims, vals);
    const auto bytes = slurp(d / "a.satc");
    REQUIRE(bytes.size() == 31);
    CHECK(std::memcmp(bytes.data(), "SATC", 4) == 0);
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 0);
    CHECK(bytes[6] == 2);
    CHECK(static_cast<unsigned char>(bytes[7]) == 2);
    CHECK(bytes[8] == 0);
    float first = 0;
    std::memcpy(&first, bytes.data() + 15, 4);
    CHECK(first == 1.0f);
    // little-endian 1.0f
    CHECK(static_cast<unsigned char>(bytes[18]) == 0x3f);
    CHECK(static_cast<unsigned char>(bytes[17]) == 0x80);

    const Tensor t = read_tensor(d / "a.satc");
    CHECK(t.dims == dims);
    CHECK(t.values == vals);
    CHECK(encode_tensor(dims, vals).size() == 31);
}

TEST_CASE("empty tensors round trip")
{
    TempDir d("io");
    write_tensor(d / "e.satc", std::vector<std::uint32_t>{0}, std::vector<float>{});
    const Tensor t = read_tensor(d / "e.satc");
    CHECK(t.dims == std::vector<std::uint32_t>{0});
    CHECK(t.values.empty());
}

TEST_CASE("round trip is bit exact for random shapes and values")
{
    TempDir d("io");
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const int nd = 1 + static_cast<int>(rng() % 4);
        std::vector<std::uint32_t> dims;
        std::size_t n = 1;
        for (int i = 0; i < nd; ++i) {
            dims.push_back(1 + static_cast<std::uint32_t>(rng() % 5));
            n *= dims.back();
        }
        std::vector<float> vals(n);
        for (auto& v : vals) {
            const std::uint32_t bits = static_cast<std::uint32_t>(rng());
            std::memcpy(&v, &bits, 4);
        }
        const auto path = d / ("r" + std::to_string(trial) + ".satc");
        write_tensor(path, dims, vals);
        const Tensor t = read_tensor(path);
        CHECK(t.dims == dims);
        REQUIRE(t.values.size() == vals.size());
        CHECK(std::memcmp(t.values.data(), vals.data(), 4 * n) == 0);
        // byte-identical re-encode
        const auto before = slurp(path);
        write_tensor(path, t.dims, t.values);
        CHECK(slurp(path) == before);
    }
}

TEST_CASE("malformed files are rejected")
{
    TempDir d("io");
    write_tensor(d / "ok.satc", std::vector<std::uint32_t>{2, 2}, std::vector<float>{1, 2, 3, 4});
    auto bytes = slurp(d / "ok.satc");

    auto bad_magic = bytes;
    std::memcpy(bad_magic.data(), "XXXX", 4);
    spit(d / "m.satc", bad_magic);
    CHECK_THROWS_AS(read_tensor(d / "m.satc"), FormatError);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    spit(d / "t.satc", truncated);
    CHECK_THROWS_AS(read_tensor(d / "t.satc"), FormatError);

    auto bad_version = bytes;
    bad_version[4] = 9;
    spit(d / "v.satc", bad_version);
    CHECK_THROWS_AS(read_tensor(d / "v.satc"), FormatError);

    auto bad_dtype = bytes;
    bad_dtype[5] = 7;
    spit(d / "d.satc", bad_dtype);
    CHECK_THROWS_AS(read_tensor(d / "d.satc"), FormatError);

    auto bad_rank = bytes;
    bad_rank[6] = 5;
    spit(d / "k.satc", bad_rank);
    CHECK_THROWS_AS(read_tensor(d / "k.satc"), FormatError);

    spit(d / "h.satc", std::vector<char>(bytes.begin(), bytes.begin() + 9));
    CHECK_THROWS_AS(read_tensor(d / "h.satc"), FormatError);

    auto trailing = bytes;
    trailing.push_back(0);
    spit(d / "x.satc", trailing);
    CHECK_THROWS_AS(read_tensor(d / "x.satc"), FormatError);

    CHECK_THROWS_AS(read_tensor(d / "missing.satc"), IoError);
    CHECK_THROWS_AS(write_tensor(d / "z.satc", std::vector<std::uint32_t>{3}, std::vector<float>{1}), ShapeError);
}

TEST_CASE("grids and band stacks keep their masks in companion files")
{
    TempDir d("io");
    std::mt19937_64 rng(2);
    const Grid2D g = testutil::random_grid(rng, 5, 7, -1, 1, 0.3);
    write_grid(d / "g.satc", g);
    CHECK(std::filesystem::exists(d / "g.mask.satc"));
    CHECK(mask_path_for("a/b.satc") == std::filesystem::path("a/b.mask.satc"));
    CHECK(read_header(d / "g.mask.satc").dtype == DType::Bool);
    CHECK(read_grid(d / "g.satc") == g);

    const BandStack x = testutil::random_bands(rng, 6, 4, 0.2);
    write_bands(d / "x.satc", x);
    CHECK(read_header(d / "x.satc").dims == std::vector<std::uint32_t>{4, 6, 4});
    CHECK(read_bands(d / "x.satc") == x);
}

TEST_CASE("atomic writes leave no temporary files behind")
{
    TempDir d("io");
    write_text_atomic(d / "r.txt", "hello\n");
    write_grid(d / "g.satc", Grid2D(2, 2, 1.0f));
    int n = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(d.path()))
        ++n;
    CHECK(n == 3);
}
