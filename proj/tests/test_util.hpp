#pragma once

#include "satcalc/grid.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace testutil {

class TempDir {
public:
    explicit TempDir(const std::string& tag = "t")
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("satcalc_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline satcalc::Grid2D random_grid(std::mt19937_64& rng, int h, int w, double lo, double hi, double nodata_frac = 0.0)
{
    std::uniform_real_distribution<double> val(lo, hi);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    satcalc::Grid2D g(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const float v = static_cast<float>(val(rng));
            if (u(rng) < nodata_frac)
                g.set_nodata(r, c);
            else
                g.set(r, c, v);
        }
    return g;
}

// Four random bands sharing one nodata pattern.
inline satcalc::BandStack random_bands(std::mt19937_64& rng, int h, int w, double nodata_frac = 0.0,
                                       double lo = 0.0, double hi = 1.0)
{
    std::array<satcalc::Grid2D, 4> b;
    for (auto& g : b)
        g = random_grid(rng, h, w, lo, hi);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (u(rng) < nodata_frac)
                for (auto& g : b)
                    g.set_nodata(r, c);
    return satcalc::BandStack(std::move(b));
}

inline satcalc::BandStack uniform_bands(int h, int w, float b2, float b3, float b4, float b8)
{
    return satcalc::BandStack({satcalc::Grid2D(h, w, b2), satcalc::Grid2D(h, w, b3), satcalc::Grid2D(h, w, b4),
                               satcalc::Grid2D(h, w, b8)});
}

} // namespace testutil
