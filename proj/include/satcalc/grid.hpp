#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace satcalc {

// Boolean raster; true marks a pixel that takes part in a computation.
struct MaskGrid {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> bits;

    MaskGrid() = default;
    MaskGrid(int h, int w, bool fill);

    std::size_t size() const { return bits.size(); }
    bool operator()(int r, int c) const { return bits[index(r, c)] != 0; }
    std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * width + c; }
    std::size_t count() const;

    friend bool operator==(const MaskGrid&, const MaskGrid&) = default;
};

// Single-channel float raster with a per-pixel validity mask.
//
// Values and mask are row-major and always the same length. A valid pixel
// always carries a finite value; nodata pixels store 0.
class Grid2D {
public:
    Grid2D() = default;
    Grid2D(int height, int width, float fill = 0.0f, bool valid = true);
    Grid2D(int height, int width, std::vector<float> values);
    Grid2D(int height, int width, std::vector<float> values, std::vector<std::uint8_t> valid);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return values_.size(); }
    bool same_shape(const Grid2D& o) const { return height_ == o.height_ && width_ == o.width_; }

    std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * width_ + c; }
    float operator()(int r, int c) const { return values_[index(r, c)]; }
    bool valid(int r, int c) const { return valid_[index(r, c)] != 0; }
    bool valid_at(std::size_t i) const { return valid_[i] != 0; }
    float value_at(std::size_t i) const { return values_[i]; }

    // Throws DomainError when `v` is non-finite and `ok` is true.
    void set(int r, int c, float v, bool ok = true);
    void set_at(std::size_t i, float v, bool ok = true);
    void set_nodata(int r, int c);

    std::span<const float> values() const { return values_; }
    std::span<const std::uint8_t> valid_bits() const { return valid_; }

    MaskGrid mask() const;
    std::size_t valid_count() const;
    // Marks every pixel where `m` is false as nodata.
    void restrict_to(const MaskGrid& m);

    friend bool operator==(const Grid2D&, const Grid2D&) = default;

private:
    void check_invariants() const;

    int height_ = 0;
    int width_ = 0;
    std::vector<float> values_;
    std::vector<std::uint8_t> valid_;
};

enum class Band : int { B2 = 0, B3 = 1, B4 = 2, B8 = 3 };

inline constexpr std::array<int, 4> kBandWavelengthsNm{490, 560, 665, 842};
inline constexpr std::array<const char*, 4> kBandNames{"B2", "B3", "B4", "B8"};

// Four co-registered reflectance planes in the fixed order B2, B3, B4, B8.
// Construction enforces equal shapes, non-negative reflectance and a joint
// validity mask shared by all four bands.
class BandStack {
public:
    BandStack() = default;
    explicit BandStack(std::array<Grid2D, 4> bands, double resolution_m = 1.5);

    const Grid2D& band(Band b) const { return bands_[static_cast<int>(b)]; }
    const Grid2D& operator[](int i) const { return bands_[i]; }
    const std::array<Grid2D, 4>& bands() const { return bands_; }
    int height() const { return bands_[0].height(); }
    int width() const { return bands_[0].width(); }
    double resolution_m() const { return resolution_m_; }
    MaskGrid mask() const { return bands_[0].mask(); }

    friend bool operator==(const BandStack&, const BandStack&) = default;

private:
    std::array<Grid2D, 4> bands_;
    double resolution_m_ = 1.5;
};

// Counter-clockwise quarter turns; k is reduced mod 4.
Grid2D rotate90(const Grid2D& g, int k);
BandStack rotate90(const BandStack& x, int k);

// Pixel-center aligned bilinear resampling with edge clamping. Output is
// round(dim * scale) on each axis. An output pixel is nodata when any source
// pixel with non-zero weight is nodata.
Grid2D resample_bilinear(const Grid2D& g, double scale);
BandStack resample_bilinear(const BandStack& x, double scale);

Grid2D crop(const Grid2D& g, int row0, int col0, int h, int w);
BandStack crop(const BandStack& x, int row0, int col0, int h, int w);

// Center crop or nodata-pad to exactly h x w.
Grid2D fit_center(const Grid2D& g, int h, int w);
BandStack fit_center(const BandStack& x, int h, int w);

MaskGrid operator&(const MaskGrid& a, const MaskGrid& b);

} // namespace satcalc
