#include "satcalc/grid.hpp"

#include "satcalc/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace satcalc {

namespace {

std::size_t checked_area(int h, int w)
{
    if (h < 0 || w < 0)
        throw_shape("negative grid dimensions " + std::to_string(h) + "x" + std::to_string(w));
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
}

} // namespace

MaskGrid::MaskGrid(int h, int w, bool fill)
    : height(h), width(w), bits(checked_area(h, w), fill ? 1 : 0)
{
}

std::size_t MaskGrid::count() const
{
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

MaskGrid operator&(const MaskGrid& a, const MaskGrid& b)
{
    if (a.height != b.height || a.width != b.width)
        throw_shape("mask shape mismatch");
    MaskGrid out(a.height, a.width, false);
    for (std::size_t i = 0; i < a.bits.size(); ++i)
        out.bits[i] = (a.bits[i] && b.bits[i]) ? 1 : 0;
    return out;
}

Grid2D::Grid2D(int height, int width, float fill, bool valid)
    : height_(height), width_(width),
      values_(checked_area(height, width), valid ? fill : 0.0f),
      valid_(values_.size(), valid ? 1 : 0)
{
    check_invariants();
}

Grid2D::Grid2D(int height, int width, std::vector<float> values)
    : height_(height), width_(width), values_(std::move(values)), valid_(values_.size(), 1)
{
    if (values_.size() != checked_area(height, width))
        throw_shape("value count does not match grid dimensions");
    check_invariants();
}

Grid2D::Grid2D(int height, int width, std::vector<float> values, std::vector<std::uint8_t> valid)
    : height_(height), width_(width), values_(std::move(values)), valid_(std::move(valid))
{
    if (values_.size() != checked_area(height, width) || valid_.size() != values_.size())
        throw_shape("value/mask count does not match grid dimensions");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        valid_[i] = valid_[i] ? 1 : 0;
        if (!valid_[i])
            values_[i] = 0.0f;
    }
    check_invariants();
}

void Grid2D::check_invariants() const
{
    for (std::size_t i = 0; i < values_.size(); ++i)
        if (valid_[i] && !std::isfinite(values_[i]))
            throw DomainError("non-finite value at valid pixel " + std::to_string(i));
}

void Grid2D::set_at(std::size_t i, float v, bool ok)
{
    if (ok && !std::isfinite(v))
        throw DomainError("non-finite value at valid pixel " + std::to_string(i));
    values_[i] = ok ? v : 0.0f;
    valid_[i] = ok ? 1 : 0;
}

void Grid2D::set(int r, int c, float v, bool ok)
{
    set_at(index(r, c), v, ok);
}

void Grid2D::set_nodata(int r, int c)
{
    set_at(index(r, c), 0.0f, false);
}

MaskGrid Grid2D::mask() const
{
    MaskGrid m(height_, width_, false);
    m.bits = valid_;
    return m;
}

std::size_t Grid2D::valid_count() const
{
    return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), std::uint8_t{1}));
}

void Grid2D::restrict_to(const MaskGrid& m)
{
    if (m.height != height_ || m.width != width_)
        throw_shape("mask shape mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i)
        if (!m.bits[i]) {
            valid_[i] = 0;
            values_[i] = 0.0f;
        }
}

BandStack::BandStack(std::array<Grid2D, 4> bands, double resolution_m)
    : bands_(std::move(bands)), resolution_m_(resolution_m)
{
    for (int b = 1; b < 4; ++b)
        if (!bands_[b].same_shape(bands_[0]))
            throw_shape("band " + std::string(kBandNames[b]) + " shape differs from B2");

    MaskGrid joint = bands_[0].mask();
    for (int b = 1; b < 4; ++b)
        joint = joint & bands_[b].mask();
    for (auto& g : bands_) {
        g.restrict_to(joint);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (g.valid_at(i) && g.value_at(i) < 0.0f)
                throw DomainError("negative reflectance at pixel " + std::to_string(i));
    }
}

Grid2D rotate90(const Grid2D& g, int k)
{
    k = ((k % 4) + 4) % 4;
    const int h = g.height();
    const int w = g.width();
    const bool odd = (k % 2) == 1;
    Grid2D out(odd ? w : h, odd ? h : w, 0.0f, false);
    for (int i = 0; i < out.height(); ++i) {
        for (int j = 0; j < out.width(); ++j) {
            int sr = i;
            int sc = j;
            switch (k) {
            case 1: sr = j; sc = w - 1 - i; break;
            case 2: sr = h - 1 - i; sc = w - 1 - j; break;
            case 3: sr = h - 1 - j; sc = i; break;
            default: break;
            }
            out.set(i, j, g(sr, sc), g.valid(sr, sc));
        }
    }
    return out;
}

BandStack rotate90(const BandStack& x, int k)
{
    std::array<Grid2D, 4> b;
    for (int i = 0; i < 4; ++i)
        b[i] = rotate90(x[i], k);
    return BandStack(std::move(b), x.resolution_m());
}

Grid2D resample_bilinear(const Grid2D& g, double scale)
{
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw DomainError("resample scale must be positive, got " + std::to_string(scale));
    const int h = g.height();
    const int w = g.width();
    const int oh = static_cast<int>(std::lround(h * scale));
    const int ow = static_cast<int>(std::lround(w * scale));
    if (oh < 1 || ow < 1)
        throw DomainError("resample output would be empty");

    // Source coordinate and interpolation weight per output row / column.
    struct Tap {
        int i0, i1;
        double f;
    };
    auto taps = [](int n_in, int n_out) {
        std::vector<Tap> t(n_out);
        const double ratio = static_cast<double>(n_in) / n_out;
        for (int o = 0; o < n_out; ++o) {
            double s = (o + 0.5) * ratio - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
            const int i0 = static_cast<int>(std::floor(s));
            const int i1 = std::min(i0 + 1, n_in - 1);
            t[o] = {i0, i1, s - i0};
        }
        return t;
    };
    const auto ty = taps(h, oh);
    const auto tx = taps(w, ow);

    Grid2D out(oh, ow, 0.0f, false);
    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            const int rows[2] = {ty[i].i0, ty[i].i1};
            const int cols[2] = {tx[j].i0, tx[j].i1};
            const double wy[2] = {1.0 - ty[i].f, ty[i].f};
            const double wx[2] = {1.0 - tx[j].f, tx[j].f};
            double acc = 0.0;
            bool ok = true;
            for (int a = 0; a < 2 && ok; ++a) {
                for (int b = 0; b < 2; ++b) {
                    const double wt = wy[a] * wx[b];
                    if (wt == 0.0)
                        continue;
                    if (!g.valid(rows[a], cols[b])) {
                        ok = false;
                        break;
                    }
                    acc += wt * g(rows[a], cols[b]);
                }
            }
            out.set(i, j, ok ? static_cast<float>(acc) : 0.0f, ok);
        }
    }
    return out;
}

BandStack resample_bilinear(const BandStack& x, double scale)
{
    std::array<Grid2D, 4> b;
    for (int i = 0; i < 4; ++i)
        b[i] = resample_bilinear(x[i], scale);
    return BandStack(std::move(b), x.resolution_m() / scale);
}

Grid2D crop(const Grid2D& g, int row0, int col0, int h, int w)
{
    if (row0 < 0 || col0 < 0 || h < 1 || w < 1 || row0 + h > g.height() || col0 + w > g.width())
        throw_shape("crop window [" + std::to_string(row0) + "+" + std::to_string(h) + ", " +
                    std::to_string(col0) + "+" + std::to_string(w) + "] outside " +
                    std::to_string(g.height()) + "x" + std::to_string(g.width()) + " grid");
    Grid2D out(h, w, 0.0f, false);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            out.set(i, j, g(row0 + i, col0 + j), g.valid(row0 + i, col0 + j));
    return out;
}

BandStack crop(const BandStack& x, int row0, int col0, int h, int w)
{
    std::array<Grid2D, 4> b;
    for (int i = 0; i < 4; ++i)
        b[i] = crop(x[i], row0, col0, h, w);
    return BandStack(std::move(b), x.resolution_m());
}

Grid2D fit_center(const Grid2D& g, int h, int w)
{
    Grid2D out(h, w, 0.0f, false);
    // Offset of the source origin inside the output; negative means crop.
    const int dr = (h - g.height()) / 2;
    const int dc = (w - g.width()) / 2;
    for (int i = 0; i < h; ++i) {
        const int sr = i - dr;
        if (sr < 0 || sr >= g.height())
            continue;
        for (int j = 0; j < w; ++j) {
            const int sc = j - dc;
            if (sc < 0 || sc >= g.width())
                continue;
            out.set(i, j, g(sr, sc), g.valid(sr, sc));
        }
    }
    return out;
}

BandStack fit_center(const BandStack& x, int h, int w)
{
    std::array<Grid2D, 4> b;
    for (int i = 0; i < 4; ++i)
        b[i] = fit_center(x[i], h, w);
    return BandStack(std::move(b), x.resolution_m());
}

} // namespace satcalc
