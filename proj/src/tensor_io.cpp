#include "satcalc/tensor_io.hpp"

#include "satcalc/error.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace satcalc {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 4> kMagic{'S', 'A', 'T', 'C'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::uint8_t* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::size_t product(std::span<const std::uint32_t> dims)
{
    std::size_t n = 1;
    for (auto d : dims)
        n *= d;
    return n;
}

std::vector<std::uint8_t> encode_header(std::span<const std::uint32_t> dims, DType dtype)
{
    if (dims.empty() || dims.size() > 4)
        throw_shape("tensor rank must be 1..4, got " + std::to_string(dims.size()));
    std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
    out.push_back(kSatcVersion);
    out.push_back(static_cast<std::uint8_t>(dtype));
    out.push_back(static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims)
        put_u32(out, d);
    return out;
}

void write_bytes_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes)
{
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f)
            throw IoError("cannot open " + tmp.string() + " for writing");
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!f)
            throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move output into place at " + path.string());
    }
}

std::vector<std::uint8_t> slurp(const fs::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct Decoded {
    TensorHeader header;
    std::size_t payload_offset = 0;
};

Decoded decode_header(const std::vector<std::uint8_t>& bytes, const fs::path& path)
{
    if (bytes.size() < 7)
        throw FormatError(path.string() + ": truncated header");
    if (std::memcmp(bytes.data(), kMagic.data(), 4) != 0)
        throw FormatError(path.string() + ": bad magic (expected SATC)");
    Decoded d;
    d.header.version = bytes[4];
    if (d.header.version != kSatcVersion)
        throw FormatError(path.string() + ": unsupported version " + std::to_string(bytes[4]));
    if (bytes[5] > 1)
        throw FormatError(path.string() + ": unsupported dtype " + std::to_string(bytes[5]));
    d.header.dtype = static_cast<DType>(bytes[5]);
    const std::size_t ndim = bytes[6];
    if (ndim < 1 || ndim > 4)
        throw FormatError(path.string() + ": bad rank " + std::to_string(ndim));
    if (bytes.size() < 7 + 4 * ndim)
        throw FormatError(path.string() + ": truncated header");
    for (std::size_t i = 0; i < ndim; ++i)
        d.header.dims.push_back(get_u32(bytes.data() + 7 + 4 * i));
    d.payload_offset = 7 + 4 * ndim;
    const std::size_t elem = d.header.dtype == DType::F32 ? 4 : 1;
    const std::size_t want = d.header.element_count() * elem;
    const std::size_t have = bytes.size() - d.payload_offset;
    if (have < want)
        throw FormatError(path.string() + ": truncated payload (" + std::to_string(have) + " of " +
                          std::to_string(want) + " bytes)");
    if (have > want)
        throw FormatError(path.string() + ": trailing bytes after payload");
    return d;
}

std::vector<std::uint32_t> grid_dims(const Grid2D& g)
{
    return {static_cast<std::uint32_t>(g.height()), static_cast<std::uint32_t>(g.width())};
}

} // namespace

std::size_t TensorHeader::element_count() const
{
    return product(dims);
}

std::vector<std::uint8_t> encode_tensor(std::span<const std::uint32_t> dims, std::span<const float> values)
{
    if (product(dims) != values.size())
        throw_shape("tensor dims hold " + std::to_string(product(dims)) + " elements but " +
                    std::to_string(values.size()) + " values were given");
    auto out = encode_header(dims, DType::F32);
    out.reserve(out.size() + 4 * values.size());
    for (float v : values)
        put_u32(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

void write_tensor(const fs::path& path, std::span<const std::uint32_t> dims, std::span<const float> values)
{
    write_bytes_atomic(path, encode_tensor(dims, values));
}

void write_mask_tensor(const fs::path& path, std::span<const std::uint32_t> dims,
                       std::span<const std::uint8_t> bits)
{
    if (product(dims) != bits.size())
        throw_shape("mask dims do not match element count");
    auto out = encode_header(dims, DType::Bool);
    for (auto b : bits)
        out.push_back(b ? 1 : 0);
    write_bytes_atomic(path, out);
}

TensorHeader read_header(const fs::path& path)
{
    return decode_header(slurp(path), path).header;
}

Tensor read_tensor(const fs::path& path)
{
    const auto bytes = slurp(path);
    const auto d = decode_header(bytes, path);
    if (d.header.dtype != DType::F32)
        throw FormatError(path.string() + ": unsupported dtype for float tensor");
    Tensor t;
    t.dims = d.header.dims;
    t.values.resize(d.header.element_count());
    for (std::size_t i = 0; i < t.values.size(); ++i)
        t.values[i] = std::bit_cast<float>(get_u32(bytes.data() + d.payload_offset + 4 * i));
    return t;
}

MaskTensor read_mask_tensor(const fs::path& path)
{
    const auto bytes = slurp(path);
    const auto d = decode_header(bytes, path);
    if (d.header.dtype != DType::Bool)
        throw FormatError(path.string() + ": unsupported dtype for mask tensor");
    MaskTensor t;
    t.dims = d.header.dims;
    t.bits.assign(bytes.begin() + static_cast<std::ptrdiff_t>(d.payload_offset), bytes.end());
    for (auto& b : t.bits)
        b = b ? 1 : 0;
    return t;
}

fs::path mask_path_for(const fs::path& tensor_path)
{
    fs::path p = tensor_path;
    std::string name = p.filename().string();
    const std::string ext = ".satc";
    if (name.size() >= ext.size() && name.compare(name.size() - ext.size(), ext.size(), ext) == 0)
        name.erase(name.size() - ext.size());
    p.replace_filename(name + ".mask.satc");
    return p;
}

void write_grid(const fs::path& path, const Grid2D& g)
{
    const auto dims = grid_dims(g);
    write_tensor(path, dims, g.values());
    write_mask_tensor(mask_path_for(path), dims, g.valid_bits());
}

Grid2D read_grid(const fs::path& path)
{
    auto t = read_tensor(path);
    if (t.dims.size() != 2)
        throw FormatError(path.string() + ": expected a rank-2 grid");
    const int h = static_cast<int>(t.dims[0]);
    const int w = static_cast<int>(t.dims[1]);
    const auto mp = mask_path_for(path);
    if (!fs::exists(mp))
        return Grid2D(h, w, std::move(t.values));
    auto m = read_mask_tensor(mp);
    if (m.dims != t.dims)
        throw FormatError(mp.string() + ": mask shape differs from values");
    return Grid2D(h, w, std::move(t.values), std::move(m.bits));
}

void write_bands(const fs::path& path, const BandStack& x)
{
    const std::uint32_t h = static_cast<std::uint32_t>(x.height());
    const std::uint32_t w = static_cast<std::uint32_t>(x.width());
    std::vector<float> flat;
    flat.reserve(4 * static_cast<std::size_t>(h) * w);
    for (const auto& b : x.bands())
        flat.insert(flat.end(), b.values().begin(), b.values().end());
    const std::array<std::uint32_t, 3> dims{4, h, w};
    const std::array<std::uint32_t, 2> mdims{h, w};
    write_tensor(path, dims, flat);
    write_mask_tensor(mask_path_for(path), mdims, x[0].valid_bits());
}

BandStack read_bands(const fs::path& path)
{
    auto t = read_tensor(path);
    if (t.dims.size() != 3 || t.dims[0] != 4)
        throw FormatError(path.string() + ": expected a [4,H,W] band tensor");
    const int h = static_cast<int>(t.dims[1]);
    const int w = static_cast<int>(t.dims[2]);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<std::uint8_t> valid(plane, 1);
    const auto mp = mask_path_for(path);
    if (fs::exists(mp)) {
        auto m = read_mask_tensor(mp);
        if (m.dims.size() != 2 || m.dims[0] != t.dims[1] || m.dims[1] != t.dims[2])
            throw FormatError(mp.string() + ": mask shape differs from bands");
        valid = std::move(m.bits);
    }
    std::array<Grid2D, 4> bands;
    for (int b = 0; b < 4; ++b) {
        std::vector<float> v(t.values.begin() + static_cast<std::ptrdiff_t>(b * plane),
                             t.values.begin() + static_cast<std::ptrdiff_t>((b + 1) * plane));
        bands[b] = Grid2D(h, w, std::move(v), valid);
    }
    return BandStack(std::move(bands));
}

void write_text_atomic(const fs::path& path, const std::string& text)
{
    write_bytes_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

} // namespace satcalc
