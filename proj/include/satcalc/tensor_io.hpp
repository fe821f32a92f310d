#pragma once

#include "satcalc/grid.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace satcalc {

// SATC tensor files: "SATC" magic, version byte, dtype byte, ndim byte,
// ndim little-endian uint32 dims, then the row-major little-endian payload.
inline constexpr std::uint8_t kSatcVersion = 1;

enum class DType : std::uint8_t { F32 = 0, Bool = 1 };

struct TensorHeader {
    std::uint8_t version = kSatcVersion;
    DType dtype = DType::F32;
    std::vector<std::uint32_t> dims;

    std::size_t element_count() const;
    std::size_t encoded_size() const { return 7 + 4 * dims.size(); }
};

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;
};

struct MaskTensor {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> bits;
};

// Writes go to a sibling temporary file that is renamed into place.
void write_tensor(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                  std::span<const float> values);
void write_mask_tensor(const std::filesystem::path& path, std::span<const std::uint32_t> dims,
                       std::span<const std::uint8_t> bits);

Tensor read_tensor(const std::filesystem::path& path);
MaskTensor read_mask_tensor(const std::filesystem::path& path);
TensorHeader read_header(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_tensor(std::span<const std::uint32_t> dims, std::span<const float> values);

// "a/b.satc" -> "a/b.mask.satc"
std::filesystem::path mask_path_for(const std::filesystem::path& tensor_path);

// Grids and band stacks are a float tensor plus a companion mask tensor.
void write_grid(const std::filesystem::path& path, const Grid2D& g);
Grid2D read_grid(const std::filesystem::path& path);
void write_bands(const std::filesystem::path& path, const BandStack& x);
BandStack read_bands(const std::filesystem::path& path);

// Temp-file-then-rename for arbitrary text outputs.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

} // namespace satcalc
