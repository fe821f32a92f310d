#pragma once

#include "satcalc/ecovars.hpp"
#include "satcalc/grid.hpp"
#include "satcalc/indices.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace satcalc {

// Regression targets in fixed ordinal order (matches the loss-weight table).
enum class TaskId : int { NDVI = 0, GNDVI, SAVI, EVI, NDWI, H, AGB, CS };

inline constexpr int kTaskCount = 8;
inline constexpr std::array<TaskId, kTaskCount> kAllTasks{TaskId::NDVI, TaskId::GNDVI, TaskId::SAVI, TaskId::EVI,
                                                          TaskId::NDWI, TaskId::H,     TaskId::AGB,  TaskId::CS};

constexpr int ordinal(TaskId t) { return static_cast<int>(t); }
std::string_view task_name(TaskId t);
std::string_view task_unit(TaskId t);
std::optional<TaskId> parse_task(std::string_view name);
// Height-like tasks are subject to the ground-truth cap during evaluation.
bool is_structural(TaskId t);

using TargetMaps = std::array<Grid2D, kTaskCount>;

struct TargetRecipe {
    IndexParams index;
    AllometricCoeffs allometry;
    CarbonParams carbon;
};

struct Sample {
    std::string id;
    BandStack x;
    TargetMaps y;
    MaskGrid loss_mask;

    const Grid2D& target(TaskId t) const { return y[ordinal(t)]; }
};

struct Scene {
    BandStack bands;
    Grid2D height;
};

struct AugmentSpec {
    double scale_low = 0.5;
    double scale_high = 2.0;
    std::vector<int> rotations{0, 1, 2, 3};
    bool enabled = true;

    void validate() const;
};

enum class Split { Train, Val, Test };
std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view s);

struct ManifestRecord {
    std::string id;
    Split split = Split::Train;
    std::string bands_path;
    std::array<std::string, kTaskCount> target_paths;
};

struct Manifest {
    std::vector<ManifestRecord> records;
    std::uint64_t seed = 0;
    int patch_size = 0;
    // Free-form creation parameters, written as "# key=value" header lines.
    std::map<std::string, std::string> params;

    std::vector<const ManifestRecord*> split(Split s) const;
};

// 64-bit finalizer (splitmix64) used to derive independent per-item seeds.
std::uint64_t mix64(std::uint64_t x);
inline std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) { return mix64(seed ^ index); }

Scene synth_scene(std::uint64_t seed, int h, int w);

// Five indices from the bands, H passed through, AGB and CS from H.
TargetMaps build_targets(const BandStack& x, const Grid2D& height, const TargetRecipe& recipe = {});
// Joint validity of the bands and all eight targets.
MaskGrid joint_mask(const BandStack& x, const TargetMaps& y);
Sample make_sample(std::string id, BandStack x, const Grid2D& height, const TargetRecipe& recipe = {});

struct PatchRequest {
    int patch = 32;
    int count = 0;
    std::uint64_t seed = 0;
    double max_nodata_frac = 0.5;
    int max_retries = 64;
    std::string id_prefix = "s";
};

std::vector<Sample> extract_patches(const BandStack& x, const Grid2D& height, const PatchRequest& req,
                                    const TargetRecipe& recipe = {});

Sample augment(const Sample& s, const AugmentSpec& spec, std::uint64_t seed, const TargetRecipe& recipe = {});

Manifest split_manifest(const std::vector<std::string>& ids, std::array<double, 3> fractions, std::uint64_t seed);
Manifest split_manifest(const std::vector<Sample>& samples, std::array<double, 3> fractions, std::uint64_t seed);

// Paths inside a manifest are relative to the manifest's directory.
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

// Writes every sample's files under `dir` and the manifest as dir/manifest.tsv.
void write_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples, Manifest& m);
Sample load_sample(const std::filesystem::path& manifest_dir, const ManifestRecord& r);

} // namespace satcalc
