#include "satcalc/dataset.hpp"

#include "satcalc/error.hpp"
#include "satcalc/tensor_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace satcalc {

namespace fs = std::filesystem;

std::string_view task_name(TaskId t)
{
    static constexpr std::array<std::string_view, kTaskCount> names{"NDVI", "GNDVI", "SAVI", "EVI",
                                                                    "NDWI", "H",     "AGB",  "CS"};
    return names[ordinal(t)];
}

std::string_view task_unit(TaskId t)
{
    switch (t) {
    case TaskId::H: return "m";
    case TaskId::AGB: return "t/ha";
    case TaskId::CS: return "tC/ha";
    default: return "unitless";
    }
}

std::optional<TaskId> parse_task(std::string_view name)
{
    std::string up(name);
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
    for (auto t : kAllTasks)
        if (task_name(t) == up)
            return t;
    return std::nullopt;
}

bool is_structural(TaskId t)
{
    return t == TaskId::H || t == TaskId::AGB || t == TaskId::CS;
}

void AugmentSpec::validate() const
{
    if (!(scale_low > 0.0) || !(scale_high >= scale_low) || !std::isfinite(scale_high))
        throw DomainError("augmentation scale range must satisfy 0 < low <= high");
    if (rotations.empty())
        throw DomainError("augmentation needs at least one rotation");
}

std::string_view split_name(Split s)
{
    switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    }
    return "?";
}

std::optional<Split> parse_split(std::string_view s)
{
    for (auto v : {Split::Train, Split::Val, Split::Test})
        if (split_name(v) == s)
            return v;
    return std::nullopt;
}

std::vector<const ManifestRecord*> Manifest::split(Split s) const
{
    std::vector<const ManifestRecord*> out;
    for (const auto& r : records)
        if (r.split == s)
            out.push_back(&r);
    return out;
}

std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

namespace {

double unit_hash(std::uint64_t seed, std::uint64_t salt, std::int64_t ix, std::int64_t iy)
{
    std::uint64_t k = mix64(seed ^ mix64(salt));
    k = mix64(k ^ static_cast<std::uint64_t>(ix) * 0x632be59bd9b4e019ull);
    k = mix64(k ^ static_cast<std::uint64_t>(iy) * 0x85157af5ull);
    return static_cast<double>(k >> 11) * 0x1.0p-53;
}

// Smoothly interpolated lattice noise summed over octaves; result in [0, 1].
double value_noise(std::uint64_t seed, std::uint64_t salt, double x, double y, double cell, int octaves)
{
    double sum = 0.0;
    double norm = 0.0;
    double amp = 1.0;
    for (int o = 0; o < octaves; ++o) {
        const double fx = x / cell;
        const double fy = y / cell;
        const double x0 = std::floor(fx);
        const double y0 = std::floor(fy);
        auto fade = [](double t) { return t * t * (3.0 - 2.0 * t); };
        const double tx = fade(fx - x0);
        const double ty = fade(fy - y0);
        const auto ix = static_cast<std::int64_t>(x0);
        const auto iy = static_cast<std::int64_t>(y0);
        const std::uint64_t s = salt * 16 + static_cast<std::uint64_t>(o);
        const double v00 = unit_hash(seed, s, ix, iy);
        const double v10 = unit_hash(seed, s, ix + 1, iy);
        const double v01 = unit_hash(seed, s, ix, iy + 1);
        const double v11 = unit_hash(seed, s, ix + 1, iy + 1);
        const double top = v00 + (v10 - v00) * tx;
        const double bot = v01 + (v11 - v01) * tx;
        sum += amp * (top + (bot - top) * ty);
        norm += amp;
        amp *= 0.5;
        cell *= 0.5;
    }
    return sum / norm;
}

double smoothstep(double lo, double hi, double v)
{
    const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

} // namespace

Scene synth_scene(std::uint64_t seed, int h, int w)
{
    if (h < 8 || w < 8)
        throw DomainError("synthetic scenes need at least 8x8 pixels");

    // Endmember reflectances in band order B2, B3, B4, B8.
    constexpr std::array<double, 4> veg{0.03, 0.08, 0.04, 0.45};
    constexpr std::array<double, 4> soil{0.12, 0.16, 0.20, 0.28};
    constexpr std::array<double, 4> water{0.06, 0.05, 0.03, 0.01};

    const double cell = std::max(8.0, std::max(h, w) / 3.0);
    std::array<std::vector<float>, 4> planes;
    for (auto& p : planes)
        p.resize(static_cast<std::size_t>(h) * w);
    std::vector<float> height(static_cast<std::size_t>(h) * w);

    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double cover_n = value_noise(seed, 1, c, r, cell, 3);
            const double canopy_n = value_noise(seed, 2, c, r, cell * 0.5, 3);
            const double water_n = value_noise(seed, 3, c, r, cell, 2);

            const double wet = 1.0 - smoothstep(0.18, 0.26, water_n);
            const double cover = smoothstep(0.30, 0.65, cover_n) * (1.0 - wet);
            const double hgt = std::clamp(60.0 * cover * std::pow(canopy_n, 1.3), 0.0, 60.0);

            const std::size_t i = static_cast<std::size_t>(r) * w + c;
            height[i] = static_cast<float>(hgt);
            for (int b = 0; b < 4; ++b) {
                const double land = cover * veg[b] + (1.0 - cover) * soil[b];
                const double mixed = wet * water[b] + (1.0 - wet) * land;
                const double jitter = 0.02 * (unit_hash(seed, 10 + b, c, r) - 0.5);
                planes[b][i] = static_cast<float>(std::clamp(mixed + jitter, 0.0, 1.0));
            }
        }
    }

    std::array<Grid2D, 4> bands;
    for (int b = 0; b < 4; ++b)
        bands[b] = Grid2D(h, w, std::move(planes[b]));
    return {BandStack(std::move(bands)), Grid2D(h, w, std::move(height))};
}

TargetMaps build_targets(const BandStack& x, const Grid2D& height, const TargetRecipe& recipe)
{
    if (height.height() != x.height() || height.width() != x.width())
        throw_shape("height grid shape differs from band stack");
    recipe.index.validate();
    TargetMaps y;
    for (auto k : kAllIndexKinds) {
        const int slot = static_cast<int>(k);
        y[slot] = compute_index(k, x, recipe.index);
    }
    y[ordinal(TaskId::H)] = height;
    y[ordinal(TaskId::AGB)] = agb_from_height(height, recipe.allometry);
    y[ordinal(TaskId::CS)] = carbon_stock(y[ordinal(TaskId::AGB)], recipe.carbon);
    return y;
}

MaskGrid joint_mask(const BandStack& x, const TargetMaps& y)
{
    MaskGrid m = x.mask();
    for (const auto& g : y)
        m = m & g.mask();
    return m;
}

Sample make_sample(std::string id, BandStack x, const Grid2D& height, const TargetRecipe& recipe)
{
    Sample s;
    s.id = std::move(id);
    s.y = build_targets(x, height, recipe);
    s.x = std::move(x);
    s.loss_mask = joint_mask(s.x, s.y);
    return s;
}

std::vector<Sample> extract_patches(const BandStack& x, const Grid2D& height, const PatchRequest& req,
                                    const TargetRecipe& recipe)
{
    if (req.count < 0)
        throw DomainError("patch count must be >= 0");
    if (req.patch < 1 || req.patch > x.height() || req.patch > x.width())
        throw_shape("patch size " + std::to_string(req.patch) + " does not fit a " + std::to_string(x.height()) +
                    "x" + std::to_string(x.width()) + " scene");
    if (!(req.max_nodata_frac >= 0.0 && req.max_nodata_frac < 1.0))
        throw DomainError("max_nodata_frac must lie in [0, 1)");
    if (req.count == 0)
        return {};

    const TargetMaps full = build_targets(x, height, recipe);
    const MaskGrid full_mask = joint_mask(x, full);
    const int p = req.patch;
    const double area = static_cast<double>(p) * p;

    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(req.count));
    for (int n = 0; n < req.count; ++n) {
        std::mt19937_64 rng(sample_seed(req.seed, static_cast<std::uint64_t>(n)));
        std::uniform_int_distribution<int> row_d(0, x.height() - p);
        std::uniform_int_distribution<int> col_d(0, x.width() - p);
        bool placed = false;
        for (int attempt = 0; attempt < req.max_retries && !placed; ++attempt) {
            const int r0 = row_d(rng);
            const int c0 = col_d(rng);
            std::size_t bad = 0;
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < p; ++j)
                    bad += full_mask(r0 + i, c0 + j) ? 0 : 1;
            if (static_cast<double>(bad) / area > req.max_nodata_frac)
                continue;
            Sample s;
            s.id = req.id_prefix + std::to_string(n);
            s.x = crop(x, r0, c0, p, p);
            for (int t = 0; t < kTaskCount; ++t)
                s.y[t] = crop(full[t], r0, c0, p, p);
            s.loss_mask = joint_mask(s.x, s.y);
            out.push_back(std::move(s));
            placed = true;
        }
        if (!placed)
            throw DomainError("patch retry budget exhausted for sample " + std::to_string(n));
    }
    return out;
}

Sample augment(const Sample& s, const AugmentSpec& spec, std::uint64_t seed, const TargetRecipe& recipe)
{
    if (!spec.enabled)
        return s;
    spec.validate();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, spec.rotations.size() - 1);
    const int k = spec.rotations[pick(rng)];
    double scale = spec.scale_low;
    if (spec.scale_high > spec.scale_low)
        scale = std::uniform_real_distribution<double>(spec.scale_low, spec.scale_high)(rng);

    const int ph = s.x.height();
    const int pw = s.x.width();
    BandStack x = rotate90(s.x, k);
    Grid2D h = rotate90(s.target(TaskId::H), k);
    if (scale != 1.0) {
        x = resample_bilinear(x, scale);
        h = resample_bilinear(h, scale);
    }
    const bool odd = (k % 2) != 0;
    x = fit_center(x, odd ? pw : ph, odd ? ph : pw);
    h = fit_center(h, odd ? pw : ph, odd ? ph : pw);

    Sample out;
    out.id = s.id;
    out.y = build_targets(x, h, recipe);
    out.x = std::move(x);
    out.loss_mask = joint_mask(out.x, out.y);
    return out;
}

Manifest split_manifest(const std::vector<std::string>& ids, std::array<double, 3> fractions, std::uint64_t seed)
{
    double total = 0.0;
    for (double f : fractions) {
        if (!(f >= 0.0))
            throw DomainError("split fractions must be non-negative");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw DomainError("split fractions must sum to 1");
    std::set<std::string> seen(ids.begin(), ids.end());
    if (seen.size() != ids.size())
        throw DomainError("sample ids must be unique");

    const std::size_t n = ids.size();
    // Largest-remainder rounding; the three counts always sum to n.
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rema{};
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = fractions[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        rema[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rema[a] > rema[b]; });
    for (std::size_t j = 0; assigned < n; ++j, ++assigned)
        ++counts[order[j % 3]];

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    Manifest m;
    m.seed = seed;
    std::size_t pos = 0;
    for (int part = 0; part < 3; ++part) {
        for (std::size_t c = 0; c < counts[part]; ++c, ++pos) {
            ManifestRecord r;
            r.id = ids[perm[pos]];
            r.split = static_cast<Split>(part);
            r.bands_path = r.id + ".bands.satc";
            for (auto t : kAllTasks)
                r.target_paths[ordinal(t)] = r.id + "." + std::string(task_name(t)) + ".satc";
            m.records.push_back(std::move(r));
        }
    }
    return m;
}

Manifest split_manifest(const std::vector<Sample>& samples, std::array<double, 3> fractions, std::uint64_t seed)
{
    std::vector<std::string> ids;
    ids.reserve(samples.size());
    for (const auto& s : samples)
        ids.push_back(s.id);
    Manifest m = split_manifest(ids, fractions, seed);
    if (!samples.empty())
        m.patch_size = samples.front().x.height();
    return m;
}

void write_manifest(const fs::path& path, const Manifest& m)
{
    std::ostringstream os;
    os << "# satcalc-manifest v1\n";
    os << "# seed=" << m.seed << "\n";
    os << "# patch_size=" << m.patch_size << "\n";
    for (const auto& [k, v] : m.params)
        os << "# " << k << "=" << v << "\n";
    for (const auto& r : m.records) {
        os << r.id << '\t' << split_name(r.split) << '\t' << r.bands_path;
        for (const auto& p : r.target_paths)
            os << '\t' << p;
        os << '\n';
    }
    write_text_atomic(path, os.str());
}

Manifest read_manifest(const fs::path& path)
{
    std::ifstream f(path);
    if (!f)
        throw IoError("cannot open manifest " + path.string());
    Manifest m;
    std::string line;
    std::set<std::string> ids;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty())
            continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                continue;
            const std::string key = line.substr(2, eq - 2);
            const std::string val = line.substr(eq + 1);
            if (key == "seed")
                m.seed = std::stoull(val);
            else if (key == "patch_size")
                m.patch_size = std::stoi(val);
            else
                m.params[key] = val;
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t'))
            fields.push_back(field);
        if (fields.size() != 3 + kTaskCount)
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(3 + kTaskCount) + " tab-separated fields");
        ManifestRecord r;
        r.id = fields[0];
        const auto sp = parse_split(fields[1]);
        if (!sp)
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": unknown split '" + fields[1] + "'");
        r.split = *sp;
        r.bands_path = fields[2];
        for (int t = 0; t < kTaskCount; ++t)
            r.target_paths[t] = fields[3 + t];
        if (!ids.insert(r.id).second)
            throw FormatError(path.string() + ": duplicate sample id '" + r.id + "'");
        m.records.push_back(std::move(r));
    }
    return m;
}

void write_dataset(const fs::path& dir, const std::vector<Sample>& samples, Manifest& m)
{
    fs::create_directories(dir);
    std::map<std::string, const Sample*> by_id;
    for (const auto& s : samples)
        by_id[s.id] = &s;
    for (const auto& r : m.records) {
        const auto it = by_id.find(r.id);
        if (it == by_id.end())
            throw DomainError("manifest references unknown sample '" + r.id + "'");
        write_bands(dir / r.bands_path, it->second->x);
        for (int t = 0; t < kTaskCount; ++t)
            write_grid(dir / r.target_paths[t], it->second->y[t]);
    }
    write_manifest(dir / "manifest.tsv", m);
}

Sample load_sample(const fs::path& manifest_dir, const ManifestRecord& r)
{
    Sample s;
    s.id = r.id;
    s.x = read_bands(manifest_dir / r.bands_path);
    for (int t = 0; t < kTaskCount; ++t) {
        s.y[t] = read_grid(manifest_dir / r.target_paths[t]);
        if (s.y[t].height() != s.x.height() || s.y[t].width() != s.x.width())
            throw FormatError("target " + r.target_paths[t] + " shape differs from bands");
    }
    s.loss_mask = joint_mask(s.x, s.y);
    return s;
}

} // namespace satcalc
