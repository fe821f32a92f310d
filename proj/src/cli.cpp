#include "satcalc/cli.hpp"

#include "satcalc/checkpoint.hpp"
#include "satcalc/dataset.hpp"
#include "satcalc/ecovars.hpp"
#include "satcalc/error.hpp"
#include "satcalc/indices.hpp"
#include "satcalc/metrics.hpp"
#include "satcalc/model.hpp"
#include "satcalc/parallel.hpp"
#include "satcalc/tensor_io.hpp"
#include "satcalc/train.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace satcalc {

namespace fs = std::filesystem;

namespace {

// Collects a directory's outputs in a hidden sibling and moves them into
// place only on success.
class StagedDir {
public:
    explicit StagedDir(fs::path final_dir) : final_(std::move(final_dir))
    {
        fs::path parent = final_.parent_path();
        if (parent.empty())
            parent = ".";
        stage_ = parent / ("." + final_.filename().string() + ".partial");
        fs::remove_all(stage_);
        fs::create_directories(stage_);
    }
    StagedDir(const StagedDir&) = delete;
    StagedDir& operator=(const StagedDir&) = delete;
    ~StagedDir()
    {
        if (!committed_) {
            std::error_code ec;
            fs::remove_all(stage_, ec);
        }
    }

    const fs::path& path() const { return stage_; }

    void commit()
    {
        fs::create_directories(final_);
        for (const auto& e : fs::recursive_directory_iterator(stage_)) {
            const fs::path rel = fs::relative(e.path(), stage_);
            if (e.is_directory())
                fs::create_directories(final_ / rel);
            else
                fs::rename(e.path(), final_ / rel);
        }
        fs::remove_all(stage_);
        committed_ = true;
    }

private:
    fs::path final_;
    fs::path stage_;
    bool committed_ = false;
};

std::string read_text(const fs::path& p)
{
    std::ifstream f(p);
    if (!f)
        throw IoError("cannot open " + p.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<TaskId> parse_task_list(const std::string& list)
{
    if (list.empty() || list == "all")
        return {kAllTasks.begin(), kAllTasks.end()};
    std::vector<TaskId> out;
    std::stringstream ss(list);
    std::string name;
    while (std::getline(ss, name, ',')) {
        const auto t = parse_task(name);
        if (!t)
            throw Error("unknown task '" + name + "'");
        out.push_back(*t);
    }
    if (out.empty())
        throw Error("empty task list");
    return out;
}

std::pair<int, int> parse_size(const std::string& s)
{
    const auto x = s.find_first_of("xX");
    try {
        if (x == std::string::npos) {
            const int v = std::stoi(s);
            return {v, v};
        }
        return {std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1))};
    } catch (const std::logic_error&) {
        throw Error("bad size '" + s + "', expected HxW");
    }
}

std::array<double, 3> parse_fractions(const std::string& s)
{
    std::array<double, 3> f{};
    std::stringstream ss(s);
    std::string part;
    int i = 0;
    try {
        while (std::getline(ss, part, ',')) {
            if (i >= 3)
                throw Error("split needs exactly three fractions");
            f[i++] = std::stod(part);
        }
    } catch (const std::logic_error&) {
        throw Error("bad split fractions '" + s + "'");
    }
    if (i != 3)
        throw Error("split needs exactly three fractions");
    return f;
}

struct Globals {
    std::uint64_t seed = 0;
    int threads = 1;
    bool verbose = false;
};

// Predicts every requested task over an arbitrary raster by running the
// model on non-overlapping input-size tiles; edge tiles are zero-padded.
std::map<TaskId, Grid2D> predict_raster(const ModelParams& m, const BandStack& x, const std::vector<TaskId>& tasks,
                                        int threads)
{
    const int p = m.config.input_hw;
    const int h = x.height();
    const int w = x.width();
    const int tiles_r = (h + p - 1) / p;
    const int tiles_c = (w + p - 1) / p;
    std::array<Grid2D, 4> bands;
    for (int b = 0; b < 4; ++b) {
        Grid2D g(tiles_r * p, tiles_c * p, 0.0f, false);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                g.set(r, c, x[b](r, c), x[b].valid(r, c));
        bands[b] = std::move(g);
    }
    const BandStack full(std::move(bands), x.resolution_m());

    const std::size_t n_tiles = static_cast<std::size_t>(tiles_r) * tiles_c;
    std::vector<std::map<TaskId, Grid2D>> tile_out(n_tiles);
    parallel_for(n_tiles, threads, [&](std::size_t i) {
        const int tr = static_cast<int>(i) / tiles_c;
        const int tc = static_cast<int>(i) % tiles_c;
        tile_out[i] = forward_all(m, crop(full, tr * p, tc * p, p, p), tasks);
    });

    std::map<TaskId, Grid2D> out;
    for (TaskId t : tasks) {
        Grid2D g(h, w, 0.0f, false);
        for (std::size_t i = 0; i < n_tiles; ++i) {
            const int tr = static_cast<int>(i) / tiles_c;
            const int tc = static_cast<int>(i) % tiles_c;
            const Grid2D& tile = tile_out[i].at(t);
            for (int r = 0; r < p; ++r)
                for (int c = 0; c < p; ++c) {
                    const int rr = tr * p + r;
                    const int cc = tc * p + c;
                    if (rr < h && cc < w && x[0].valid(rr, cc))
                        g.set(rr, cc, tile(r, c), true);
                }
        }
        out.emplace(t, std::move(g));
    }
    return out;
}

struct EvalRows {
    std::string text;
    std::map<TaskId, MetricReport> aggregate;
};

EvalRows evaluate_manifest(const fs::path& gt_dir, const fs::path& pred_dir,
                           const std::vector<const ManifestRecord*>& records, const std::vector<TaskId>& tasks,
                           const EvalMaskSpec& spec)
{
    EvalRows rows;
    rows.text = report_header();
    for (TaskId t : tasks) {
        std::vector<Grid2D> gts;
        std::vector<Grid2D> preds;
        std::vector<MaskGrid> masks;
        for (const auto* r : records) {
            gts.push_back(read_grid(gt_dir / r->target_paths[ordinal(t)]));
            preds.push_back(read_grid(pred_dir / (r->id + "." + std::string(task_name(t)) + ".satc")));
            if (!preds.back().same_shape(gts.back()))
                throw Error("prediction for '" + r->id + "' has the wrong shape");
            masks.push_back(evaluation_mask(gts.back(), spec, uses_height_cap(t)));
        }
        // PSNR peak: ground-truth range over the whole evaluation set.
        std::vector<Grid2D> masked_gt = gts;
        for (std::size_t i = 0; i < gts.size(); ++i)
            masked_gt[i].restrict_to(masks[i]);
        std::vector<const Grid2D*> ptrs;
        for (const auto& g : masked_gt)
            ptrs.push_back(&g);
        const double peak = value_range(ptrs);

        PixelPairs all;
        for (std::size_t i = 0; i < records.size(); ++i) {
            PixelPairs px;
            px.append(preds[i], gts[i], masks[i]);
            all.append(preds[i], gts[i], masks[i]);
            if (px.size() == 0) {
                rows.text += records[i]->id + "\t" + std::string(task_name(t)) + "\t0\tna\tna\tna\tna\tna\tna\tna\n";
                continue;
            }
            rows.text += report_row(records[i]->id, evaluate_pixels(px, t, spec, peak));
        }
        if (all.size() == 0)
            throw EmptySupportError("no evaluable pixels for task " + std::string(task_name(t)));
        const MetricReport agg = evaluate_pixels(all, t, spec, peak);
        rows.aggregate[t] = agg;
        rows.text += report_row("ALL", agg);
    }
    return rows;
}

std::vector<const ManifestRecord*> select_split(const Manifest& man, const std::string& split)
{
    if (split == "all") {
        std::vector<const ManifestRecord*> out;
        for (const auto& r : man.records)
            out.push_back(&r);
        return out;
    }
    const auto s = parse_split(split);
    if (!s)
        throw Error("unknown split '" + split + "'");
    return man.split(*s);
}

void write_predictions(const fs::path& dir, const std::string& prefix, const std::map<TaskId, Grid2D>& preds)
{
    for (const auto& [t, g] : preds)
        write_grid(dir / (prefix + std::string(task_name(t)) + ".satc"), g);
}

} // namespace

int parse_and_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"satcalc: multi-task spectral/structural inversion toolkit", "satcalc"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Random seed");
    auto* threads_opt = app.add_option("--threads", g.threads,
                                       "Worker threads, default from SATCALC_THREADS or 1 (1 = reference mode)")
                            ->check(CLI::PositiveNumber);
    app.add_flag("--verbose", g.verbose, "Progress output on stderr");

    // indices compute
    auto* indices = app.add_subcommand("indices", "Spectral index maps");
    indices->require_subcommand(1);
    auto* idx_compute = indices->add_subcommand("compute", "Compute one index map from a band stack");
    std::string idx_in, idx_kind, idx_out;
    IndexParams ip;
    idx_compute->add_option("--in", idx_in, "Band stack (.satc)")->required();
    idx_compute->add_option("--kind", idx_kind, "ndvi|gndvi|savi|evi|ndwi")->required();
    idx_compute->add_option("--out", idx_out, "Output map (.satc)")->required();
    idx_compute->add_option("--savi-l", ip.savi_L);
    idx_compute->add_option("--evi-g", ip.evi_G);
    idx_compute->add_option("--evi-c1", ip.evi_C1);
    idx_compute->add_option("--evi-c2", ip.evi_C2);
    idx_compute->add_option("--evi-l", ip.evi_L);

    // ecovars
    auto* eco = app.add_subcommand("ecovars", "Biomass and carbon stock from canopy height");
    std::string eco_height, eco_type = "general", eco_agb, eco_cs;
    double eco_cap = 0.0;
    CarbonParams eco_cp;
    eco->add_option("--height", eco_height, "Canopy height (.satc, metres)")->required();
    eco->add_option("--forest-type", eco_type, "coniferous|broadleaf|mixed|general");
    eco->add_option("--out-agb", eco_agb, "Output AGB map")->required();
    eco->add_option("--out-cs", eco_cs, "Output carbon stock map")->required();
    eco->add_option("--cap", eco_cap, "Clamp heights to this value first (0 = off)");
    eco->add_option("--carbon-fraction", eco_cp.carbon_fraction);

    // dataset synth / build
    auto* ds = app.add_subcommand("dataset", "Synthetic scenes and paired samples");
    ds->require_subcommand(1);
    auto* ds_synth = ds->add_subcommand("synth", "Generate synthetic band/height scenes");
    int synth_scenes = 1;
    std::string synth_size = "128x128", synth_out;
    ds_synth->add_option("--scenes", synth_scenes)->check(CLI::NonNegativeNumber);
    ds_synth->add_option("--size", synth_size, "HxW");
    ds_synth->add_option("--out", synth_out)->required();

    auto* ds_build = ds->add_subcommand("build", "Cut paired multi-task samples out of scenes");
    std::vector<std::string> build_bands, build_heights;
    PatchRequest preq;
    std::string build_out, build_split = "0.8,0.1,0.1", build_type = "general";
    double build_cap = 60.0;
    bool build_no_cap = false;
    ds_build->add_option("--bands", build_bands, "Band stack per scene")->required();
    ds_build->add_option("--height", build_heights, "Height map per scene")->required();
    ds_build->add_option("--patch", preq.patch)->check(CLI::PositiveNumber);
    ds_build->add_option("--n", preq.count, "Samples per scene")->check(CLI::NonNegativeNumber);
    ds_build->add_option("--max-nodata", preq.max_nodata_frac);
    ds_build->add_option("--split", build_split, "train,val,test fractions");
    ds_build->add_option("--forest-type", build_type);
    ds_build->add_option("--cap", build_cap, "Height cap before AGB (metres)");
    ds_build->add_flag("--no-cap", build_no_cap);
    ds_build->add_option("--out", build_out)->required();

    // train
    auto* tr = app.add_subcommand("train", "Train the multi-task model");
    std::string tr_manifest, tr_config, tr_out, tr_ablate;
    int tr_epochs = 0;
    tr->add_option("--manifest", tr_manifest)->required();
    tr->add_option("--config", tr_config, "key=value training config");
    tr->add_option("--out", tr_out, "Checkpoint directory")->required();
    tr->add_option("--epochs", tr_epochs, "Override max_epochs");
    tr->add_option("--ablate-depth", tr_ablate, "Decoder depth sweep, e.g. 1-10");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate predictions against ground truth");
    std::string ev_pred, ev_gt, ev_manifest, ev_out, ev_split = "test", ev_tasks = "all", ev_veg;
    ev->add_option("--pred", ev_pred)->required();
    ev->add_option("--gt", ev_gt, "Ground-truth root (default: manifest directory)");
    ev->add_option("--manifest", ev_manifest)->required();
    ev->add_option("--out", ev_out)->required();
    ev->add_option("--split", ev_split, "train|val|test|all");
    ev->add_option("--tasks", ev_tasks);
    ev->add_option("--veg-mask", ev_veg, "Optional vegetation mask grid (.satc, nonzero = vegetation)");

    // predict
    auto* pr = app.add_subcommand("predict", "Run a checkpoint on rasters");
    std::string pr_ckpt, pr_bands, pr_manifest, pr_split = "test", pr_tasks = "all", pr_out;
    pr->add_option("--checkpoint", pr_ckpt)->required();
    auto* pr_bands_opt = pr->add_option("--bands", pr_bands, "Band stack to predict on");
    auto* pr_man_opt = pr->add_option("--manifest", pr_manifest, "Predict every sample of a split");
    pr_bands_opt->excludes(pr_man_opt);
    pr->add_option("--split", pr_split);
    pr->add_option("--tasks", pr_tasks, "Comma list or 'all'");
    pr->add_option("--out", pr_out)->required();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients");
    bool gc_tiny = false, gc_zero = false;
    std::string gc_corrupt;
    double gc_factor = 2.0;
    gc->add_flag("--tiny", gc_tiny, "Use the 8x8, d=8 verification config");
    gc->add_flag("--zero", gc_zero, "All-zero inputs and targets");
    gc->add_option("--corrupt", gc_corrupt, "Scale one gradient group (harness self-test)");
    gc->add_option("--factor", gc_factor);

    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUser;
    }
    // SATCALC_THREADS applies when --threads is absent; invalid values are user errors.
    if (threads_opt->count() == 0) {
        if (const char* env = std::getenv("SATCALC_THREADS"); env && *env) {
            const std::string text(env);
            int n = 0;
            const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
            if (ec != std::errc{} || end != text.data() + text.size() || n < 1) {
                err << "SATCALC_THREADS: expected a positive integer, got '" << text << "'\n";
                return kExitUser;
            }
            g.threads = n;
        }
    }

    auto log = [&](const std::string& msg) {
        if (g.verbose)
            err << msg << "\n";
    };

    try {
        if (*idx_compute) {
            const auto kind = parse_index_kind(idx_kind);
            if (!kind)
                throw Error("unknown index kind '" + idx_kind + "' (expected ndvi|gndvi|savi|evi|ndwi)");
            ip.validate();
            const BandStack x = read_bands(idx_in);
            write_grid(idx_out, compute_index(*kind, x, ip));
            out << "wrote " << index_name(*kind) << " map " << idx_out << "\n";
        } else if (*eco) {
            const auto ft = parse_forest_type(eco_type);
            if (!ft)
                throw Error("unknown forest type '" + eco_type + "'");
            Grid2D h = read_grid(eco_height);
            if (eco_cap > 0.0)
                h = cap_height(h, eco_cap);
            const Grid2D agb = agb_from_height(h, coeffs_for(*ft));
            const Grid2D cs = carbon_stock(agb, eco_cp);
            write_grid(eco_agb, agb);
            write_grid(eco_cs, cs);
            out << "wrote " << eco_agb << " and " << eco_cs << "\n";
        } else if (*ds_synth) {
            const auto [h, w] = parse_size(synth_size);
            StagedDir stage(synth_out);
            std::vector<Scene> scenes(static_cast<std::size_t>(synth_scenes));
            parallel_for(scenes.size(), g.threads, [&](std::size_t i) {
                scenes[i] = synth_scene(sample_seed(g.seed, i), h, w);
            });
            for (std::size_t i = 0; i < scenes.size(); ++i) {
                const std::string base = "scene" + std::to_string(i);
                write_bands(stage.path() / (base + ".bands.satc"), scenes[i].bands);
                write_grid(stage.path() / (base + ".height.satc"), scenes[i].height);
            }
            stage.commit();
            out << "wrote " << scenes.size() << " scene(s) to " << synth_out << "\n";
        } else if (*ds_build) {
            if (build_bands.size() != build_heights.size())
                throw Error("--bands and --height must be given the same number of times");
            const auto ft = parse_forest_type(build_type);
            if (!ft)
                throw Error("unknown forest type '" + build_type + "'");
            TargetRecipe recipe;
            recipe.allometry = coeffs_for(*ft);
            const auto fractions = parse_fractions(build_split);

            std::vector<Sample> samples;
            for (std::size_t k = 0; k < build_bands.size(); ++k) {
                const BandStack x = read_bands(build_bands[k]);
                Grid2D h = read_grid(build_heights[k]);
                if (!build_no_cap)
                    h = cap_height(h, build_cap);
                PatchRequest req = preq;
                req.seed = sample_seed(g.seed, k);
                req.id_prefix = "sc" + std::to_string(k) + "_";
                auto part = extract_patches(x, h, req, recipe);
                log("scene " + std::to_string(k) + ": " + std::to_string(part.size()) + " samples");
                for (auto& s : part)
                    samples.push_back(std::move(s));
            }
            Manifest man = split_manifest(samples, fractions, g.seed);
            man.patch_size = preq.patch;
            man.params["max_nodata_frac"] = format_metric(preq.max_nodata_frac);
            man.params["forest_type"] = std::string(forest_type_name(*ft));
            man.params["height_cap"] = build_no_cap ? "off" : format_metric(build_cap);
            man.params["samples_per_scene"] = std::to_string(preq.count);
            StagedDir stage(build_out);
            write_dataset(stage.path(), samples, man);
            stage.commit();
            out << "wrote " << samples.size() << " samples to " << build_out << "\n";
        } else if (*tr) {
            TrainConfig cfg;
            if (!tr_config.empty())
                cfg = TrainConfig::from_text(read_text(tr_config));
            if (tr_epochs > 0)
                cfg.max_epochs = tr_epochs;
            cfg.threads = g.threads;
            const fs::path man_path(tr_manifest);
            const Manifest man = read_manifest(man_path);
            const fs::path man_dir = man_path.parent_path().empty() ? fs::path(".") : man_path.parent_path();

            std::vector<Sample> train, val;
            for (const auto* r : man.split(Split::Train))
                train.push_back(load_sample(man_dir, *r));
            for (const auto* r : man.split(Split::Val))
                val.push_back(load_sample(man_dir, *r));

            StagedDir stage(tr_out);
            if (tr_ablate.empty()) {
                const TrainResult res = train_loop(cfg, train, val, g.seed);
                save_checkpoint(stage.path(), res.model);
                write_text_atomic(stage.path() / "history.tsv", history_tsv(res.history));
                write_text_atomic(stage.path() / "train_config.txt", cfg.to_text());
                for (const auto& h : res.history)
                    log("epoch " + std::to_string(h.epoch) + " train " + format_metric(h.train_loss) + " val " +
                        format_metric(h.val_loss));
                stage.commit();
                out << "trained " << res.history.size() << " epoch(s); final train loss "
                    << format_metric(res.history.back().train_loss) << "\n";
            } else {
                const auto [lo, hi] = parse_size(tr_ablate.find('-') == std::string::npos
                                                     ? tr_ablate
                                                     : tr_ablate.substr(0, tr_ablate.find('-')) + "x" +
                                                           tr_ablate.substr(tr_ablate.find('-') + 1));
                if (lo < 1 || hi > 10 || lo > hi)
                    throw Error("--ablate-depth must be a range within 1-10");
                std::ostringstream table;
                table << "layers\tmae\tpsnr_db\tr2\trmse\n";
                const EvalMaskSpec spec;
                for (int depth = lo; depth <= hi; ++depth) {
                    TrainConfig c = cfg;
                    c.model.decoder_layers = depth;
                    const TrainResult res = train_loop(c, train, val, g.seed);
                    PixelPairs px;
                    std::vector<Grid2D> gts;
                    for (const auto& s : val) {
                        const auto pred = forward_all(res.model, s.x, {TaskId::H});
                        const Grid2D& gt = s.target(TaskId::H);
                        MaskGrid m = evaluation_mask(gt, spec, true) & s.loss_mask;
                        px.append(pred.at(TaskId::H), gt, m);
                    }
                    const MetricReport rep = evaluate_pixels(px, TaskId::H, spec);
                    table << depth << '\t' << format_metric(rep.mae) << '\t'
                          << (rep.psnr_db ? format_metric(*rep.psnr_db) : "na") << '\t'
                          << (rep.r2 ? format_metric(*rep.r2) : "na") << '\t' << format_metric(rep.rmse) << '\n';
                    write_text_atomic(stage.path() / ("history_layers" + std::to_string(depth) + ".tsv"),
                                      history_tsv(res.history));
                    log("depth " + std::to_string(depth) + " done");
                }
                write_text_atomic(stage.path() / "ablation.tsv", table.str());
                stage.commit();
                out << table.str();
            }
        } else if (*ev) {
            const fs::path man_path(ev_manifest);
            const Manifest man = read_manifest(man_path);
            const fs::path man_dir = man_path.parent_path().empty() ? fs::path(".") : man_path.parent_path();
            const fs::path gt_dir = ev_gt.empty() ? man_dir : fs::path(ev_gt);
            const auto records = select_split(man, ev_split);
            if (records.empty())
                throw Error("split '" + ev_split + "' has no samples");
            EvalMaskSpec spec;
            if (!ev_veg.empty())
                spec.veg_mask = read_grid(ev_veg).mask();
            const EvalRows rows = evaluate_manifest(gt_dir, ev_pred, records, parse_task_list(ev_tasks), spec);
            write_text_atomic(ev_out, rows.text);
            out << "wrote report " << ev_out << "\n";
        } else if (*pr) {
            const ModelParams m = load_checkpoint(pr_ckpt);
            const auto tasks = parse_task_list(pr_tasks);
            StagedDir stage(pr_out);
            if (!pr_bands.empty()) {
                write_predictions(stage.path(), "", predict_raster(m, read_bands(pr_bands), tasks, g.threads));
            } else if (!pr_manifest.empty()) {
                const fs::path man_path(pr_manifest);
                const Manifest man = read_manifest(man_path);
                const fs::path man_dir = man_path.parent_path().empty() ? fs::path(".") : man_path.parent_path();
                for (const auto* r : select_split(man, pr_split)) {
                    const BandStack x = read_bands(man_dir / r->bands_path);
                    write_predictions(stage.path(), r->id + ".", predict_raster(m, x, tasks, g.threads));
                }
            } else {
                throw Error("predict needs --bands or --manifest");
            }
            stage.commit();
            out << "wrote predictions to " << pr_out << "\n";
        } else if (*gc) {
            GradCheckOptions opt = GradCheckOptions::tiny();
            if (!gc_tiny)
                opt.model.decoder_hidden = 32;
            opt.zero_inputs = gc_zero;
            if (!gc_corrupt.empty()) {
                opt.corrupt_group = gc_corrupt;
                opt.corrupt_factor = gc_factor;
            }
            const GradCheckReport rep = grad_check(opt, g.seed);
            out << "coordinates\t" << rep.coordinates << "\n"
                << "max_rel_error\t" << format_metric(rep.max_rel_error) << "\n"
                << "worst_group\t" << rep.worst_group << "[" << rep.worst_index << "]\n"
                << "worst_analytic\t" << format_metric(rep.worst_analytic) << "\n"
                << "worst_numeric\t" << format_metric(rep.worst_numeric) << "\n"
                << "all_finite\t" << (rep.all_finite ? "yes" : "no") << "\n";
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUser;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUser;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitOk;
}

} // namespace satcalc
