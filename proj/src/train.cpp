#include "satcalc/train.hpp"

#include "model_internal.hpp"
#include "satcalc/error.hpp"
#include "satcalc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace satcalc {

namespace {

std::vector<TaskId> normalized_tasks(const std::vector<TaskId>& tasks)
{
    std::set<int> ords;
    for (auto t : tasks)
        ords.insert(ordinal(t));
    std::vector<TaskId> out;
    for (int o : ords)
        out.push_back(static_cast<TaskId>(o));
    return out;
}

Matrix stack_features(std::span<const Matrix> features)
{
    const Eigen::Index n = features.front().rows();
    const Eigen::Index d = features.front().cols();
    Matrix out(n * static_cast<Eigen::Index>(features.size()), d);
    for (std::size_t s = 0; s < features.size(); ++s)
        out.middleRows(static_cast<Eigen::Index>(s) * n, n) = features[s];
    return out;
}

// Batch-mean of the per-sample masked MAE for one task. When `d_pred` is
// given it receives d(weight * loss)/d(pred).
long double task_l1(const Matrix& pred, std::span<const Sample> batch, TaskId task, double weight,
                    Matrix* d_pred)
{
    const double b = static_cast<double>(batch.size());
    long double total = 0.0L;
    if (d_pred)
        d_pred->setZero(pred.rows(), pred.cols());
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const Grid2D& y = batch[s].target(task);
        const MaskGrid& mask = batch[s].loss_mask;
        const std::size_t count = mask.count();
        if (count == 0)
            continue;
        const double inv = 1.0 / static_cast<double>(count);
        long double acc = 0.0L;
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (!mask.bits[i])
                continue;
            const long double e = static_cast<long double>(pred(static_cast<Eigen::Index>(s),
                                                                static_cast<Eigen::Index>(i))) -
                                  y.value_at(i);
            acc += std::abs(e);
            if (d_pred) {
                const double sign = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
                (*d_pred)(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) = weight * sign * inv / b;
            }
        }
        total += acc / static_cast<long double>(count);
    }
    return total / static_cast<long double>(b);
}

void check_batch(const ModelParams& m, std::span<const Sample> batch)
{
    if (batch.empty())
        throw DomainError("empty batch");
    for (const auto& s : batch)
        if (s.x.height() != m.config.input_hw || s.x.width() != m.config.input_hw)
            throw_shape("sample '" + s.id + "' does not match the model input size");
}

std::string fmt(double v)
{
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

} // namespace

double LossWeights::sum() const
{
    return std::accumulate(lambda.begin(), lambda.end(), 0.0);
}

void LossWeights::validate() const
{
    for (double l : lambda)
        if (!(l > 0.0) || !std::isfinite(l))
            throw DomainError("loss weights must be positive and finite");
}

LossResult weighted_loss(const std::map<TaskId, Grid2D>& preds, const TargetMaps& targets, const MaskGrid& mask,
                         const LossWeights& w)
{
    const std::size_t count = mask.count();
    if (count == 0)
        throw EmptySupportError("loss mask has no valid pixels");
    LossResult r;
    for (const auto& [task, pred] : preds) {
        const Grid2D& y = targets[ordinal(task)];
        if (!pred.same_shape(y) || pred.height() != mask.height || pred.width() != mask.width)
            throw_shape("prediction/target/mask shapes differ for task " + std::string(task_name(task)));
        double acc = 0.0;
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask.bits[i])
                acc += std::abs(static_cast<double>(pred.value_at(i)) - static_cast<double>(y.value_at(i)));
        const double mae = acc / static_cast<double>(count);
        r.per_task[task] = mae;
        r.total += w[task] * mae;
    }
    return r;
}

std::vector<Matrix> backbone_features(const ModelParams& m, std::span<const Sample> batch, int threads)
{
    std::vector<Matrix> out(batch.size());
    parallel_for(batch.size(), threads,
                 [&](std::size_t i) { out[i] = backbone_forward(m.backbone, m.config, batch[i].x); });
    return out;
}

double batch_loss(const ModelParams& m, std::span<const Matrix> features, std::span<const Sample> batch,
                  const std::vector<TaskId>& tasks, const LossWeights& w, std::array<double, kTaskCount>* per_task)
{
    check_batch(m, batch);
    const auto ts = normalized_tasks(tasks);
    const Matrix stacked = stack_features(features);
    const int b = static_cast<int>(batch.size());
    long double total = 0.0L;
    if (per_task)
        per_task->fill(0.0);
    for (TaskId t : ts) {
        const int i = ordinal(t);
        const Matrix pred = detail::task_forward(m.trainable.adapters[i], m.trainable.decoders[i],
                                                 prompt_embed(m.trainable, t), stacked, b, m.config, nullptr);
        const long double l = task_l1(pred, batch, t, w[t], nullptr);
        if (per_task)
            (*per_task)[i] = static_cast<double>(l);
        total += static_cast<long double>(w[t]) * l;
    }
    return static_cast<double>(total);
}

BackwardResult backward(const ModelParams& m, std::span<const Sample> batch, const std::vector<TaskId>& tasks,
                        const LossWeights& w, int threads)
{
    check_batch(m, batch);
    const auto ts = normalized_tasks(tasks);
    if (ts.empty())
        throw DomainError("backward needs at least one task");
    const auto features = backbone_features(m, batch, threads);
    const Matrix stacked = stack_features(features);
    const int b = static_cast<int>(batch.size());

    BackwardResult r;
    r.grads = m.trainable.zeros_like();
    parallel_for(ts.size(), threads, [&](std::size_t k) {
        const TaskId t = ts[k];
        const int i = ordinal(t);
        detail::TaskTrace trace;
        const Matrix pred = detail::task_forward(m.trainable.adapters[i], m.trainable.decoders[i],
                                                 prompt_embed(m.trainable, t), stacked, b, m.config, &trace);
        Matrix d_pred;
        r.per_task[i] = task_l1(pred, batch, t, w[t], &d_pred);
        detail::task_backward(trace, d_pred, m.trainable.adapters[i], m.trainable.decoders[i], m.config,
                              {&r.grads.adapters[i], &r.grads.decoders[i], r.grads.prompts.row(i)});
    });
    for (TaskId t : ts)
        r.loss += w[t] * r.per_task[ordinal(t)];
    return r;
}

AdamState AdamState::for_params(const TrainableParams& p, double lr)
{
    AdamState s;
    s.m = p.zeros_like();
    s.v = p.zeros_like();
    s.lr = lr;
    return s;
}

void adam_step(AdamState& s, TrainableParams& params, const GradientSet& g)
{
    auto pg = param_groups(params);
    const auto gg = param_groups(g);
    auto mg = param_groups(s.m);
    auto vg = param_groups(s.v);
    if (pg.size() != gg.size() || pg.size() != mg.size() || pg.size() != vg.size())
        throw_shape("gradient set does not cover the trainable parameters");
    for (std::size_t i = 0; i < pg.size(); ++i) {
        const Matrix& gi = *gg[i].value;
        if (pg[i].name != gg[i].name || gi.rows() != pg[i].value->rows() || gi.cols() != pg[i].value->cols() ||
            mg[i].value->rows() != gi.rows() || mg[i].value->cols() != gi.cols())
            throw_shape("gradient shape mismatch for " + pg[i].name);
    }
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < pg.size(); ++i) {
        auto p = pg[i].value->array();
        auto m = mg[i].value->array();
        auto v = vg[i].value->array();
        const auto gi = gg[i].value->array();
        m = s.beta1 * m + (1.0 - s.beta1) * gi;
        v = s.beta2 * v + (1.0 - s.beta2) * gi.square();
        p -= s.lr * (m / c1) / ((v / c2).sqrt() + s.eps);
    }
}

double plateau_step(PlateauState& s, double val_loss, double lr)
{
    if (!std::isfinite(val_loss))
        throw DomainError("validation loss is not finite");
    if (val_loss < s.best - s.min_delta) {
        s.best = val_loss;
        s.bad_epochs = 0;
        return lr;
    }
    if (++s.bad_epochs > s.patience) {
        s.bad_epochs = 0;
        return lr * s.factor;
    }
    return lr;
}

bool early_stop_step(EarlyStopState& s, double val_loss)
{
    if (!std::isfinite(val_loss))
        throw DomainError("validation loss is not finite");
    if (val_loss < s.best) {
        s.best = val_loss;
        s.bad_epochs = 0;
        return false;
    }
    return ++s.bad_epochs > s.patience;
}

void TrainConfig::validate() const
{
    model.validate();
    weights.validate();
    augment.validate();
    if (max_epochs < 1)
        throw DomainError("max_epochs must be >= 1");
    if (batch_size < 1)
        throw DomainError("batch_size must be >= 1");
    if (!(lr > 0.0))
        throw DomainError("learning rate must be positive");
    if (tasks.empty())
        throw DomainError("at least one task must be trained");
}

std::string TrainConfig::to_text() const
{
    std::ostringstream os;
    os << model.to_text();
    os << "max_epochs=" << max_epochs << "\n"
       << "batch_size=" << batch_size << "\n"
       << "lr=" << fmt(lr) << "\n"
       << "augment=" << (augment.enabled ? "on" : "off") << "\n"
       << "scale_low=" << fmt(augment.scale_low) << "\n"
       << "scale_high=" << fmt(augment.scale_high) << "\n"
       << "early_stopping=" << (early_stopping ? "on" : "off") << "\n"
       << "forest_type=" << forest_type_name(recipe.allometry.forest_type) << "\n";
    os << "tasks=";
    for (std::size_t i = 0; i < tasks.size(); ++i)
        os << (i ? "," : "") << task_name(tasks[i]);
    os << "\n";
    for (auto t : kAllTasks)
        os << "weight_" << task_name(t) << "=" << fmt(weights[t]) << "\n";
    return os.str();
}

TrainConfig TrainConfig::from_text(const std::string& text)
{
    TrainConfig c;
    std::ostringstream model_text;
    std::istringstream is(text);
    std::string line;
    auto on_off = [](const std::string& key, const std::string& v) {
        if (v == "on" || v == "true" || v == "1")
            return true;
        if (v == "off" || v == "false" || v == "0")
            return false;
        throw FormatError("expected on/off for '" + key + "', got '" + v + "'");
    };
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line without '=': " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "max_epochs") c.max_epochs = std::stoi(val);
            else if (key == "batch_size") c.batch_size = std::stoi(val);
            else if (key == "lr") c.lr = std::stod(val);
            else if (key == "augment") c.augment.enabled = on_off(key, val);
            else if (key == "scale_low") c.augment.scale_low = std::stod(val);
            else if (key == "scale_high") c.augment.scale_high = std::stod(val);
            else if (key == "early_stopping") c.early_stopping = on_off(key, val);
            else if (key == "forest_type") {
                const auto ft = parse_forest_type(val);
                if (!ft)
                    throw FormatError("unknown forest type '" + val + "'");
                c.recipe.allometry = coeffs_for(*ft);
            } else if (key == "tasks") {
                c.tasks.clear();
                std::stringstream ss(val);
                std::string name;
                while (std::getline(ss, name, ',')) {
                    const auto t = parse_task(name);
                    if (!t)
                        throw FormatError("unknown task '" + name + "'");
                    c.tasks.push_back(*t);
                }
            } else if (key.rfind("weight_", 0) == 0) {
                const auto t = parse_task(key.substr(7));
                if (!t)
                    throw FormatError("unknown task in '" + key + "'");
                c.weights.lambda[ordinal(*t)] = std::stod(val);
            } else
                model_text << line << "\n";
        } catch (const std::logic_error&) {
            throw FormatError("bad value for config key '" + key + "': " + val);
        }
    }
    c.model = ModelConfig::from_text(model_text.str());
    c.validate();
    return c;
}

TrainResult train_loop(const TrainConfig& cfg, std::span<const Sample> train, std::span<const Sample> val,
                       std::uint64_t seed)
{
    cfg.validate();
    if (train.empty() || val.empty())
        throw DomainError("training needs non-empty train and val splits");

    TrainResult r;
    r.model = ModelParams::init(cfg.model, seed);
    r.backbone_hash_before = r.model.backbone.content_hash();
    check_batch(r.model, train);
    check_batch(r.model, val);

    AdamState adam = AdamState::for_params(r.model.trainable, cfg.lr);
    PlateauState plateau;
    EarlyStopState stopper;
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

    // Validation features never change: the backbone is frozen and val
    // samples are not augmented.
    const auto val_features = backbone_features(r.model, val, cfg.threads);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const std::uint64_t epoch_seed = sample_seed(mix64(seed), static_cast<std::uint64_t>(epoch));
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(epoch_seed);
        std::shuffle(order.begin(), order.end(), rng);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = adam.lr;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            std::vector<Sample> batch(end - start);
            parallel_for(batch.size(), cfg.threads, [&](std::size_t j) {
                const std::size_t idx = order[start + j];
                batch[j] = augment(train[idx], cfg.augment, sample_seed(epoch_seed, idx), cfg.recipe);
            });
            BackwardResult res = backward(r.model, batch, cfg.tasks, cfg.weights, cfg.threads);
            adam_step(adam, r.model.trainable, res.grads);
            const double share = static_cast<double>(batch.size()) / static_cast<double>(train.size());
            rec.train_loss += res.loss * share;
            for (int t = 0; t < kTaskCount; ++t)
                rec.train_per_task[t] += res.per_task[t] * share;
        }

        for (std::size_t start = 0; start < val.size(); start += bs) {
            const std::size_t end = std::min(val.size(), start + bs);
            std::array<double, kTaskCount> per{};
            const double l = batch_loss(r.model, std::span(val_features).subspan(start, end - start),
                                        val.subspan(start, end - start), cfg.tasks, cfg.weights, &per);
            const double share = static_cast<double>(end - start) / static_cast<double>(val.size());
            rec.val_loss += l * share;
            for (int t = 0; t < kTaskCount; ++t)
                rec.val_per_task[t] += per[t] * share;
        }

        r.history.push_back(rec);
        adam.lr = plateau_step(plateau, rec.val_loss, adam.lr);
        if (cfg.early_stopping && early_stop_step(stopper, rec.val_loss)) {
            r.stopped_early = true;
            break;
        }
    }
    r.backbone_hash_after = r.model.backbone.content_hash();
    return r;
}

TrainResult train_loop(const TrainConfig& cfg, const Manifest& manifest, const std::filesystem::path& manifest_dir,
                       std::uint64_t seed)
{
    std::vector<Sample> train;
    std::vector<Sample> val;
    for (const auto* rec : manifest.split(Split::Train))
        train.push_back(load_sample(manifest_dir, *rec));
    for (const auto* rec : manifest.split(Split::Val))
        val.push_back(load_sample(manifest_dir, *rec));
    return train_loop(cfg, train, val, seed);
}

std::string history_tsv(const std::vector<EpochRecord>& history)
{
    std::ostringstream os;
    os << "epoch\ttrain_loss\tval_loss\tlr";
    for (auto t : kAllTasks)
        os << "\ttrain_" << task_name(t);
    for (auto t : kAllTasks)
        os << "\tval_" << task_name(t);
    os << "\n";
    for (const auto& h : history) {
        os << h.epoch << '\t' << fmt(h.train_loss) << '\t' << fmt(h.val_loss) << '\t' << fmt(h.lr);
        for (double v : h.train_per_task)
            os << '\t' << fmt(v);
        for (double v : h.val_per_task)
            os << '\t' << fmt(v);
        os << "\n";
    }
    return os.str();
}

GradCheckOptions GradCheckOptions::tiny()
{
    GradCheckOptions o;
    o.model.input_hw = 8;
    o.model.patch_p = 2;
    o.model.embed_d = 8;
    o.model.n_heads = 2;
    o.model.window = 2;
    o.model.n_backbone_blocks = 2;
    o.model.decoder_hidden = 16;
    o.model.decoder_layers = 2;
    return o;
}

GradCheckReport grad_check(const GradCheckOptions& opt, std::uint64_t seed)
{
    opt.model.validate();
    ModelParams m = ModelParams::init(opt.model, seed);
    const int hw = opt.model.input_hw;

    std::vector<Sample> batch;
    for (int i = 0; i < opt.batch; ++i) {
        if (opt.zero_inputs) {
            Sample s;
            s.id = "zero" + std::to_string(i);
            std::array<Grid2D, 4> bands;
            bands.fill(Grid2D(hw, hw, 0.0f));
            s.x = BandStack(std::move(bands));
            s.y.fill(Grid2D(hw, hw, 0.0f));
            s.loss_mask = MaskGrid(hw, hw, true);
            batch.push_back(std::move(s));
        } else {
            Scene sc = synth_scene(sample_seed(seed, static_cast<std::uint64_t>(i)), hw, hw);
            batch.push_back(make_sample("g" + std::to_string(i), std::move(sc.bands), sc.height));
        }
    }

    const LossWeights w;
    BackwardResult analytic = backward(m, batch, opt.tasks, w);
    const auto features = backbone_features(m, batch);

    GradCheckReport rep;
    rep.all_finite = std::isfinite(analytic.loss);
    auto params = param_groups(m.trainable);
    auto grads = param_groups(analytic.grads);
    for (std::size_t gi = 0; gi < params.size(); ++gi) {
        Matrix& p = *params[gi].value;
        Matrix g = *grads[gi].value;
        if (params[gi].name == opt.corrupt_group)
            g *= opt.corrupt_factor;
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            const double saved = p.data()[k];
            p.data()[k] = saved + opt.step;
            const double up = batch_loss(m, features, batch, opt.tasks, w);
            p.data()[k] = saved - opt.step;
            const double down = batch_loss(m, features, batch, opt.tasks, w);
            p.data()[k] = saved;
            const double numeric = (up - down) / (2.0 * opt.step);
            const double a = g.data()[k];
            if (!std::isfinite(numeric) || !std::isfinite(a))
                rep.all_finite = false;
            const double denom = std::max({std::abs(a), std::abs(numeric), opt.floor});
            const double rel = std::abs(a - numeric) / denom;
            ++rep.coordinates;
            if (rel > rep.max_rel_error || !std::isfinite(rel)) {
                rep.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
                rep.worst_group = params[gi].name;
                rep.worst_index = static_cast<std::size_t>(k);
                rep.worst_analytic = a;
                rep.worst_numeric = numeric;
            }
        }
    }
    return rep;
}

} // namespace satcalc
