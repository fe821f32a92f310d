#include "satcalc/metrics.hpp"

#include "satcalc/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace satcalc {

void EvalMaskSpec::validate() const
{
    if (!(max_gt > nmae_min_gt && nmae_min_gt > 0.0))
        throw DomainError("evaluation mask needs max_gt > nmae_min_gt > 0");
}

void PixelPairs::append(const Grid2D& pred_grid, const Grid2D& gt_grid, const MaskGrid& mask)
{
    if (!pred_grid.same_shape(gt_grid) || mask.height != gt_grid.height() || mask.width != gt_grid.width())
        throw_shape("prediction, ground truth and mask shapes differ");
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask.bits[i] || !pred_grid.valid_at(i) || !gt_grid.valid_at(i))
            continue;
        pred.push_back(pred_grid.value_at(i));
        gt.push_back(gt_grid.value_at(i));
    }
}

bool uses_height_cap(TaskId t)
{
    return t == TaskId::H;
}

MaskGrid evaluation_mask(const Grid2D& gt, const EvalMaskSpec& spec, bool apply_cap)
{
    spec.validate();
    MaskGrid m = gt.mask();
    if (spec.veg_mask)
        m = m & *spec.veg_mask;
    if (apply_cap)
        for (std::size_t i = 0; i < m.size(); ++i)
            if (m.bits[i] && !(gt.value_at(i) < spec.max_gt))
                m.bits[i] = 0;
    return m;
}

namespace {

void require_support(const PixelPairs& px, std::size_t n, const char* what)
{
    if (px.size() < n)
        throw EmptySupportError(std::string(what) + ": not enough pixels under the evaluation mask");
}

PixelPairs gather(const Grid2D& pred, const Grid2D& gt, const MaskGrid& mask)
{
    PixelPairs px;
    px.append(pred, gt, mask);
    return px;
}

} // namespace

ErrorStats error_stats(const PixelPairs& px)
{
    require_support(px, 1, "error_stats");
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < px.size(); ++i) {
        const double e = px.pred[i] - px.gt[i];
        abs_sum += std::abs(e);
        sq_sum += e * e;
        sum += e;
    }
    const double n = static_cast<double>(px.size());
    return {abs_sum / n, std::sqrt(sq_sum / n), sum / n};
}

double nmae(const PixelPairs& px, double min_gt)
{
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < px.size(); ++i) {
        if (!(px.gt[i] > min_gt))
            continue;
        acc += std::abs(px.pred[i] - px.gt[i]) / px.gt[i];
        ++n;
    }
    if (n == 0)
        throw EmptySupportError("nmae: no ground-truth pixel above " + format_metric(min_gt));
    return 100.0 * acc / static_cast<double>(n);
}

double r2_score(const PixelPairs& px)
{
    require_support(px, 2, "r2_score");
    double mean = 0.0;
    for (double g : px.gt)
        mean += g;
    mean /= static_cast<double>(px.size());
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < px.size(); ++i) {
        ss_res += (px.pred[i] - px.gt[i]) * (px.pred[i] - px.gt[i]);
        ss_tot += (px.gt[i] - mean) * (px.gt[i] - mean);
    }
    if (ss_tot == 0.0)
        throw DomainError("r2_score: ground truth is constant");
    return 1.0 - ss_res / ss_tot;
}

double psnr(const PixelPairs& px, double peak)
{
    if (!(peak > 0.0))
        throw DomainError("psnr: peak must be positive");
    require_support(px, 1, "psnr");
    double sq = 0.0;
    for (std::size_t i = 0; i < px.size(); ++i)
        sq += (px.pred[i] - px.gt[i]) * (px.pred[i] - px.gt[i]);
    const double mse = sq / static_cast<double>(px.size());
    if (mse == 0.0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double tree_cover_iou(const PixelPairs& px, double threshold)
{
    require_support(px, 1, "tree_cover_iou");
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < px.size(); ++i) {
        const bool p = px.pred[i] > threshold;
        const bool g = px.gt[i] > threshold;
        inter += (p && g) ? 1 : 0;
        uni += (p || g) ? 1 : 0;
    }
    if (uni == 0)
        return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

ErrorStats error_stats(const Grid2D& pred, const Grid2D& gt, const MaskGrid& mask)
{
    return error_stats(gather(pred, gt, mask));
}

double nmae(const Grid2D& pred, const Grid2D& gt, const MaskGrid& mask, double min_gt)
{
    return nmae(gather(pred, gt, mask), min_gt);
}

double r2_score(const Grid2D& pred, const Grid2D& gt, const MaskGrid& mask)
{
    return r2_score(gather(pred, gt, mask));
}

double psnr(const Grid2D& pred, const Grid2D& gt, const MaskGrid& mask, double peak)
{
    return psnr(gather(pred, gt, mask), peak);
}

double tree_cover_iou(const Grid2D& pred_h, const Grid2D& gt_h, const MaskGrid& mask, double threshold)
{
    return tree_cover_iou(gather(pred_h, gt_h, mask), threshold);
}

double value_range(std::span<const Grid2D* const> gts)
{
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const Grid2D* g : gts)
        for (std::size_t i = 0; i < g->size(); ++i)
            if (g->valid_at(i)) {
                lo = std::min<double>(lo, g->value_at(i));
                hi = std::max<double>(hi, g->value_at(i));
            }
    return hi >= lo ? hi - lo : 0.0;
}

MetricReport evaluate_pixels(const PixelPairs& px, TaskId task, const EvalMaskSpec& spec, std::optional<double> peak)
{
    MetricReport r;
    r.task = task;
    r.n_pixels = px.size();
    const ErrorStats e = error_stats(px);
    r.mae = e.mae;
    r.rmse = e.rmse;
    r.bias = e.bias;

    bool constant = true;
    for (double g : px.gt)
        constant = constant && g == px.gt.front();
    if (px.size() >= 2 && !constant)
        r.r2 = r2_score(px);

    double pk = 0.0;
    if (peak) {
        pk = *peak;
    } else {
        const auto [lo, hi] = std::minmax_element(px.gt.begin(), px.gt.end());
        pk = *hi - *lo;
    }
    if (pk > 0.0)
        r.psnr_db = psnr(px, pk);

    if (task == TaskId::H) {
        const bool any_tall = std::any_of(px.gt.begin(), px.gt.end(), [&](double g) { return g > spec.nmae_min_gt; });
        if (any_tall)
            r.nmae_pct = nmae(px, spec.nmae_min_gt);
        r.tree_cover_iou = tree_cover_iou(px, spec.iou_threshold);
    }
    return r;
}

MetricReport evaluate_task(const Grid2D& pred, const Grid2D& gt, TaskId task, const EvalMaskSpec& spec,
                           std::optional<double> peak)
{
    if (!pred.same_shape(gt))
        throw_shape("prediction and ground truth shapes differ");
    const MaskGrid m = evaluation_mask(gt, spec, uses_height_cap(task));
    return evaluate_pixels(gather(pred, gt, m), task, spec, peak);
}

std::string format_metric(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string report_header()
{
    return "sample\ttask\tn_pixels\tmae\trmse\tnmae_pct\tbias\tr2\tpsnr_db\ttree_cover_iou\n";
}

std::string report_row(const std::string& sample, const MetricReport& r)
{
    auto opt = [](const std::optional<double>& v) { return v ? format_metric(*v) : std::string("na"); };
    std::string s = sample + "\t" + std::string(task_name(r.task)) + "\t" + std::to_string(r.n_pixels) + "\t" +
                    format_metric(r.mae) + "\t" + format_metric(r.rmse) + "\t" + opt(r.nmae_pct) + "\t" +
                    format_metric(r.bias) + "\t" + opt(r.r2) + "\t" + opt(r.psnr_db) + "\t" +
                    opt(r.tree_cover_iou) + "\n";
    return s;
}

} // namespace satcalc
