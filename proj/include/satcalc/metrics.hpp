#pragma once

#include "satcalc/dataset.hpp"
#include "satcalc/grid.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace satcalc {

struct EvalMaskSpec {
    std::optional<MaskGrid> veg_mask;
    double max_gt = 60.0;        // canopy-height cap, metres
    double nmae_min_gt = 2.0;    // nMAE support: gt strictly above this
    double iou_threshold = 2.0;  // tree / no-tree split, metres

    void validate() const;
};

struct ErrorStats {
    double mae = 0.0;
    double rmse = 0.0;
    double bias = 0.0;
};

struct MetricReport {
    TaskId task = TaskId::NDVI;
    std::size_t n_pixels = 0;
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> nmae_pct;
    double bias = 0.0;
    std::optional<double> r2;       // absent when gt is constant
    std::optional<double> psnr_db;  // +inf when mse == 0; absent when peak <= 0
    std::optional<double> tree_cover_iou;
};

// Pixel pairs gathered from grids under a mask, in row-major order.
struct PixelPairs {
    std::vector<double> pred;
    std::vector<double> gt;

    std::size_t size() const { return gt.size(); }
    void append(const Grid2D& pred_grid, const Grid2D& gt_grid, const MaskGrid& mask);
};

// valid(gt) & veg_mask & (gt < max_gt when `apply_cap`).
MaskGrid evaluation_mask(const Grid2D& gt, const EvalMaskSpec& spec, bool apply_cap);
// The cap applies to canopy height only.
bool uses_height_cap(TaskId t);

ErrorStats error_stats(const PixelPairs& px);
double nmae(const PixelPairs& px, double min_gt = 2.0);
double r2_score(const PixelPairs& px);
double psnr(const PixelPairs& px, double peak);
double tree_cover_iou(const PixelPairs& px, double threshold = 2.0);

ErrorStats error_stats(const Grid2D& pred, const Grid2D& gt, const MaskGrid& mask);
double nmae(const Grid2D& pred, const Grid2D& gt, const MaskGrid& mask, double min_gt = 2.0);
double r2_score(const Grid2D& pred, const Grid2D& gt, const MaskGrid& mask);
double psnr(const Grid2D& pred, const Grid2D& gt, const MaskGrid& mask, double peak);
double tree_cover_iou(const Grid2D& pred_h, const Grid2D& gt_h, const MaskGrid& mask, double threshold = 2.0);

// Ground-truth range (max - min) over valid pixels; the default PSNR peak.
double value_range(std::span<const Grid2D* const> gts);

// Full report over already-gathered pixels. nMAE and tree-cover IoU are
// only computed for canopy height. `peak` defaults to the gt range of `px`.
MetricReport evaluate_pixels(const PixelPairs& px, TaskId task, const EvalMaskSpec& spec,
                             std::optional<double> peak = std::nullopt);
MetricReport evaluate_task(const Grid2D& pred, const Grid2D& gt, TaskId task, const EvalMaskSpec& spec,
                           std::optional<double> peak = std::nullopt);

// Report serialization: header and one tab-separated row.
std::string report_header();
std::string report_row(const std::string& sample, const MetricReport& r);
std::string format_metric(double v);

} // namespace satcalc
