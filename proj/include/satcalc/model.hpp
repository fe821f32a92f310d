#pragma once

#include "satcalc/dataset.hpp"
#include "satcalc/grid.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace satcalc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// N x d token features, one row per patch token in row-major patch order.
using TokenGrid = Eigen::MatrixXd;

enum class DecoderMode { Global, Tokenwise };

struct ModelConfig {
    int input_hw = 32;
    int in_channels = 4;
    int patch_p = 4;
    int embed_d = 64;
    int n_heads = 4;
    int window = 4;
    int n_backbone_blocks = 2;
    int decoder_hidden = 1024;
    int decoder_layers = 4;
    DecoderMode decoder_mode = DecoderMode::Global;
    std::uint64_t backbone_seed = 0;

    void validate() const;
    int token_side() const { return input_hw / patch_p; }
    int n_tokens() const { return token_side() * token_side(); }
    int pixels() const { return input_hw * input_hw; }

    // key=value lines
    std::string to_text() const;
    static ModelConfig from_text(const std::string& text);

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Row-vector convention: y = x * weight + bias, weight is in x out.
struct Linear {
    Matrix weight;
    Matrix bias; // 1 x out

    Linear() = default;
    Linear(int in, int out) : weight(Matrix::Zero(in, out)), bias(Matrix::Zero(1, out)) {}
    Matrix apply(const Matrix& x) const;
    int in() const { return static_cast<int>(weight.rows()); }
    int out() const { return static_cast<int>(weight.cols()); }
};

struct BackboneBlock {
    Matrix norm1_gain, norm1_offset; // 1 x d
    Linear q, k, v, o;
    Matrix norm2_gain, norm2_offset;
    Linear fc1, fc2;
    bool shifted = false;
};

// Frozen feature extractor, fully determined by (config, backbone_seed).
struct BackboneParams {
    Linear patch_embed; // (p*p*4) x d
    std::vector<BackboneBlock> blocks;

    static BackboneParams init(const ModelConfig& cfg);
    std::uint64_t content_hash() const;
};

struct AdapterParams {
    Linear q, k, v, o;
    Linear fc1, fc2; // d -> 4d -> d
};

struct DecoderParams {
    std::vector<Linear> layers;
    // Frozen multiplier on the last layer, see task_output_scale().
    double output_scale = 1.0;
};

// Typical magnitude of a task's targets in its own unit; the frozen factor
// applied to that task's last decoder layer.
double task_output_scale(TaskId t);

// Everything that receives gradient updates. Also serves as the gradient and
// optimizer-moment container.
struct TrainableParams {
    Matrix prompts; // kTaskCount x d
    std::array<AdapterParams, kTaskCount> adapters;
    std::array<DecoderParams, kTaskCount> decoders;

    static TrainableParams init(const ModelConfig& cfg, std::uint64_t seed);
    TrainableParams zeros_like() const;
};

using GradientSet = TrainableParams;

struct NamedGroup {
    std::string name;
    Matrix* value;
};
struct ConstNamedGroup {
    std::string name;
    const Matrix* value;
};

// Stable, ordered list of every trainable tensor.
std::vector<NamedGroup> param_groups(TrainableParams& p);
std::vector<ConstNamedGroup> param_groups(const TrainableParams& p);
std::size_t parameter_count(const TrainableParams& p);

struct ModelParams {
    ModelConfig config;
    BackboneParams backbone;
    TrainableParams trainable;

    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
};

Vector prompt_embed(const TrainableParams& t, TaskId task);

// Zero-filled at nodata pixels; returns N x (p*p*4) patch vectors.
Matrix patchify(const BandStack& x, int patch_p);
TokenGrid backbone_forward(const BackboneParams& b, const ModelConfig& cfg, const BandStack& x);

// Multi-head cross attention with queries proj_Q(f_i + q). When `weights`
// is given it receives one N x N row-stochastic matrix per head.
TokenGrid cross_attend(const AdapterParams& a, const TokenGrid& f, const Vector& q, int n_heads,
                       std::vector<Matrix>* weights = nullptr);
// F_t = A + MLP(A), A = cross_attend(f, q).
TokenGrid adapter_forward(const AdapterParams& a, const TokenGrid& f, const Vector& q, int n_heads);

// Row-major input_hw^2 prediction in double precision.
Vector decode_values(const DecoderParams& dp, const TokenGrid& f_t, const ModelConfig& cfg);
Grid2D decode(const DecoderParams& dp, const TokenGrid& f_t, const ModelConfig& cfg);

std::map<TaskId, Grid2D> forward_all(const ModelParams& m, const BandStack& x, const std::vector<TaskId>& tasks);

double gelu(double x);
double gelu_grad(double x);

} // namespace satcalc
