#include "satcalc/model.hpp"

#include "model_internal.hpp"
#include "satcalc/ecovars.hpp"
#include "satcalc/error.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>

namespace satcalc {

namespace {

void xavier(Matrix& w, std::mt19937_64& rng)
{
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            w(i, j) = u(rng);
}

Linear make_linear(int in, int out, std::mt19937_64& rng)
{
    Linear l(in, out);
    xavier(l.weight, rng);
    return l;
}

int decoder_out_width(const ModelConfig& cfg)
{
    return cfg.decoder_mode == DecoderMode::Global ? cfg.pixels() : cfg.patch_p * cfg.patch_p;
}

void hash_bytes(std::uint64_t& h, const void* data, std::size_t n)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
}

void hash_matrix(std::uint64_t& h, const Matrix& m)
{
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    hash_bytes(h, dims, sizeof dims);
    hash_bytes(h, m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
}

void hash_linear(std::uint64_t& h, const Linear& l)
{
    hash_matrix(h, l.weight);
    hash_matrix(h, l.bias);
}

// Windowed multi-head self attention on an S x S token grid. Shifted blocks
// use a cyclic shift of window/2 and only let tokens that were contiguous
// before the shift attend to each other.
Matrix window_attention(const BackboneBlock& blk, const Matrix& xn, const ModelConfig& cfg)
{
    const int S = cfg.token_side();
    const int w = cfg.window;
    const int d = cfg.embed_d;
    const int heads = cfg.n_heads;
    const int dh = d / heads;
    const int shift = (blk.shifted && S > w) ? w / 2 : 0;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    const Matrix q = blk.q.apply(xn);
    const Matrix k = blk.k.apply(xn);
    const Matrix v = blk.v.apply(xn);
    Matrix out = Matrix::Zero(xn.rows(), d);

    auto region = [&](int coord) {
        if (shift == 0)
            return 0;
        if (coord < S - w)
            return 0;
        return coord < S - shift ? 1 : 2;
    };

    const int wsz = w * w;
    std::vector<int> idx(wsz);
    std::vector<int> label(wsz);
    Matrix scores(wsz, wsz);
    for (int wr = 0; wr < S; wr += w) {
        for (int wc = 0; wc < S; wc += w) {
            for (int i = 0; i < w; ++i) {
                for (int j = 0; j < w; ++j) {
                    const int r = wr + i;
                    const int c = wc + j;
                    idx[i * w + j] = ((r + shift) % S) * S + (c + shift) % S;
                    label[i * w + j] = region(r) * 3 + region(c);
                }
            }
            for (int h = 0; h < heads; ++h) {
                for (int a = 0; a < wsz; ++a) {
                    double mx = -std::numeric_limits<double>::infinity();
                    for (int b = 0; b < wsz; ++b) {
                        if (label[a] != label[b]) {
                            scores(a, b) = -std::numeric_limits<double>::infinity();
                            continue;
                        }
                        scores(a, b) = scale * q.row(idx[a]).segment(h * dh, dh).dot(k.row(idx[b]).segment(h * dh, dh));
                        mx = std::max(mx, scores(a, b));
                    }
                    double z = 0.0;
                    for (int b = 0; b < wsz; ++b) {
                        scores(a, b) = label[a] == label[b] ? std::exp(scores(a, b) - mx) : 0.0;
                        z += scores(a, b);
                    }
                    for (int b = 0; b < wsz; ++b)
                        out.row(idx[a]).segment(h * dh, dh) += (scores(a, b) / z) * v.row(idx[b]).segment(h * dh, dh);
                }
            }
        }
    }
    return blk.o.apply(out);
}

} // namespace

void ModelConfig::validate() const
{
    auto fail = [](const std::string& m) { throw DomainError("invalid model config: " + m); };
    if (in_channels != 4)
        fail("in_channels must be 4");
    if (input_hw < 1 || patch_p < 1 || embed_d < 1 || n_heads < 1 || window < 1 || decoder_hidden < 1)
        fail("sizes must be positive");
    if (n_backbone_blocks < 0)
        fail("n_backbone_blocks must be >= 0");
    if (input_hw % patch_p != 0)
        fail("input_hw must be divisible by patch_p");
    if (token_side() % window != 0)
        fail("token grid side must be divisible by window");
    if (embed_d % n_heads != 0)
        fail("embed_d must be divisible by n_heads");
    if (decoder_layers < 1 || decoder_layers > 10)
        fail("decoder_layers must lie in [1, 10]");
}

std::string ModelConfig::to_text() const
{
    std::ostringstream os;
    os << "input_hw=" << input_hw << "\n"
       << "in_channels=" << in_channels << "\n"
       << "patch_p=" << patch_p << "\n"
       << "embed_d=" << embed_d << "\n"
       << "n_heads=" << n_heads << "\n"
       << "window=" << window << "\n"
       << "n_backbone_blocks=" << n_backbone_blocks << "\n"
       << "decoder_hidden=" << decoder_hidden << "\n"
       << "decoder_layers=" << decoder_layers << "\n"
       << "decoder_mode=" << (decoder_mode == DecoderMode::Global ? "global" : "tokenwise") << "\n"
       << "backbone_seed=" << backbone_seed << "\n";
    return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text)
{
    ModelConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line without '=': " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        try {
            if (key == "input_hw") c.input_hw = std::stoi(val);
            else if (key == "in_channels") c.in_channels = std::stoi(val);
            else if (key == "patch_p") c.patch_p = std::stoi(val);
            else if (key == "embed_d") c.embed_d = std::stoi(val);
            else if (key == "n_heads") c.n_heads = std::stoi(val);
            else if (key == "window") c.window = std::stoi(val);
            else if (key == "n_backbone_blocks") c.n_backbone_blocks = std::stoi(val);
            else if (key == "decoder_hidden") c.decoder_hidden = std::stoi(val);
            else if (key == "decoder_layers") c.decoder_layers = std::stoi(val);
            else if (key == "backbone_seed") c.backbone_seed = std::stoull(val);
            else if (key == "decoder_mode") {
                if (val == "global") c.decoder_mode = DecoderMode::Global;
                else if (val == "tokenwise") c.decoder_mode = DecoderMode::Tokenwise;
                else throw FormatError("unknown decoder_mode '" + val + "'");
            } else
                throw FormatError("unknown config key '" + key + "'");
        } catch (const std::logic_error&) {
            throw FormatError("bad value for config key '" + key + "': " + val);
        }
    }
    c.validate();
    return c;
}

Matrix Linear::apply(const Matrix& x) const
{
    Matrix y = x * weight;
    y.rowwise() += bias.row(0);
    return y;
}

BackboneParams BackboneParams::init(const ModelConfig& cfg)
{
    cfg.validate();
    std::mt19937_64 rng(cfg.backbone_seed);
    const int d = cfg.embed_d;
    BackboneParams b;
    b.patch_embed = make_linear(cfg.patch_p * cfg.patch_p * cfg.in_channels, d, rng);
    // Fixed per-band reflectance standardization, folded into the embedding.
    constexpr std::array<double, 4> band_mean{0.08, 0.11, 0.12, 0.35};
    constexpr std::array<double, 4> band_std{0.04, 0.04, 0.07, 0.12};
    for (Eigen::Index r = 0; r < b.patch_embed.weight.rows(); ++r) {
        const auto band = static_cast<std::size_t>(r % cfg.in_channels);
        b.patch_embed.weight.row(r) /= band_std[band];
        b.patch_embed.bias -= band_mean[band] * b.patch_embed.weight.row(r);
    }
    for (int i = 0; i < cfg.n_backbone_blocks; ++i) {
        BackboneBlock blk;
        blk.norm1_gain = Matrix::Ones(1, d);
        blk.norm1_offset = Matrix::Zero(1, d);
        blk.norm2_gain = Matrix::Ones(1, d);
        blk.norm2_offset = Matrix::Zero(1, d);
        blk.q = make_linear(d, d, rng);
        blk.k = make_linear(d, d, rng);
        blk.v = make_linear(d, d, rng);
        blk.o = make_linear(d, d, rng);
        blk.fc1 = make_linear(d, 4 * d, rng);
        blk.fc2 = make_linear(4 * d, d, rng);
        blk.shifted = (i % 2) == 1;
        b.blocks.push_back(std::move(blk));
    }
    return b;
}

std::uint64_t BackboneParams::content_hash() const
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    hash_linear(h, patch_embed);
    for (const auto& blk : blocks) {
        for (const Matrix* m : {&blk.norm1_gain, &blk.norm1_offset, &blk.norm2_gain, &blk.norm2_offset})
            hash_matrix(h, *m);
        for (const Linear* l : {&blk.q, &blk.k, &blk.v, &blk.o, &blk.fc1, &blk.fc2})
            hash_linear(h, *l);
        const unsigned char s = blk.shifted ? 1 : 0;
        hash_bytes(h, &s, 1);
    }
    return h;
}

TrainableParams TrainableParams::init(const ModelConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    std::mt19937_64 rng(seed);
    const int d = cfg.embed_d;
    TrainableParams p;
    p.prompts = Matrix::Zero(kTaskCount, d);
    xavier(p.prompts, rng);
    for (int t = 0; t < kTaskCount; ++t) {
        auto& a = p.adapters[t];
        a.q = make_linear(d, d, rng);
        a.k = make_linear(d, d, rng);
        a.v = make_linear(d, d, rng);
        a.o = make_linear(d, d, rng);
        a.fc1 = make_linear(d, 4 * d, rng);
        a.fc2 = make_linear(4 * d, d, rng);
    }
    const int out = decoder_out_width(cfg);
    for (int t = 0; t < kTaskCount; ++t) {
        auto& dec = p.decoders[t];
        dec.output_scale = task_output_scale(static_cast<TaskId>(t));
        int in = d;
        for (int l = 0; l < cfg.decoder_layers; ++l) {
            const bool last = l + 1 == cfg.decoder_layers;
            const int width = last ? out : cfg.decoder_hidden;
            dec.layers.push_back(make_linear(in, width, rng));
            in = width;
        }
    }
    return p;
}

double task_output_scale(TaskId t)
{
    // Structural heads are scaled to their value at a 20 m reference canopy
    // under the general allometry.
    constexpr double ref_height = 20.0;
    const AllometricCoeffs c = coeffs_for(ForestType::General);
    switch (t) {
    case TaskId::H:
        return ref_height;
    case TaskId::AGB:
        return kernel::agb(ref_height, c);
    case TaskId::CS:
        return kernel::carbon(kernel::agb(ref_height, c), CarbonParams{});
    default:
        return 1.0;
    }
}

TrainableParams TrainableParams::zeros_like() const
{
    const auto blank = [](const Linear& l) { return Linear(l.in(), l.out()); };
    TrainableParams z;
    z.prompts = Matrix::Zero(prompts.rows(), prompts.cols());
    for (int t = 0; t < kTaskCount; ++t) {
        const auto& a = adapters[t];
        z.adapters[t] = {blank(a.q), blank(a.k), blank(a.v), blank(a.o), blank(a.fc1), blank(a.fc2)};
        for (const auto& l : decoders[t].layers)
            z.decoders[t].layers.push_back(blank(l));
        z.decoders[t].output_scale = decoders[t].output_scale;
    }
    return z;
}

namespace {

template <typename P, typename G>
std::vector<G> collect_groups(P& p)
{
    std::vector<G> out;
    out.push_back({"prompt.table", &p.prompts});
    auto add_linear = [&](const std::string& prefix, auto& l) {
        out.push_back({prefix + ".weight", &l.weight});
        out.push_back({prefix + ".bias", &l.bias});
    };
    for (auto t : kAllTasks) {
        const std::string base = "adapter." + std::string(task_name(t));
        auto& a = p.adapters[ordinal(t)];
        add_linear(base + ".q", a.q);
        add_linear(base + ".k", a.k);
        add_linear(base + ".v", a.v);
        add_linear(base + ".o", a.o);
        add_linear(base + ".fc1", a.fc1);
        add_linear(base + ".fc2", a.fc2);
    }
    for (auto t : kAllTasks) {
        const std::string base = "decoder." + std::string(task_name(t));
        auto& dec = p.decoders[ordinal(t)];
        for (std::size_t l = 0; l < dec.layers.size(); ++l)
            add_linear(base + ".layer" + std::to_string(l), dec.layers[l]);
    }
    return out;
}

} // namespace

std::vector<NamedGroup> param_groups(TrainableParams& p)
{
    return collect_groups<TrainableParams, NamedGroup>(p);
}

std::vector<ConstNamedGroup> param_groups(const TrainableParams& p)
{
    return collect_groups<const TrainableParams, ConstNamedGroup>(p);
}

std::size_t parameter_count(const TrainableParams& p)
{
    std::size_t n = 0;
    for (const auto& g : param_groups(p))
        n += static_cast<std::size_t>(g.value->size());
    return n;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed)
{
    ModelParams m;
    m.config = cfg;
    m.backbone = BackboneParams::init(cfg);
    m.trainable = TrainableParams::init(cfg, seed);
    return m;
}

Vector prompt_embed(const TrainableParams& t, TaskId task)
{
    return t.prompts.row(ordinal(task)).transpose();
}

double gelu(double x)
{
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

double gelu_grad(double x)
{
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

Matrix patchify(const BandStack& x, int patch_p)
{
    const int hw = x.height();
    if (x.width() != hw || hw % patch_p != 0)
        throw_shape("patchify needs a square input divisible by the patch size");
    const int side = hw / patch_p;
    Matrix out(side * side, patch_p * patch_p * 4);
    for (int tr = 0; tr < side; ++tr)
        for (int tc = 0; tc < side; ++tc)
            for (int i = 0; i < patch_p; ++i)
                for (int j = 0; j < patch_p; ++j)
                    for (int b = 0; b < 4; ++b) {
                        const int r = tr * patch_p + i;
                        const int c = tc * patch_p + j;
                        out(tr * side + tc, (i * patch_p + j) * 4 + b) = x[b].valid(r, c) ? x[b](r, c) : 0.0;
                    }
    return out;
}

TokenGrid backbone_forward(const BackboneParams& b, const ModelConfig& cfg, const BandStack& x)
{
    if (x.height() != cfg.input_hw || x.width() != cfg.input_hw)
        throw_shape("backbone expects " + std::to_string(cfg.input_hw) + "x" + std::to_string(cfg.input_hw) +
                    " input, got " + std::to_string(x.height()) + "x" + std::to_string(x.width()));
    Matrix f = b.patch_embed.apply(patchify(x, cfg.patch_p));
    for (const auto& blk : b.blocks) {
        f += window_attention(blk, detail::layer_norm(f, blk.norm1_gain, blk.norm1_offset), cfg);
        const Matrix n2 = detail::layer_norm(f, blk.norm2_gain, blk.norm2_offset);
        f += blk.fc2.apply(detail::gelu(blk.fc1.apply(n2)));
    }
    return f;
}

TokenGrid cross_attend(const AdapterParams& a, const TokenGrid& f, const Vector& q, int n_heads,
                       std::vector<Matrix>* weights)
{
    detail::TaskTrace trace;
    Matrix out = detail::cross_attend_stacked(a, f, q, 1, n_heads, weights ? &trace : nullptr);
    if (weights)
        *weights = std::move(trace.attn);
    return out;
}

TokenGrid adapter_forward(const AdapterParams& a, const TokenGrid& f, const Vector& q, int n_heads)
{
    const Matrix att = cross_attend(a, f, q, n_heads);
    return att + a.fc2.apply(detail::gelu(a.fc1.apply(att)));
}

Vector decode_values(const DecoderParams& dp, const TokenGrid& f_t, const ModelConfig& cfg)
{
    // Run only the decoder part of task_forward by feeding the adapted tokens
    // straight into the decoder stack.
    Matrix z = cfg.decoder_mode == DecoderMode::Global ? Matrix(f_t.colwise().mean()) : f_t;
    for (std::size_t l = 0; l < dp.layers.size(); ++l) {
        z = dp.layers[l].apply(z);
        if (l + 1 < dp.layers.size())
            z = z.cwiseMax(0.0);
    }
    z *= dp.output_scale;
    const int hw = cfg.input_hw;
    Vector out(cfg.pixels());
    if (cfg.decoder_mode == DecoderMode::Global) {
        if (z.cols() != cfg.pixels())
            throw_shape("decoder output width does not match input_hw^2");
        out = z.row(0).transpose();
        return out;
    }
    const int p = cfg.patch_p;
    const int side = cfg.token_side();
    if (z.rows() != side * side || z.cols() != p * p)
        throw_shape("tokenwise decoder output does not match the token grid");
    for (int tr = 0; tr < side; ++tr)
        for (int tc = 0; tc < side; ++tc)
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < p; ++j)
                    out((tr * p + i) * hw + tc * p + j) = z(tr * side + tc, i * p + j);
    return out;
}

Grid2D decode(const DecoderParams& dp, const TokenGrid& f_t, const ModelConfig& cfg)
{
    const Vector v = decode_values(dp, f_t, cfg);
    std::vector<float> vals(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        vals[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
    return Grid2D(cfg.input_hw, cfg.input_hw, std::move(vals));
}

std::map<TaskId, Grid2D> forward_all(const ModelParams& m, const BandStack& x, const std::vector<TaskId>& tasks)
{
    if (tasks.empty())
        throw DomainError("forward_all needs at least one task");
    const ModelConfig& cfg = m.config;
    const TokenGrid f = backbone_forward(m.backbone, cfg, x);
    std::map<TaskId, Grid2D> out;
    for (TaskId t : tasks) {
        const int i = ordinal(t);
        const Vector q = prompt_embed(m.trainable, t);
        const Matrix pred = detail::task_forward(m.trainable.adapters[i], m.trainable.decoders[i], q, f, 1, cfg,
                                                 nullptr);
        std::vector<float> vals(static_cast<std::size_t>(pred.cols()));
        for (Eigen::Index k = 0; k < pred.cols(); ++k)
            vals[static_cast<std::size_t>(k)] = static_cast<float>(pred(0, k));
        out.emplace(t, Grid2D(cfg.input_hw, cfg.input_hw, std::move(vals)));
    }
    return out;
}

namespace detail {

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& offset)
{
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().mean();
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        y.row(r) = ((x.row(r).array() - mean) * inv).matrix().cwiseProduct(gain.row(0)) + offset.row(0);
    }
    return y;
}

Matrix gelu(const Matrix& x)
{
    return x.unaryExpr([](double v) { return satcalc::gelu(v); });
}

Matrix cross_attend_stacked(const AdapterParams& a, const Matrix& features, const Vector& q, int batch,
                            int n_heads, TaskTrace* trace)
{
    const Eigen::Index d = features.cols();
    if (q.size() != d)
        throw_shape("prompt dimension differs from token dimension");
    if (d % n_heads != 0)
        throw_shape("token dimension not divisible by head count");
    const Eigen::Index n = features.rows() / batch;
    const Eigen::Index dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Matrix query_in = features;
    query_in.rowwise() += q.transpose();
    Matrix qm = a.q.apply(query_in);
    Matrix km = a.k.apply(features);
    Matrix vm = a.v.apply(features);
    Matrix heads_out(features.rows(), d);
    std::vector<Matrix> attn;
    if (trace)
        attn.reserve(static_cast<std::size_t>(batch * n_heads));

    for (int s = 0; s < batch; ++s) {
        for (int h = 0; h < n_heads; ++h) {
            const auto qb = qm.block(s * n, h * dh, n, dh);
            const auto kb = km.block(s * n, h * dh, n, dh);
            const auto vb = vm.block(s * n, h * dh, n, dh);
            Matrix p = (qb * kb.transpose()) * scale;
            for (Eigen::Index r = 0; r < n; ++r) {
                const double mx = p.row(r).maxCoeff();
                p.row(r) = (p.row(r).array() - mx).exp().matrix();
                p.row(r) /= p.row(r).sum();
            }
            heads_out.block(s * n, h * dh, n, dh) = p * vb;
            if (trace)
                attn.push_back(std::move(p));
        }
    }
    Matrix out = a.o.apply(heads_out);
    if (trace) {
        trace->batch = batch;
        trace->tokens = static_cast<int>(n);
        trace->features = &features;
        trace->query_in = std::move(query_in);
        trace->q = std::move(qm);
        trace->k = std::move(km);
        trace->v = std::move(vm);
        trace->attn = std::move(attn);
        trace->heads_out = std::move(heads_out);
        trace->attended = out;
    }
    return out;
}

Matrix task_forward(const AdapterParams& a, const DecoderParams& dp, const Vector& q, const Matrix& features,
                    int batch, const ModelConfig& cfg, TaskTrace* trace)
{
    const Matrix att = cross_attend_stacked(a, features, q, batch, cfg.n_heads, trace);
    Matrix pre = a.fc1.apply(att);
    Matrix act = gelu(pre);
    Matrix adapted = att + a.fc2.apply(act);

    const int n = static_cast<int>(features.rows()) / batch;
    Matrix z;
    if (cfg.decoder_mode == DecoderMode::Global) {
        z.resize(batch, adapted.cols());
        for (int s = 0; s < batch; ++s)
            z.row(s) = adapted.middleRows(s * n, n).colwise().mean();
    } else {
        z = adapted;
    }
    std::vector<Matrix> dec_in;
    std::vector<Matrix> dec_pre;
    for (std::size_t l = 0; l < dp.layers.size(); ++l) {
        if (trace)
            dec_in.push_back(z);
        Matrix y = dp.layers[l].apply(z);
        if (l + 1 < dp.layers.size()) {
            z = y.cwiseMax(0.0);
            if (trace)
                dec_pre.push_back(std::move(y));
        } else {
            z = std::move(y);
        }
    }
    z *= dp.output_scale;

    Matrix pred(batch, cfg.pixels());
    if (cfg.decoder_mode == DecoderMode::Global) {
        pred = z;
    } else {
        const int p = cfg.patch_p;
        const int side = cfg.token_side();
        const int hw = cfg.input_hw;
        for (int s = 0; s < batch; ++s)
            for (int tr = 0; tr < side; ++tr)
                for (int tc = 0; tc < side; ++tc)
                    for (int i = 0; i < p; ++i)
                        for (int j = 0; j < p; ++j)
                            pred(s, (tr * p + i) * hw + tc * p + j) = z(s * n + tr * side + tc, i * p + j);
    }
    if (trace) {
        trace->mlp_pre = std::move(pre);
        trace->mlp_act = std::move(act);
        trace->adapted = std::move(adapted);
        trace->dec_in = std::move(dec_in);
        trace->dec_pre = std::move(dec_pre);
    }
    return pred;
}

} // namespace detail

} // namespace satcalc
