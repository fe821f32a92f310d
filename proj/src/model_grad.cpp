// Reverse-mode gradients for the trainable part of one task: prompt row,
// cross-attentive adapter and decoder. The backbone is frozen and its
// output is treated as a constant input.

#include "model_internal.hpp"

#include "satcalc/error.hpp"

#include <cmath>

namespace satcalc::detail {

namespace {

void accumulate_linear(Linear& g, const Matrix& input, const Matrix& d_out)
{
    g.weight.noalias() += input.transpose() * d_out;
    g.bias += d_out.colwise().sum();
}

} // namespace

void task_backward(const TaskTrace& tr, const Matrix& d_pred, const AdapterParams& a, const DecoderParams& dp,
                   const ModelConfig& cfg, TaskGrads g)
{
    const int batch = tr.batch;
    const int n = tr.tokens;
    if (d_pred.rows() != batch || d_pred.cols() != cfg.pixels())
        throw_shape("prediction gradient shape mismatch");

    // Pixel order back to decoder output layout.
    Matrix dz;
    if (cfg.decoder_mode == DecoderMode::Global) {
        dz = d_pred * dp.output_scale;
    } else {
        const int p = cfg.patch_p;
        const int side = cfg.token_side();
        const int hw = cfg.input_hw;
        dz.resize(static_cast<Eigen::Index>(batch) * n, p * p);
        for (int s = 0; s < batch; ++s)
            for (int t_r = 0; t_r < side; ++t_r)
                for (int t_c = 0; t_c < side; ++t_c)
                    for (int i = 0; i < p; ++i)
                        for (int j = 0; j < p; ++j)
                            dz(s * n + t_r * side + t_c, i * p + j) =
                                dp.output_scale * d_pred(s, (t_r * p + i) * hw + t_c * p + j);
    }

    // Decoder stack, last layer first. dz holds the gradient w.r.t. the
    // current layer's pre-activation output.
    for (std::size_t l = dp.layers.size(); l-- > 0;) {
        accumulate_linear(g.decoder->layers[l], tr.dec_in[l], dz);
        Matrix d_in = dz * dp.layers[l].weight.transpose();
        if (l > 0) {
            const Matrix& pre = tr.dec_pre[l - 1];
            dz = d_in.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
        } else {
            dz = std::move(d_in);
        }
    }

    Matrix d_adapted;
    if (cfg.decoder_mode == DecoderMode::Global) {
        d_adapted.resize(static_cast<Eigen::Index>(batch) * n, dz.cols());
        for (int s = 0; s < batch; ++s)
            d_adapted.middleRows(s * n, n) = (dz.row(s) / static_cast<double>(n)).replicate(n, 1);
    } else {
        d_adapted = std::move(dz);
    }

    // F_t = A + fc2(gelu(fc1(A)))
    accumulate_linear(g.adapter->fc2, tr.mlp_act, d_adapted);
    Matrix d_act = d_adapted * a.fc2.weight.transpose();
    Matrix d_pre = d_act.cwiseProduct(tr.mlp_pre.unaryExpr([](double x) { return satcalc::gelu_grad(x); }));
    accumulate_linear(g.adapter->fc1, tr.attended, d_pre);
    Matrix d_att = d_adapted + d_pre * a.fc1.weight.transpose();

    // A = heads_out * Wo + bo
    accumulate_linear(g.adapter->o, tr.heads_out, d_att);
    const Matrix d_heads = d_att * a.o.weight.transpose();

    const Eigen::Index d = tr.q.cols();
    const int heads = cfg.n_heads;
    const Eigen::Index dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix dq = Matrix::Zero(tr.q.rows(), d);
    Matrix dk = Matrix::Zero(tr.k.rows(), d);
    Matrix dv = Matrix::Zero(tr.v.rows(), d);
    for (int s = 0; s < batch; ++s) {
        for (int h = 0; h < heads; ++h) {
            const Matrix& p = tr.attn[static_cast<std::size_t>(s * heads + h)];
            const auto d_o = d_heads.block(s * n, h * dh, n, dh);
            const auto qb = tr.q.block(s * n, h * dh, n, dh);
            const auto kb = tr.k.block(s * n, h * dh, n, dh);
            const auto vb = tr.v.block(s * n, h * dh, n, dh);
            const Matrix d_p = d_o * vb.transpose();
            dv.block(s * n, h * dh, n, dh) = p.transpose() * d_o;
            // softmax backward, row-wise
            const Eigen::VectorXd row_dot = (d_p.cwiseProduct(p)).rowwise().sum();
            Matrix d_s = p.cwiseProduct(d_p - row_dot.replicate(1, n));
            d_s *= scale;
            dq.block(s * n, h * dh, n, dh) = d_s * kb;
            dk.block(s * n, h * dh, n, dh) = d_s.transpose() * qb;
        }
    }

    accumulate_linear(g.adapter->q, tr.query_in, dq);
    accumulate_linear(g.adapter->k, *tr.features, dk);
    accumulate_linear(g.adapter->v, *tr.features, dv);
    const Matrix d_query_in = dq * a.q.weight.transpose();
    g.prompt += d_query_in.colwise().sum();
}

} // namespace satcalc::detail
