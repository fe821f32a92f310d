#pragma once

// Batched per-task forward/backward shared by the model and the trainer.
// Samples are stacked row-wise: rows [s*N, (s+1)*N) belong to sample s.

#include "satcalc/model.hpp"

#include <vector>

namespace satcalc::detail {

struct TaskTrace {
    int batch = 0;
    int tokens = 0;
    const Matrix* features = nullptr; // stacked backbone tokens, B*N x d
    Matrix query_in;                  // features + broadcast prompt
    Matrix q, k, v;
    std::vector<Matrix> attn;         // [sample * heads + head], N x N
    Matrix heads_out;                 // concatenated head outputs
    Matrix attended;                  // after output projection (A)
    Matrix mlp_pre;                   // A * W1 + b1
    Matrix mlp_act;                   // gelu(mlp_pre)
    Matrix adapted;                   // F_t = A + MLP(A)
    std::vector<Matrix> dec_in;       // input to each decoder layer
    std::vector<Matrix> dec_pre;      // pre-activation of each decoder layer
};

struct TaskGrads {
    AdapterParams* adapter;
    DecoderParams* decoder;
    Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> prompt;
};

Matrix cross_attend_stacked(const AdapterParams& a, const Matrix& features, const Vector& q, int batch,
                            int n_heads, TaskTrace* trace);

// Returns B x input_hw^2 predictions in row-major pixel order.
Matrix task_forward(const AdapterParams& a, const DecoderParams& dp, const Vector& q, const Matrix& features,
                    int batch, const ModelConfig& cfg, TaskTrace* trace);

// Accumulates (+=) gradients of sum(d_pred .* pred) into `g`.
void task_backward(const TaskTrace& trace, const Matrix& d_pred, const AdapterParams& a, const DecoderParams& dp,
                   const ModelConfig& cfg, TaskGrads g);

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& offset);
Matrix gelu(const Matrix& x);

} // namespace satcalc::detail
