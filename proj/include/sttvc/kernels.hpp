#pragma once

// Compute kernels behind the differentiable ops. Every kernel exists twice:
// `parallel` (OpenMP + blocked GEMM, used by the library) and `serial`
// (direct loops, kept as the reference the parallel path is tested and
// benchmarked against). Backward kernels accumulate into their outputs.

#include <cstdint>
#include <span>
#include <vector>

namespace sttvc::kernels {

using In = std::span<const double>;
using Out = std::span<double>;

struct ConvGeometry {
    int in_channels = 0;
    int height = 0;
    int width = 0;
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    int pad = 0;
    int groups = 1;

    int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
    int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
    int in_per_group() const { return in_channels / groups; }
    int out_per_group() const { return out_channels / groups; }
    std::int64_t weight_size() const
    {
        return static_cast<std::int64_t>(out_channels) * in_per_group() * kernel * kernel;
    }
};

struct LinearGeometry {
    int tokens = 0;
    int in_features = 0;
    int out_features = 0;
};

// Windowed multi-head attention over an H x W token grid (tokens in raster
// order, N x C). Logits per head:
//   scale * q_i.k_j + bias[h][rel(i,j)] + qp_i.kp_j + mod[h]
// where the prior (qp, kp), bias table and mod terms are optional.
struct AttentionGeometry {
    int height = 0;
    int width = 0;
    int window = 8;
    int heads = 1;
    int channels = 0;
    double scale = 1.0;
    bool has_bias = false;
    bool has_prior = false;
    bool has_mod = false;

    int window_area() const { return window * window; }
    int windows() const { return (height / window) * (width / window); }
    int head_dim() const { return channels / heads; }
    int bias_table_size() const { return (2 * window - 1) * (2 * window - 1); }
    std::int64_t probs_size() const
    {
        return static_cast<std::int64_t>(windows()) * heads * window_area() * window_area();
    }
};

// Token index (raster order) of position `t` inside window `w`.
int window_token(const AttentionGeometry& g, int w, int t);
// Index into a (2w-1)^2 relative-position table for in-window positions i, j.
int relative_index(int window, int i, int j);

struct AttentionInputs {
    In q, k, v;
    In qp, kp;   // empty when !has_prior
    In bias;     // heads x (2w-1)^2, empty when !has_bias
    In mod;      // heads, empty when !has_mod
};

struct AttentionGrads {
    Out q, k, v;
    Out qp, kp;
    Out bias;
    Out mod;
};

// Modulated deformable 3x3 convolution (stride 1, pad 1) with `groups`
// offset/mask groups. offset: (G*9*2) x H x W laid out (g, tap, {dx, dy});
// mask: (G*9) x H x W; weight: out_channels x in_channels x 9. Sampling is
// bilinear with coordinates clamped to the feature border.
struct DeformGeometry {
    int in_channels = 0;
    int height = 0;
    int width = 0;
    int out_channels = 0;
    int groups = 1;

    static constexpr int taps = 9;
    int channels_per_group() const { return in_channels / groups; }
    int plane() const { return height * width; }
};

struct DeformInputs {
    In x, offset, mask, weight, bias;
};

struct DeformGrads {
    Out x, offset, mask, weight, bias;
};

// Bilinear sample with border clamp; also returns d/dx, d/dy of the sample.
struct BilinearSample {
    double value = 0.0;
    double dvalue_dx = 0.0;
    double dvalue_dy = 0.0;
};
BilinearSample bilinear_clamped(const double* plane, int height, int width, double x, double y);

namespace serial {

void conv2d_forward(const ConvGeometry& g, In x, In w, In b, Out y);
void conv2d_backward(const ConvGeometry& g, In x, In w, In dy, Out dx, Out dw, Out db);

void linear_forward(const LinearGeometry& g, In x, In w, In b, Out y);
void linear_backward(const LinearGeometry& g, In x, In w, In dy, Out dx, Out dw, Out db);

void attention_forward(const AttentionGeometry& g, const AttentionInputs& in, Out out, Out probs);
void attention_backward(const AttentionGeometry& g, const AttentionInputs& in, In probs, In dout,
                        const AttentionGrads& grads);

void deform_forward(const DeformGeometry& g, const DeformInputs& in, Out y);
void deform_backward(const DeformGeometry& g, const DeformInputs& in, In dy, const DeformGrads& grads);

}  // namespace serial

namespace parallel {

void conv2d_forward(const ConvGeometry& g, In x, In w, In b, Out y);
void conv2d_backward(const ConvGeometry& g, In x, In w, In dy, Out dx, Out dw, Out db);

void linear_forward(const LinearGeometry& g, In x, In w, In b, Out y);
void linear_backward(const LinearGeometry& g, In x, In w, In dy, Out dx, Out dw, Out db);

void attention_forward(const AttentionGeometry& g, const AttentionInputs& in, Out out, Out probs);
void attention_backward(const AttentionGeometry& g, const AttentionInputs& in, In probs, In dout,
                        const AttentionGrads& grads);

void deform_forward(const DeformGeometry& g, const DeformInputs& in, Out y);
void deform_backward(const DeformGeometry& g, const DeformInputs& in, In dy, const DeformGrads& grads);

}  // namespace parallel

}  // namespace sttvc::kernels
