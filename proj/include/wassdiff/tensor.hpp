#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace wassdiff {

// Dense (channels, height, width) activation buffer, channel-major.
struct Tensor {
    int channels = 0, height = 0, width = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int c, int h, int w)
        : channels(c), height(h), width(w), data(static_cast<size_t>(c) * h * w, 0.0) {}

    size_t size() const { return data.size(); }
    size_t plane() const { return static_cast<size_t>(height) * width; }
    double* chan(int c) { return data.data() + static_cast<size_t>(c) * plane(); }
    const double* chan(int c) const { return data.data() + static_cast<size_t>(c) * plane(); }
    void zero() { std::fill(data.begin(), data.end(), 0.0); }
    bool same_shape(const Tensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

// 3x3 same-padding convolution. Weights are [out_ch][in_ch][3][3], bias [out_ch].
void conv3x3_forward(const Tensor& in, const double* weights, const double* bias, Tensor& out);

// Gradients of the same convolution. g_in may be null when the input gradient
// is not needed (first layer). g_weights/g_bias are accumulated (+=).
void conv3x3_backward(const Tensor& in, const double* weights, const Tensor& g_out,
                      Tensor* g_in, double* g_weights, double* g_bias);

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

void silu_forward(const Tensor& pre, Tensor& post);
// g_pre = g_post * silu'(pre), writable in place (g_pre may alias g_post).
void silu_backward(const Tensor& pre, const Tensor& g_post, Tensor& g_pre);

// 2x2 mean pooling (dimensions must be even).
void avgpool2_forward(const Tensor& in, Tensor& out);
void avgpool2_backward(const Tensor& g_out, Tensor& g_in);

// 2x nearest-neighbour upsampling.
void upsample2_forward(const Tensor& in, Tensor& out);
void upsample2_backward(const Tensor& g_out, Tensor& g_in);

}  // namespace wassdiff
