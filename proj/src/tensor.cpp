#include "wassdiff/tensor.hpp"

#include <cassert>

namespace wassdiff {

void conv3x3_forward(const Tensor& in, const double* weights, const double* bias, Tensor& out) {
    const int h = in.height, w = in.width;
    assert(out.height == h && out.width == w);
    for (int oc = 0; oc < out.channels; ++oc) {
        double* o = out.chan(oc);
        std::fill(o, o + out.plane(), bias[oc]);
    }
    for (int oc = 0; oc < out.channels; ++oc) {
        double* o = out.chan(oc);
        for (int ic = 0; ic < in.channels; ++ic) {
            const double* x = in.chan(ic);
            const double* k = weights + (static_cast<size_t>(oc) * in.channels + ic) * 9;
            for (int dy = -1; dy <= 1; ++dy) {
                const int y0 = std::max(0, -dy), y1 = h - std::max(0, dy);
                for (int dx = -1; dx <= 1; ++dx) {
                    const double wv = k[(dy + 1) * 3 + (dx + 1)];
                    const int x0 = std::max(0, -dx), x1 = w - std::max(0, dx);
                    for (int y = y0; y < y1; ++y) {
                        const double* xr = x + static_cast<size_t>(y + dy) * w + dx;
                        double* orow = o + static_cast<size_t>(y) * w;
                        for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * xr[xx];
                    }
                }
            }
        }
    }
}

void conv3x3_backward(const Tensor& in, const double* weights, const Tensor& g_out,
                      Tensor* g_in, double* g_weights, double* g_bias) {
    const int h = in.height, w = in.width;
    for (int oc = 0; oc < g_out.channels; ++oc) {
        const double* go = g_out.chan(oc);
        double bsum = 0.0;
        for (size_t i = 0; i < g_out.plane(); ++i) bsum += go[i];
        g_bias[oc] += bsum;

        for (int ic = 0; ic < in.channels; ++ic) {
            const double* x = in.chan(ic);
            double* gk = g_weights + (static_cast<size_t>(oc) * in.channels + ic) * 9;
            const double* k = weights + (static_cast<size_t>(oc) * in.channels + ic) * 9;
            double* gx = g_in ? g_in->chan(ic) : nullptr;
            for (int dy = -1; dy <= 1; ++dy) {
                const int y0 = std::max(0, -dy), y1 = h - std::max(0, dy);
                for (int dx = -1; dx <= 1; ++dx) {
                    const int x0 = std::max(0, -dx), x1 = w - std::max(0, dx);
                    double acc = 0.0;
                    const double wv = k[(dy + 1) * 3 + (dx + 1)];
                    for (int y = y0; y < y1; ++y) {
                        const double* xr = x + static_cast<size_t>(y + dy) * w + dx;
                        const double* gr = go + static_cast<size_t>(y) * w;
                        double* gxr = gx ? gx + static_cast<size_t>(y + dy) * w + dx : nullptr;
                        if (gxr) {
                            for (int xx = x0; xx < x1; ++xx) {
                                acc += gr[xx] * xr[xx];
                                gxr[xx] += wv * gr[xx];
                            }
                        } else {
                            for (int xx = x0; xx < x1; ++xx) acc += gr[xx] * xr[xx];
                        }
                    }
                    gk[(dy + 1) * 3 + (dx + 1)] += acc;
                }
            }
        }
    }
}

void silu_forward(const Tensor& pre, Tensor& post) {
    for (size_t i = 0; i < pre.size(); ++i) post.data[i] = silu(pre.data[i]);
}

void silu_backward(const Tensor& pre, const Tensor& g_post, Tensor& g_pre) {
    for (size_t i = 0; i < pre.size(); ++i) g_pre.data[i] = g_post.data[i] * silu_grad(pre.data[i]);
}

void avgpool2_forward(const Tensor& in, Tensor& out) {
    const int oh = in.height / 2, ow = in.width / 2;
    for (int c = 0; c < in.channels; ++c) {
        const double* x = in.chan(c);
        double* o = out.chan(c);
        for (int y = 0; y < oh; ++y) {
            const double* r0 = x + static_cast<size_t>(2 * y) * in.width;
            const double* r1 = r0 + in.width;
            for (int xx = 0; xx < ow; ++xx)
                o[static_cast<size_t>(y) * ow + xx] =
                    0.25 * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
        }
    }
}

void avgpool2_backward(const Tensor& g_out, Tensor& g_in) {
    const int oh = g_out.height, ow = g_out.width;
    for (int c = 0; c < g_out.channels; ++c) {
        const double* go = g_out.chan(c);
        double* gx = g_in.chan(c);
        for (int y = 0; y < oh; ++y) {
            double* r0 = gx + static_cast<size_t>(2 * y) * g_in.width;
            double* r1 = r0 + g_in.width;
            for (int xx = 0; xx < ow; ++xx) {
                double g = 0.25 * go[static_cast<size_t>(y) * ow + xx];
                r0[2 * xx] += g;
                r0[2 * xx + 1] += g;
                r1[2 * xx] += g;
                r1[2 * xx + 1] += g;
            }
        }
    }
}

void upsample2_forward(const Tensor& in, Tensor& out) {
    const int ih = in.height, iw = in.width;
    for (int c = 0; c < in.channels; ++c) {
        const double* x = in.chan(c);
        double* o = out.chan(c);
        for (int y = 0; y < ih; ++y) {
            double* r0 = o + static_cast<size_t>(2 * y) * out.width;
            double* r1 = r0 + out.width;
            for (int xx = 0; xx < iw; ++xx) {
                double v = x[static_cast<size_t>(y) * iw + xx];
                r0[2 * xx] = v;
                r0[2 * xx + 1] = v;
                r1[2 * xx] = v;
                r1[2 * xx + 1] = v;
            }
        }
    }
}

void upsample2_backward(const Tensor& g_out, Tensor& g_in) {
    const int ih = g_in.height, iw = g_in.width;
    for (int c = 0; c < g_in.channels; ++c) {
        const double* go = g_out.chan(c);
        double* gx = g_in.chan(c);
        for (int y = 0; y < ih; ++y) {
            const double* r0 = go + static_cast<size_t>(2 * y) * g_out.width;
            const double* r1 = r0 + g_out.width;
            for (int xx = 0; xx < iw; ++xx)
                gx[static_cast<size_t>(y) * iw + xx] +=
                    r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1];
        }
    }
}

}  // namespace wassdiff
