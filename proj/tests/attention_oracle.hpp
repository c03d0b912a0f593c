#pragma once

#include <cmath>
#include <vector>

#include "sttvc/transformer.hpp"

namespace sttvc::testing {

// softmax(q k^T * scale + B) v per window and head, then the output projection.
inline Tensor brute_window_attention(const WindowAttention& a, const Tensor& tokens, int h, int w,
                                     const Tensor* qp, const Tensor* kp)
{
    NoGradGuard g;
    const Tensor q = a.q(Var(tokens)).value(), k = a.k(Var(tokens)).value(), v = a.v(Var(tokens)).value();
    const int dim = tokens.dim(1), dh = dim / a.heads, win = effective_window(a.window, h, w);
    const int full_span = 2 * a.window - 1;
    Tensor out({h * w, dim});
    for (int wy = 0; wy < h / win; ++wy)
        for (int wx = 0; wx < w / win; ++wx)
            for (int hd = 0; hd < a.heads; ++hd)
                for (int i = 0; i < win * win; ++i) {
                    const int iy = i / win, ix = i % win;
                    const int ti = (wy * win + iy) * w + wx * win + ix;
                    std::vector<double> logit(win * win);
                    for (int j = 0; j < win * win; ++j) {
                        const int jy = j / win, jx = j % win;
                        const int tj = (wy * win + jy) * w + wx * win + jx;
                        double s = 0.0, sp = 0.0;
                        for (int d = 0; d < dh; ++d) {
                            s += q.at(ti, hd * dh + d) * k.at(tj, hd * dh + d);
                            if (qp) sp += qp->at(ti, hd * dh + d) * kp->at(tj, hd * dh + d);
                        }
                        const int rel = (iy - jy + a.window - 1) * full_span + (ix - jx + a.window - 1);
                        logit[j] = s / std::sqrt(static_cast<double>(dh)) + a.bias_table.value().at(hd, rel) + sp +
                                   (a.mod.defined() ? a.mod.value()[hd] : 0.0);
                    }
                    double mx = logit[0], z = 0.0;
                    for (double l : logit) mx = std::max(mx, l);
                    for (double l : logit) z += std::exp(l - mx);
                    for (int d = 0; d < dh; ++d) {
                        double acc = 0.0;
                        for (int j = 0; j < win * win; ++j) {
                            const int tj = (wy * win + j / win) * w + wx * win + j % win;
                            acc += std::exp(logit[j] - mx) / z * v.at(tj, hd * dh + d);
                        }
                        out.at(ti, hd * dh + d) = acc;
                    }
                }
    return a.proj(Var(out)).value();
}


}  // namespace sttvc::testing
