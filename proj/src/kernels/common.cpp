#include <algorithm>
#include <cmath>

#include "sttvc/kernels.hpp"

namespace sttvc::kernels {

int window_token(const AttentionGeometry& g, int w, int t)
{
    const int per_row = g.width / g.window;
    const int wy = w / per_row;
    const int wx = w % per_row;
    const int ty = t / g.window;
    const int tx = t % g.window;
    return (wy * g.window + ty) * g.width + wx * g.window + tx;
}

int relative_index(int window, int i, int j)
{
    const int dy = i / window - j / window + window - 1;
    const int dx = i % window - j % window + window - 1;
    return dy * (2 * window - 1) + dx;
}

BilinearSample bilinear_clamped(const double* plane, int height, int width, double x, double y)
{
    BilinearSample s;
    const bool x_inside = x >= 0.0 && x <= width - 1;
    const bool y_inside = y >= 0.0 && y <= height - 1;
    const double cx = std::clamp(x, 0.0, static_cast<double>(width - 1));
    const double cy = std::clamp(y, 0.0, static_cast<double>(height - 1));
    const int x0 = static_cast<int>(std::floor(cx));
    const int y0 = static_cast<int>(std::floor(cy));
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double ax = cx - x0;
    const double ay = cy - y0;
    const double v00 = plane[y0 * width + x0];
    const double v01 = plane[y0 * width + x1];
    const double v10 = plane[y1 * width + x0];
    const double v11 = plane[y1 * width + x1];
    const double top = v00 + ax * (v01 - v00);
    const double bottom = v10 + ax * (v11 - v10);
    s.value = top + ay * (bottom - top);
    // Clamped coordinates do not move the sample.
    s.dvalue_dx = x_inside ? (1.0 - ay) * (v01 - v00) + ay * (v11 - v10) : 0.0;
    s.dvalue_dy = y_inside ? bottom - top : 0.0;
    return s;
}

}  // namespace sttvc::kernels
