#include "sttvc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace sttvc {

namespace {

struct Wave {
    double fx, fy, phase, amp[3];
};

struct Blob {
    double x, y, vx, vy, radius, color[3];
    bool square;
};

}  // namespace

std::vector<Tensor> synthetic_clip(int frames, int height, int width, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double two_pi = 2.0 * std::numbers::pi;

    std::vector<Wave> waves(6);
    for (auto& w : waves) {
        const double period = 8.0 + 40.0 * u(rng);
        const double angle = two_pi * u(rng);
        w.fx = std::cos(angle) / period;
        w.fy = std::sin(angle) / period;
        w.phase = two_pi * u(rng);
        for (double& a : w.amp) a = 0.12 * (u(rng) - 0.5);
    }
    double base[3];
    for (double& b : base) b = 0.3 + 0.4 * u(rng);
    const double pan_x = 2.0 * (u(rng) - 0.5) * 1.5;
    const double pan_y = 2.0 * (u(rng) - 0.5) * 1.0;

    std::vector<Blob> blobs(3);
    for (auto& b : blobs) {
        b.x = width * (0.2 + 0.6 * u(rng));
        b.y = height * (0.2 + 0.6 * u(rng));
        b.vx = 2.0 * (u(rng) - 0.5) * 3.0;
        b.vy = 2.0 * (u(rng) - 0.5) * 3.0;
        b.radius = std::min(height, width) * (0.08 + 0.1 * u(rng));
        for (double& c : b.color) c = u(rng);
        b.square = u(rng) < 0.5;
    }

    std::vector<Tensor> clip;
    for (int t = 0; t < frames; ++t) {
        Tensor f({3, height, width});
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const double sx = x + pan_x * t, sy = y + pan_y * t;
                double px[3] = {base[0], base[1], base[2]};
                for (const auto& w : waves) {
                    const double s = std::sin(two_pi * (w.fx * sx + w.fy * sy) + w.phase);
                    for (int c = 0; c < 3; ++c) px[c] += w.amp[c] * s;
                }
                for (const auto& b : blobs) {
                    const double dx = x - (b.x + b.vx * t), dy = y - (b.y + b.vy * t);
                    const double dist = b.square ? std::max(std::abs(dx), std::abs(dy)) : std::hypot(dx, dy);
                    const double cover = std::clamp(b.radius - dist + 0.5, 0.0, 1.0);
                    for (int c = 0; c < 3; ++c) px[c] += cover * (b.color[c] - px[c]);
                }
                for (int c = 0; c < 3; ++c) f.at(c, y, x) = std::clamp(px[c], 0.0, 1.0);
            }
        clip.push_back(std::move(f));
    }
    return clip;
}

}  // namespace sttvc
