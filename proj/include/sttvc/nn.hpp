#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sttvc/autograd.hpp"
#include "sttvc/ops.hpp"

namespace sttvc::nn {

using Initializer = std::function<void(Tensor&, std::mt19937_64&)>;

namespace init {
Initializer uniform(double bound);
Initializer constant(double value);
inline Initializer zeros() { return constant(0.0); }
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Initializer fan_in(int fan_in);
}  // namespace init

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL);

// Named trainable parameters. Each parameter draws its initial values from a
// generator seeded by (seed, name), so a parameter's start value does not
// depend on which other parameters a configuration creates.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    Var add(const std::string& name, Shape shape, const Initializer& init);
    Var get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<std::pair<std::string, Var>>& items() const { return items_; }
    std::int64_t count() const;
    void zero_grad();
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::vector<std::pair<std::string, Var>> items_;
    std::map<std::string, std::size_t> index_;
};

struct Conv2d {
    Var weight, bias;
    int stride = 1;
    int pad = 0;
    int groups = 1;

    Var operator()(const Var& x) const { return ops::conv2d(x, weight, bias, stride, pad, groups); }
};

// "same" padding for odd kernels unless pad is given.
Conv2d conv(ParamStore& ps, const std::string& name, int in_ch, int out_ch, int kernel, int stride = 1,
            int groups = 1, bool bias = true, int pad = -1);

struct Linear {
    Var weight, bias;
    Var operator()(const Var& tokens) const { return ops::linear(tokens, weight, bias); }
};

Linear linear(ParamStore& ps, const std::string& name, int in_features, int out_features, bool bias = true);

struct LayerNorm {
    Var gamma, beta;
    Var operator()(const Var& tokens) const { return ops::layer_norm(tokens, gamma, beta); }
};

LayerNorm layer_norm(ParamStore& ps, const std::string& name, int features);

// x + conv(relu(conv(x))), 3x3.
struct ResBlock {
    Conv2d c1, c2;
    Var operator()(const Var& x) const { return ops::add(x, c2(ops::relu(c1(x)))); }
};

ResBlock res_block(ParamStore& ps, const std::string& name, int channels);

// Applies a token-wise linear to a C x H x W map.
Var linear_chw(const Linear& l, const Var& x);

}  // namespace sttvc::nn
