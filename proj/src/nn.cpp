#include "sttvc/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace sttvc::nn {

namespace init {

Initializer uniform(double bound)
{
    return [bound](Tensor& t, std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& v : t.storage()) v = u(rng);
    };
}

Initializer constant(double value)
{
    return [value](Tensor& t, std::mt19937_64&) { t.fill(value); };
}

Initializer fan_in(int fan_in) { return uniform(1.0 / std::sqrt(static_cast<double>(fan_in))); }

}  // namespace init

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h) { return fnv1a(s.data(), s.size(), h); }

Var ParamStore::add(const std::string& name, Shape shape, const Initializer& init)
{
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed_ ^ fnv1a(name));
    init(t, rng);
    Var v(std::move(t), true);
    index_[name] = items_.size();
    items_.emplace_back(name, v);
    return v;
}

Var ParamStore::get(const std::string& name) const
{
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return items_[it->second].second;
}

std::int64_t ParamStore::count() const
{
    std::int64_t n = 0;
    for (const auto& [name, v] : items_) n += v.numel();
    return n;
}

void ParamStore::zero_grad()
{
    for (auto& [name, v] : items_) v.zero_grad();
}

Conv2d conv(ParamStore& ps, const std::string& name, int in_ch, int out_ch, int kernel, int stride, int groups,
            bool bias, int pad)
{
    Conv2d c;
    const int fan = in_ch / groups * kernel * kernel;
    c.weight = ps.add(name + ".weight", {out_ch, in_ch / groups, kernel, kernel}, init::fan_in(fan));
    if (bias) c.bias = ps.add(name + ".bias", {out_ch}, init::fan_in(fan));
    c.stride = stride;
    c.pad = pad >= 0 ? pad : kernel / 2;
    c.groups = groups;
    return c;
}

Linear linear(ParamStore& ps, const std::string& name, int in_features, int out_features, bool bias)
{
    Linear l;
    l.weight = ps.add(name + ".weight", {out_features, in_features}, init::fan_in(in_features));
    if (bias) l.bias = ps.add(name + ".bias", {out_features}, init::fan_in(in_features));
    return l;
}

LayerNorm layer_norm(ParamStore& ps, const std::string& name, int features)
{
    return {ps.add(name + ".gamma", {features}, init::constant(1.0)),
            ps.add(name + ".beta", {features}, init::zeros())};
}

ResBlock res_block(ParamStore& ps, const std::string& name, int channels)
{
    return {conv(ps, name + ".conv1", channels, channels, 3), conv(ps, name + ".conv2", channels, channels, 3)};
}

Var linear_chw(const Linear& l, const Var& x)
{
    return ops::tokens_to_chw(l(ops::chw_to_tokens(x)), x.dim(1), x.dim(2));
}

}  // namespace sttvc::nn
