#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sttvc/autograd.hpp"
#include "sttvc/nn.hpp"

namespace sttvc::entropy {

// Quantized symbols live in [-kSymbolMax, kSymbolMax].
constexpr int kSymbolMax = 255;
constexpr int kPrecisionBits = 16;
constexpr std::uint32_t kTotal = 1u << kPrecisionBits;
// Likelihood floor used by every bit estimate; matches the 1/65536 table floor.
constexpr double kProbFloor = 1.0 / kTotal;
constexpr double kScaleMin = 0.11;
constexpr double kScaleMax = 256.0;
constexpr int kScaleTables = 64;
// Fractional mean offsets in [-0.5, 0.5] get their own tables, step 1/16.
constexpr int kMeanOffsets = 17;

enum class Mode { train, eval };

double round_half_away(double x);
// Round half away from zero, then clamp to the alphabet.
Tensor quantize_eval(const Tensor& x);
// train: x + U(-0.5, 0.5); eval: quantize_eval(x) as a graph constant.
Var quantize(const Var& x, Mode mode, std::mt19937_64& rng);

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Carry-propagating range coder, 32-bit range, 16-bit frequency totals.
class RangeEncoder {
public:
    void encode(std::uint32_t cum, std::uint32_t freq);
    // Flushes and returns the stream. A coder that saw no symbol yields {}.
    std::vector<std::uint8_t> finish();
    std::size_t symbols() const { return symbols_; }

private:
    void shift_low();

    std::uint64_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint8_t cache_ = 0;
    std::uint64_t cache_size_ = 1;
    std::size_t symbols_ = 0;
    std::vector<std::uint8_t> out_;
};

class RangeDecoder {
public:
    explicit RangeDecoder(std::span<const std::uint8_t> bytes);
    // Cumulative-frequency target of the next symbol, in [0, kTotal).
    std::uint32_t target();
    void consume(std::uint32_t cum, std::uint32_t freq);
    std::size_t position() const { return pos_; }
    std::size_t size() const { return bytes_.size(); }

private:
    std::uint8_t next_byte();
    void start();

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    bool started_ = false;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint32_t code_ = 0;
    std::uint32_t step_ = 0;
};

// Quantized pmf over [min_symbol, min_symbol + n). Every frequency is >= 1
// and they sum to kTotal.
class FrequencyTable {
public:
    FrequencyTable() = default;
    static FrequencyTable from_pmf(int min_symbol, std::span<const double> pmf);
    static FrequencyTable from_freqs(int min_symbol, std::vector<std::uint32_t> freqs);

    int min_symbol() const { return min_symbol_; }
    int max_symbol() const { return min_symbol_ + static_cast<int>(freqs_.size()) - 1; }
    int size() const { return static_cast<int>(freqs_.size()); }
    std::uint32_t freq(int symbol) const { return freqs_[index(symbol)]; }
    std::uint32_t cum(int symbol) const { return cdf_[index(symbol)]; }
    const std::vector<std::uint32_t>& freqs() const { return freqs_; }
    // -log2(freq / kTotal).
    double bits(int symbol) const;

    void encode(RangeEncoder& enc, int symbol) const;
    int decode(RangeDecoder& dec) const;

private:
    std::size_t index(int symbol) const;
    void build_cdf();

    int min_symbol_ = 0;
    std::vector<std::uint32_t> freqs_;
    std::vector<std::uint32_t> cdf_;
};

// Per-element likelihood of y under a per-channel logistic mixture,
// P(y) = sum_k pi_k [sigmoid((y + 0.5 - mu_k) / s_k) - sigmoid((y - 0.5 - mu_k) / s_k)].
// y is C x H x W; logits/means/log_scales are C x K.
Var logistic_mixture_likelihood(const Var& y, const Var& logits, const Var& means, const Var& log_scales);
// Per-element likelihood of y under N(mu, sigma^2) integrated over [y-0.5, y+0.5].
Var gaussian_likelihood(const Var& y, const Var& mu, const Var& sigma);
// sum(-log2(max(l, kProbFloor))). The floor passes gradients through, since
// the rate term only ever pushes the likelihood up.
Var likelihood_bits(const Var& likelihood);

// Fully factorized model: one logistic mixture per channel.
class FactorizedModel {
public:
    FactorizedModel() = default;
    FactorizedModel(nn::ParamStore& ps, const std::string& name, int channels, int components = 3);

    int channels() const { return channels_; }
    Var likelihood(const Var& y) const;
    // Differentiable bit count of y.
    Var bits(const Var& y) const { return likelihood_bits(likelihood(y)); }

    // Freezes the current parameters into 16-bit tables.
    void update_tables();
    bool has_tables() const { return !tables_.empty(); }
    const std::vector<FrequencyTable>& tables() const { return tables_; }
    void set_tables(std::vector<FrequencyTable> tables);
    // pmf of channel c over [-kSymbolMax, kSymbolMax], edge symbols absorb the tails.
    std::vector<double> channel_pmf(int c) const;

    double table_bits(const Tensor& q) const;
    void encode(RangeEncoder& enc, const Tensor& q) const;
    Tensor decode(RangeDecoder& dec, const Shape& shape) const;

    Var logits, means, log_scales;

private:
    void require_tables() const;
    int channels_ = 0;
    int components_ = 0;
    std::vector<FrequencyTable> tables_;
};

// Fixed tables for the Gaussian conditional. A symbol q with predicted mean
// mu and scale sigma is coded as d = q - round(mu) (mu clamped to the
// alphabet) using the table of the log-nearest scale and the nearest
// fractional offset mu - round(mu).
class GaussianTables {
public:
    static const GaussianTables& instance();

    int index_for(double sigma) const;
    int offset_index_for(double offset) const;
    double scale(int index) const { return scales_[static_cast<std::size_t>(index)]; }
    const FrequencyTable& table(int index, int offset_index) const
    {
        return tables_[static_cast<std::size_t>(index * kMeanOffsets + offset_index)];
    }
    const FrequencyTable& table_for(double mu, double sigma) const;

    double bits(int q, double mu, double sigma) const;
    void encode(RangeEncoder& enc, int q, double mu, double sigma) const;
    int decode(RangeDecoder& dec, double mu, double sigma) const;

private:
    GaussianTables();
    std::vector<double> scales_;
    std::vector<FrequencyTable> tables_;
};

double gaussian_table_bits(const Tensor& q, const Tensor& mu, const Tensor& sigma);
void gaussian_encode(RangeEncoder& enc, const Tensor& q, const Tensor& mu, const Tensor& sigma);
Tensor gaussian_decode(RangeDecoder& dec, const Tensor& mu, const Tensor& sigma);

}  // namespace sttvc::entropy
