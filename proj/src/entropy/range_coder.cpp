#include <algorithm>
#include <cmath>
#include <numeric>

#include "sttvc/entropy.hpp"

namespace sttvc::entropy {

namespace {
constexpr std::uint32_t kTop = 1u << 24;
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq)
{
    if (freq == 0 || cum + freq > kTotal) throw std::invalid_argument("range coder: invalid frequency interval");
    range_ >>= kPrecisionBits;
    low_ += static_cast<std::uint64_t>(cum) * range_;
    range_ *= freq;
    while (range_ < kTop) {
        range_ <<= 8;
        shift_low();
    }
    ++symbols_;
}

void RangeEncoder::shift_low()
{
    if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
        const auto carry = static_cast<std::uint8_t>(low_ >> 32);
        std::uint8_t temp = cache_;
        do {
            out_.push_back(static_cast<std::uint8_t>(temp + carry));
            temp = 0xFF;
        } while (--cache_size_ != 0);
        cache_ = static_cast<std::uint8_t>(low_ >> 24);
    }
    ++cache_size_;
    low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish()
{
    if (symbols_ == 0) return {};
    for (int i = 0; i < 5; ++i) shift_low();
    // The first byte is always zero; the decoder assumes it.
    out_.erase(out_.begin());
    std::vector<std::uint8_t> result;
    result.swap(out_);
    return result;
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

std::uint8_t RangeDecoder::next_byte()
{
    if (pos_ >= bytes_.size())
        throw DecodeError("range decoder: stream truncated at byte " + std::to_string(bytes_.size()));
    return bytes_[pos_++];
}

void RangeDecoder::start()
{
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
    started_ = true;
}

std::uint32_t RangeDecoder::target()
{
    if (!started_) start();
    step_ = range_ >> kPrecisionBits;
    return std::min(code_ / step_, kTotal - 1);
}

void RangeDecoder::consume(std::uint32_t cum, std::uint32_t freq)
{
    code_ -= cum * step_;
    range_ = freq * step_;
    while (range_ < kTop) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
}

FrequencyTable FrequencyTable::from_pmf(int min_symbol, std::span<const double> pmf)
{
    const std::size_t n = pmf.size();
    if (n == 0 || n > kTotal) throw std::invalid_argument("frequency table: alphabet size out of range");
    double total = 0.0;
    for (double p : pmf) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("frequency table: invalid probability");
        total += p;
    }
    std::vector<std::uint32_t> freqs(n, 1);
    std::vector<double> frac(n, 0.0);
    const double spare = static_cast<double>(kTotal - n);
    std::uint64_t used = n;
    if (total > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            const double share = pmf[i] / total * spare;
            const double whole = std::floor(share);
            freqs[i] += static_cast<std::uint32_t>(whole);
            frac[i] = share - whole;
            used += static_cast<std::uint64_t>(whole);
        }
    }
    // Hand out the rounding remainder by largest fractional part.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; used < kTotal; i = (i + 1) % n, ++used) ++freqs[order[i]];
    return from_freqs(min_symbol, std::move(freqs));
}

FrequencyTable FrequencyTable::from_freqs(int min_symbol, std::vector<std::uint32_t> freqs)
{
    std::uint64_t total = 0;
    for (std::uint32_t f : freqs) {
        if (f == 0) throw std::invalid_argument("frequency table: zero frequency");
        total += f;
    }
    if (total != kTotal) throw std::invalid_argument("frequency table: frequencies must sum to 65536");
    FrequencyTable t;
    t.min_symbol_ = min_symbol;
    t.freqs_ = std::move(freqs);
    t.build_cdf();
    return t;
}

void FrequencyTable::build_cdf()
{
    cdf_.assign(freqs_.size() + 1, 0);
    for (std::size_t i = 0; i < freqs_.size(); ++i) cdf_[i + 1] = cdf_[i] + freqs_[i];
}

std::size_t FrequencyTable::index(int symbol) const
{
    if (symbol < min_symbol_ || symbol > max_symbol())
        throw std::out_of_range("symbol " + std::to_string(symbol) + " outside table alphabet");
    return static_cast<std::size_t>(symbol - min_symbol_);
}

double FrequencyTable::bits(int symbol) const
{
    return kPrecisionBits - std::log2(static_cast<double>(freq(symbol)));
}

void FrequencyTable::encode(RangeEncoder& enc, int symbol) const
{
    const std::size_t i = index(symbol);
    enc.encode(cdf_[i], freqs_[i]);
}

int FrequencyTable::decode(RangeDecoder& dec) const
{
    const std::uint32_t t = dec.target();
    // Last i with cdf_[i] <= t.
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - cdf_.begin()) - 1;
    dec.consume(cdf_[i], freqs_[i]);
    return min_symbol_ + static_cast<int>(i);
}

}  // namespace sttvc::entropy
