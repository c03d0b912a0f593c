#pragma once

#include <array>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sttvc/model.hpp"

namespace sttvc {

enum class FrameType : std::uint8_t { I = 0, P = 1 };

// "STTV" | version u8 | width u16 | height u16 | channels u8 | lambda_id u8 |
// intra_period u16 | frame_count u32 | config_hash u64, then frame_count
// records of type u8 | payload_len u32 | payload. Little-endian.
struct ContainerHeader {
    static constexpr std::uint8_t kVersion = 1;
    static constexpr std::size_t kSize = 4 + 1 + 2 + 2 + 1 + 1 + 2 + 4 + 8;
    std::uint8_t version = kVersion;
    std::uint16_t width = 0, height = 0;
    std::uint8_t channels = 3;
    std::uint8_t lambda_id = 255;
    std::uint16_t intra_period = 32;
    std::uint32_t frame_count = 0;
    std::uint64_t config_hash = 0;
};

struct FrameRecord {
    static constexpr std::size_t kOverhead = 5;
    FrameType type = FrameType::I;
    std::vector<std::uint8_t> payload;
};

struct Container {
    ContainerHeader header;
    std::vector<FrameRecord> records;

    std::vector<std::uint8_t> serialize() const;
    static Container parse(std::span<const std::uint8_t> bytes);
    std::size_t byte_size() const;
};

// Raised for malformed streams; frame is -1 for header problems.
class StreamError : public std::runtime_error {
public:
    StreamError(int frame, const std::string& what)
        : std::runtime_error(frame < 0 ? "stream: " + what : "stream: frame " + std::to_string(frame) + ": " + what),
          frame_(frame)
    {
    }
    int frame() const { return frame_; }

private:
    int frame_;
};

// P payload: hyper | residual | motion, each u32 length-prefixed.
struct PFramePayload {
    std::vector<std::uint8_t> hyper, residual, motion;
    std::vector<std::uint8_t> serialize() const;
    static PFramePayload parse(std::span<const std::uint8_t> bytes);
};

// Frames are replicate-padded to multiples of this before coding.
constexpr int kPadMultiple = 64;
// A padded reconstruction cropped to display size at 8-bit precision.
Tensor finalize_frame(const Tensor& recon_padded, int height, int width);
// Reference-buffer entry for a decoded frame.
Var reference_feature(const CodecModel& model, const Tensor& decoded);

// Range-codes the eval-mode latents of a coded P-frame.
PFramePayload encode_p_payload(const CodecModel& model, const PFrameOutput& out);

// Pluggable I-frame coder.
class IntraCodec {
public:
    virtual ~IntraCodec() = default;
    virtual std::string name() const = 0;
    virtual std::vector<std::uint8_t> encode(const Tensor& frame) = 0;
    virtual Tensor decode(std::span<const std::uint8_t> bytes, int width, int height) = 0;
    virtual double reported_bits(std::span<const std::uint8_t> bytes) const { return 8.0 * bytes.size(); }
};

// Lossless RGB24.
class VerbatimIntra : public IntraCodec {
public:
    std::string name() const override { return "verbatim"; }
    std::vector<std::uint8_t> encode(const Tensor& frame) override;
    Tensor decode(std::span<const std::uint8_t> bytes, int width, int height) override;
};

// Shells out to an image codec. The commands contain {in} and {out}
// placeholders; encode reads a PPM and writes a bitstream, decode the reverse.
class ExternalIntra : public IntraCodec {
public:
    ExternalIntra(std::string encode_cmd, std::string decode_cmd);
    std::string name() const override { return "external"; }
    std::vector<std::uint8_t> encode(const Tensor& frame) override;
    Tensor decode(std::span<const std::uint8_t> bytes, int width, int height) override;

private:
    std::string encode_cmd_, decode_cmd_;
};

// "verbatim" or "external:<encode cmd>;<decode cmd>".
std::unique_ptr<IntraCodec> make_intra_codec(const std::string& spec);

// Decoded features, newest first, holding at most `capacity` entries. Each
// entry remembers the source frame index.
class ReferenceBuffer {
public:
    explicit ReferenceBuffer(int capacity = 3);
    void reset() { entries_.clear(); }
    void push(int frame_index, Var feature);
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    std::vector<Var> features() const;
    std::vector<int> indices() const;
    // Source indices of the three padded reference slots.
    std::array<int, 3> padded_indices() const;

private:
    struct Entry {
        int index;
        Var feature;
    };
    int capacity_;
    std::vector<Entry> entries_;
};

struct CodingOptions {
    int intra_period = 32;
    int gop_refs = 3;
};

struct FrameLog {
    FrameType type = FrameType::I;
    std::size_t bytes = 0;              // record size including its 5-byte overhead
    std::array<int, 3> refs{-1, -1, -1};  // padded reference slots (P only)
    std::size_t buffer_size = 0;        // entries before padding (P only)
};

struct EncodeResult {
    Container container;
    std::vector<Tensor> recon;  // decoded frames as the decoder will see them
    std::vector<FrameLog> frames;
};

struct DecodeResult {
    std::vector<Tensor> frames;
    std::vector<FrameLog> log;
};

// Encoder runs the decoder's reconstruction path on its own quantized latents
// to keep its reference buffer in lockstep with the decoder.
EncodeResult encode_sequence(const CodecModel& model, double lambda, const std::vector<Tensor>& frames,
                             const CodingOptions& opt, IntraCodec& intra);
DecodeResult decode_sequence(const CodecModel& model, double lambda, const Container& container, IntraCodec& intra,
                             int gop_refs = 3);

}  // namespace sttvc
