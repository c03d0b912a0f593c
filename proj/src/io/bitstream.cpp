#include "sttvc/bitstream.hpp"

#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>

#include "sttvc/bytes.hpp"
#include "sttvc/image_io.hpp"

namespace sttvc {

namespace fs = std::filesystem;

std::vector<std::uint8_t> Container::serialize() const
{
    ByteWriter w;
    w.bytes(std::string("STTV"));
    w.put(header.version);
    w.put(header.width);
    w.put(header.height);
    w.put(header.channels);
    w.put(header.lambda_id);
    w.put(header.intra_period);
    w.put(static_cast<std::uint32_t>(records.size()));
    w.put(header.config_hash);
    for (const auto& r : records) {
        w.put(static_cast<std::uint8_t>(r.type));
        w.blob(r.payload);
    }
    return w.take();
}

std::size_t Container::byte_size() const
{
    std::size_t n = ContainerHeader::kSize;
    for (const auto& r : records) n += FrameRecord::kOverhead + r.payload.size();
    return n;
}

Container Container::parse(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    Container c;
    try {
        if (r.string(4) != "STTV") throw StreamError(-1, "bad magic");
        c.header.version = r.get<std::uint8_t>();
        if (c.header.version != ContainerHeader::kVersion)
            throw StreamError(-1, "unsupported version " + std::to_string(c.header.version));
        c.header.width = r.get<std::uint16_t>();
        c.header.height = r.get<std::uint16_t>();
        c.header.channels = r.get<std::uint8_t>();
        c.header.lambda_id = r.get<std::uint8_t>();
        c.header.intra_period = r.get<std::uint16_t>();
        c.header.frame_count = r.get<std::uint32_t>();
        c.header.config_hash = r.get<std::uint64_t>();
    } catch (const TruncatedError& e) {
        throw StreamError(-1, std::string("truncated header: ") + e.what());
    }
    if (c.header.channels != 3) throw StreamError(-1, "only 3-channel streams are supported");
    if (c.header.width == 0 || c.header.height == 0) throw StreamError(-1, "zero frame size");
    for (std::uint32_t i = 0; i < c.header.frame_count; ++i) {
        FrameRecord rec;
        try {
            const auto type = r.get<std::uint8_t>();
            if (type > 1) throw StreamError(static_cast<int>(i), "unknown frame type " + std::to_string(type));
            rec.type = static_cast<FrameType>(type);
            const auto p = r.blob();
            rec.payload.assign(p.begin(), p.end());
        } catch (const TruncatedError& e) {
            throw StreamError(static_cast<int>(i), std::string("truncated record: ") + e.what());
        }
        c.records.push_back(std::move(rec));
    }
    if (r.remaining() != 0) throw StreamError(-1, std::to_string(r.remaining()) + " trailing bytes after last record");
    return c;
}

std::vector<std::uint8_t> PFramePayload::serialize() const
{
    ByteWriter w;
    w.blob(hyper);
    w.blob(residual);
    w.blob(motion);
    return w.take();
}

PFramePayload PFramePayload::parse(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    PFramePayload p;
    auto take = [&](std::vector<std::uint8_t>& dst) {
        const auto b = r.blob();
        dst.assign(b.begin(), b.end());
    };
    take(p.hyper);
    take(p.residual);
    take(p.motion);
    if (r.remaining() != 0) throw TruncatedError("P payload has trailing bytes");
    return p;
}

std::vector<std::uint8_t> VerbatimIntra::encode(const Tensor& frame) { return io::to_rgb24(frame); }

Tensor VerbatimIntra::decode(std::span<const std::uint8_t> bytes, int width, int height)
{
    if (bytes.size() != static_cast<std::size_t>(width) * height * 3)
        throw std::runtime_error("verbatim intra: payload size does not match frame size");
    return io::from_rgb24(bytes.data(), width, height);
}

ExternalIntra::ExternalIntra(std::string encode_cmd, std::string decode_cmd)
    : encode_cmd_(std::move(encode_cmd)), decode_cmd_(std::move(decode_cmd))
{
}

namespace {

std::string substitute(std::string cmd, const std::string& in, const std::string& out)
{
    auto replace = [&](const std::string& key, const std::string& value) {
        for (std::size_t pos; (pos = cmd.find(key)) != std::string::npos;) cmd.replace(pos, key.size(), value);
    };
    replace("{in}", "'" + in + "'");
    replace("{out}", "'" + out + "'");
    return cmd;
}

fs::path scratch_path(const std::string& suffix)
{
    static std::atomic<int> counter{0};
    return fs::temp_directory_path() /
           ("sttvc_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + suffix);
}

void run(const std::string& cmd)
{
    if (std::system(cmd.c_str()) != 0) throw std::runtime_error("external intra codec failed: " + cmd);
}

}  // namespace

std::vector<std::uint8_t> ExternalIntra::encode(const Tensor& frame)
{
    const fs::path in = scratch_path(".ppm"), out = scratch_path(".bin");
    io::write_ppm(in.string(), frame);
    run(substitute(encode_cmd_, in.string(), out.string()));
    auto bytes = read_file(out.string());
    fs::remove(in);
    fs::remove(out);
    return bytes;
}

Tensor ExternalIntra::decode(std::span<const std::uint8_t> bytes, int width, int height)
{
    const fs::path in = scratch_path(".bin"), out = scratch_path(".ppm");
    write_file(in.string(), bytes);
    run(substitute(decode_cmd_, in.string(), out.string()));
    Tensor f = io::read_ppm(out.string());
    fs::remove(in);
    fs::remove(out);
    if (f.dim(1) != height || f.dim(2) != width) throw std::runtime_error("external intra: decoded size mismatch");
    return f;
}

std::unique_ptr<IntraCodec> make_intra_codec(const std::string& spec)
{
    if (spec == "verbatim") return std::make_unique<VerbatimIntra>();
    const std::string prefix = "external:";
    if (spec.rfind(prefix, 0) == 0) {
        const std::string rest = spec.substr(prefix.size());
        const auto semi = rest.find(';');
        if (semi == std::string::npos) throw std::invalid_argument("external intra: expected '<enc>;<dec>'");
        return std::make_unique<ExternalIntra>(rest.substr(0, semi), rest.substr(semi + 1));
    }
    throw std::invalid_argument("unknown intra codec '" + spec + "'");
}

ReferenceBuffer::ReferenceBuffer(int capacity) : capacity_(capacity)
{
    if (capacity < 1 || capacity > 3) throw std::invalid_argument("reference buffer capacity must be 1..3");
}

void ReferenceBuffer::push(int frame_index, Var feature)
{
    entries_.insert(entries_.begin(), Entry{frame_index, std::move(feature)});
    if (static_cast<int>(entries_.size()) > capacity_) entries_.pop_back();
}

std::vector<Var> ReferenceBuffer::features() const
{
    std::vector<Var> out;
    for (const auto& e : entries_) out.push_back(e.feature);
    return out;
}

std::vector<int> ReferenceBuffer::indices() const
{
    std::vector<int> out;
    for (const auto& e : entries_) out.push_back(e.index);
    return out;
}

std::array<int, 3> ReferenceBuffer::padded_indices() const { return pad_newest_first(indices()); }

Tensor finalize_frame(const Tensor& recon_padded, int height, int width)
{
    return io::quantize_8bit(io::crop(recon_padded, height, width));
}

Var reference_feature(const CodecModel& model, const Tensor& decoded)
{
    return model.extract(Var(io::pad_replicate(decoded, kPadMultiple)));
}

PFramePayload encode_p_payload(const CodecModel& model, const PFrameOutput& out)
{
    PFramePayload p;
    {
        entropy::RangeEncoder enc;
        model.hyper.prior.encode(enc, out.hyper_latent.value());
        p.hyper = enc.finish();
    }
    {
        entropy::RangeEncoder enc;
        entropy::gaussian_encode(enc, out.residual_latent.value(), out.mu.value(), out.sigma.value());
        p.residual = enc.finish();
    }
    {
        entropy::RangeEncoder enc;
        model.motion.prior.encode(enc, out.motion_latent.value());
        p.motion = enc.finish();
    }
    return p;
}

EncodeResult encode_sequence(const CodecModel& model, double lambda, const std::vector<Tensor>& frames,
                             const CodingOptions& opt, IntraCodec& intra)
{
    if (frames.empty()) throw std::invalid_argument("encode_sequence: no frames");
    if (opt.intra_period < 1) throw std::invalid_argument("encode_sequence: intra period must be positive");
    if (!model.motion.prior.has_tables() || !model.hyper.prior.has_tables())
        throw std::runtime_error("encode_sequence: entropy tables are not frozen");
    const int h = frames[0].dim(1), w = frames[0].dim(2);
    if (h > 65535 || w > 65535) throw std::invalid_argument("encode_sequence: frame too large");

    NoGradGuard no_grad;
    EncodeResult res;
    auto& hdr = res.container.header;
    hdr.width = static_cast<std::uint16_t>(w);
    hdr.height = static_cast<std::uint16_t>(h);
    hdr.lambda_id = lambda_id(lambda);
    hdr.intra_period = static_cast<std::uint16_t>(opt.intra_period);
    hdr.frame_count = static_cast<std::uint32_t>(frames.size());
    hdr.config_hash = config_hash(model.config(), lambda);

    ReferenceBuffer buffer(opt.gop_refs);
    std::mt19937_64 unused_rng(0);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const Tensor& x = frames[t];
        if (x.shape() != frames[0].shape()) throw std::invalid_argument("encode_sequence: frame sizes differ");
        FrameRecord rec;
        FrameLog log;
        Tensor decoded;
        if (t % static_cast<std::size_t>(opt.intra_period) == 0) {
            rec.type = FrameType::I;
            rec.payload = intra.encode(x);
            decoded = io::quantize_8bit(intra.decode(rec.payload, w, h));
            buffer.reset();
        } else {
            rec.type = FrameType::P;
            log.refs = buffer.padded_indices();
            log.buffer_size = buffer.size();
            const auto out = model.code_p_frame(Var(io::pad_replicate(x, kPadMultiple)), buffer.features(),
                                                entropy::Mode::eval, unused_rng);
            rec.payload = encode_p_payload(model, out).serialize();
            decoded = finalize_frame(out.recon.value(), h, w);
        }
        buffer.push(static_cast<int>(t), reference_feature(model, decoded));
        log.type = rec.type;
        log.bytes = FrameRecord::kOverhead + rec.payload.size();
        res.frames.push_back(log);
        res.recon.push_back(std::move(decoded));
        res.container.records.push_back(std::move(rec));
    }
    return res;
}

DecodeResult decode_sequence(const CodecModel& model, double lambda, const Container& c, IntraCodec& intra,
                             int gop_refs)
{
    const auto& hdr = c.header;
    if (hdr.config_hash != config_hash(model.config(), lambda))
        throw StreamError(-1, "config hash mismatch: stream was produced by a different model or lambda");
    if (hdr.intra_period == 0) throw StreamError(-1, "zero intra period");
    if (c.records.size() != hdr.frame_count) throw StreamError(-1, "record count does not match header");
    if (!model.motion.prior.has_tables() || !model.hyper.prior.has_tables())
        throw std::runtime_error("decode_sequence: entropy tables are not frozen");

    NoGradGuard no_grad;
    const int h = hdr.height, w = hdr.width;
    const Tensor probe = io::pad_replicate(Tensor({3, h, w}), kPadMultiple);
    const auto shapes = model.latent_shapes(probe.dim(1), probe.dim(2));

    DecodeResult res;
    ReferenceBuffer buffer(gop_refs);
    for (std::size_t t = 0; t < c.records.size(); ++t) {
        const auto& rec = c.records[t];
        const int fi = static_cast<int>(t);
        const bool expect_intra = t % hdr.intra_period == 0;
        if ((rec.type == FrameType::I) != expect_intra) throw StreamError(fi, "frame type breaks the intra period");
        FrameLog log;
        log.type = rec.type;
        log.bytes = FrameRecord::kOverhead + rec.payload.size();
        Tensor decoded;
        try {
            if (rec.type == FrameType::I) {
                decoded = io::quantize_8bit(intra.decode(rec.payload, w, h));
                buffer.reset();
            } else {
                log.refs = buffer.padded_indices();
                log.buffer_size = buffer.size();
                const auto p = PFramePayload::parse(rec.payload);
                const std::vector<Var> refs = buffer.features();

                entropy::RangeDecoder hd(p.hyper);
                const Var z_hat(model.hyper.prior.decode(hd, shapes.hyper));
                if (hd.position() != hd.size()) throw entropy::DecodeError("hyper stream has unused bytes");
                const auto [mu, sigma] = model.residual_entropy(z_hat, shapes.residual[1], shapes.residual[2]);

                entropy::RangeDecoder rd(p.residual);
                const Var y_hat(entropy::gaussian_decode(rd, mu.value(), sigma.value()));
                if (rd.position() != rd.size()) throw entropy::DecodeError("residual stream has unused bytes");

                entropy::RangeDecoder md(p.motion);
                const Var mv_hat(model.motion.prior.decode(md, shapes.motion));
                if (md.position() != md.size()) throw entropy::DecodeError("motion stream has unused bytes");

                const Prediction pred = model.predict_from_motion(mv_hat, refs);
                const Var recon = model.reconstruct_from_residual(y_hat, pred.mpre, refs);
                decoded = finalize_frame(recon.value(), h, w);
            }
        } catch (const StreamError&) {
            throw;
        } catch (const std::exception& e) {
            throw StreamError(fi, e.what());
        }
        buffer.push(fi, reference_feature(model, decoded));
        res.log.push_back(log);
        res.frames.push_back(std::move(decoded));
    }
    return res;
}

}  // namespace sttvc
