#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "sttvc/bitstream.hpp"
#include "sttvc/bytes.hpp"
#include "sttvc/checkpoint.hpp"
#include "sttvc/image_io.hpp"
#include "sttvc/metrics.hpp"
#include "sttvc/synthetic.hpp"
#include "test_util.hpp"

using namespace sttvc;
using namespace sttvc::testing;
namespace fs = std::filesystem;

namespace {

std::unique_ptr<CodecModel> tiny_model(std::uint64_t seed = 5)
{
    auto m = std::make_unique<CodecModel>(tiny_config(), seed);
    m->update_tables();
    return m;
}

fs::path scratch_dir(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("sttvc_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Container sample_container()
{
    Container c;
    c.header.width = 70;
    c.header.height = 50;
    c.header.lambda_id = 2;
    c.header.intra_period = 3;
    c.header.config_hash = 0x0123456789abcdefull;
    c.records.push_back({FrameType::I, {1, 2, 3}});
    c.records.push_back({FrameType::P, {}});
    c.records.push_back({FrameType::P, std::vector<std::uint8_t>(300, 7)});
    c.header.frame_count = 3;
    return c;
}

}  // namespace

TEST_CASE("container round trip and size accounting")
{
    const Container c = sample_container();
    const auto bytes = c.serialize();
    CHECK(ContainerHeader::kSize == 25);
    CHECK(bytes.size() == c.byte_size());
    CHECK(bytes.size() == 25 + 3 * 5 + 3 + 0 + 300);
    const Container d = Container::parse(bytes);
    CHECK(d.header.width == 70);
    CHECK(d.header.height == 50);
    CHECK(d.header.intra_period == 3);
    CHECK(d.header.config_hash == c.header.config_hash);
    REQUIRE(d.records.size() == 3);
    CHECK(d.records[2].payload == c.records[2].payload);
    CHECK(d.serialize() == bytes);
}

TEST_CASE("container parse rejects malformed input")
{
    const auto bytes = sample_container().serialize();
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(Container::parse(bad), StreamError);
    bad = bytes;
    bad[4] = 9;
    CHECK_THROWS_AS(Container::parse(bad), StreamError);
    try {
        Container::parse(std::span(bytes).first(bytes.size() - 10));
        FAIL("expected a stream error");
    } catch (const StreamError& e) {
        CHECK(e.frame() == 2);
    }
    try {
        Container::parse(std::span(bytes).first(10));
        FAIL("expected a stream error");
    } catch (const StreamError& e) {
        CHECK(e.frame() == -1);
    }
    bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(Container::parse(bad), StreamError);
    bad = bytes;
    bad[25 + 5 + 3] = 4;  // type byte of record 1
    try {
        Container::parse(bad);
        FAIL("expected a stream error");
    } catch (const StreamError& e) {
        CHECK(e.frame() == 1);
    }
}

TEST_CASE("P payload round trip")
{
    PFramePayload p{{1}, {2, 3}, {}};
    const auto b = p.serialize();
    CHECK(b.size() == 12 + 3);
    const auto q = PFramePayload::parse(b);
    CHECK(q.hyper == p.hyper);
    CHECK(q.residual == p.residual);
    CHECK(q.motion.empty());
    auto t = b;
    t.push_back(0);
    CHECK_THROWS(PFramePayload::parse(t));
}

TEST_CASE("image io round trips at 8-bit precision")
{
    const auto dir = scratch_dir("io");
    const Tensor f = io::quantize_8bit(synthetic_clip(1, 21, 34, 3)[0]);
    for (const char* name : {"a.png", "a.ppm"}) {
        const auto path = (dir / name).string();
        io::write_image(path, f);
        const Tensor g = io::read_image(path);
        CHECK(g.shape() == f.shape());
        CHECK(max_abs_diff(f, g) < 1e-12);
    }
    const auto clip = synthetic_clip(3, 16, 24, 4);
    io::write_sequence((dir / "seq").string(), clip);
    const auto back = io::read_sequence((dir / "seq").string());
    REQUIRE(back.size() == 3);
    CHECK(max_abs_diff(back[2], io::quantize_8bit(clip[2])) < 1e-12);
    CHECK(io::read_sequence((dir / "seq").string(), 2).size() == 2);

    std::vector<std::uint8_t> raw;
    for (const auto& c : clip) {
        const auto b = io::to_rgb24(c);
        raw.insert(raw.end(), b.begin(), b.end());
    }
    write_file((dir / "seq.rgb").string(), raw);
    const auto rgb = io::read_sequence((dir / "seq.rgb").string(), -1, 24, 16);
    REQUIRE(rgb.size() == 3);
    CHECK(max_abs_diff(rgb[1], io::quantize_8bit(clip[1])) < 1e-12);
    CHECK_THROWS(io::read_sequence((dir / "seq.rgb").string(), -1, 25, 16));
    fs::remove_all(dir);
}

TEST_CASE("replicate padding and crop")
{
    std::mt19937_64 rng(2);
    const Tensor f = random_tensor({3, 5, 7}, rng, 0.0, 1.0);
    const Tensor p = io::pad_replicate(f, 64);
    CHECK(p.dim(1) == 64);
    CHECK(p.dim(2) == 64);
    for (int c = 0; c < 3; ++c) {
        CHECK(p.at(c, 63, 63) == f.at(c, 4, 6));
        CHECK(p.at(c, 2, 40) == f.at(c, 2, 6));
        CHECK(p.at(c, 30, 3) == f.at(c, 4, 3));
    }
    CHECK(bitwise_equal(io::crop(p, 5, 7), f));
    CHECK(bitwise_equal(io::pad_replicate(p, 64), p));
}

TEST_CASE("intra codecs")
{
    const Tensor f = synthetic_clip(1, 20, 30, 9)[0];
    VerbatimIntra v;
    const auto b = v.encode(f);
    CHECK(b.size() == 20 * 30 * 3);
    const Tensor g = v.decode(b, 30, 20);
    CHECK(max_abs_diff(g, io::quantize_8bit(f)) < 1e-12);
    CHECK(metrics::psnr(g, io::quantize_8bit(f)) == metrics::kPsnrCap);
    CHECK_THROWS(v.decode(b, 31, 20));

    auto ext = make_intra_codec("external:cp {in} {out};cp {in} {out}");
    const auto e = ext->encode(f);
    CHECK(max_abs_diff(ext->decode(e, 30, 20), io::quantize_8bit(f)) < 1e-12);
    auto broken = make_intra_codec("external:false;false");
    CHECK_THROWS(broken->encode(f));
    CHECK_THROWS(make_intra_codec("jpeg"));
}

TEST_CASE("reference buffer keeps newest first and pads")
{
    ReferenceBuffer b(3);
    CHECK_THROWS(b.padded_indices());
    b.push(0, Var(Tensor({1})));
    CHECK(b.padded_indices() == std::array<int, 3>{0, 0, 0});
    b.push(1, Var(Tensor({1})));
    CHECK(b.padded_indices() == std::array<int, 3>{1, 0, 0});
    b.push(2, Var(Tensor({1})));
    b.push(3, Var(Tensor({1})));
    CHECK(b.indices() == std::vector<int>{3, 2, 1});
    ReferenceBuffer one(1);
    one.push(4, Var(Tensor({1})));
    one.push(5, Var(Tensor({1})));
    CHECK(one.padded_indices() == std::array<int, 3>{5, 5, 5});
    CHECK_THROWS(ReferenceBuffer(0));
    CHECK_THROWS(ReferenceBuffer(4));
}

TEST_CASE("encoder and decoder stay in lockstep")
{
    const auto model = tiny_model();
    const auto clip = synthetic_clip(7, 50, 70, 11);
    VerbatimIntra intra;
    for (int refs : {1, 3}) {
        CAPTURE(refs);
        const CodingOptions opt{4, refs};
        const auto enc = encode_sequence(*model, 256, clip, opt, intra);
        const auto bytes = enc.container.serialize();
        CHECK(bytes.size() == enc.container.byte_size());
        std::size_t sum = ContainerHeader::kSize;
        for (const auto& f : enc.frames) sum += f.bytes;
        CHECK(sum == bytes.size());

        const auto dec = decode_sequence(*model, 256, Container::parse(bytes), intra, refs);
        REQUIRE(dec.frames.size() == clip.size());
        for (std::size_t t = 0; t < clip.size(); ++t) {
            CHECK(bitwise_equal(dec.frames[t], enc.recon[t]));
            CHECK(dec.log[t].refs == enc.frames[t].refs);
            CHECK(dec.frames[t].dim(1) == 50);
            CHECK(dec.frames[t].dim(2) == 70);
        }
        CHECK(enc.frames[0].type == FrameType::I);
        CHECK(enc.frames[4].type == FrameType::I);
        CHECK(enc.frames[1].buffer_size == 1);
        if (refs == 3) {
            CHECK(enc.frames[2].refs == std::array<int, 3>{1, 0, 0});
            CHECK(enc.frames[3].refs == std::array<int, 3>{2, 1, 0});
            CHECK(enc.frames[5].refs == std::array<int, 3>{4, 4, 4});
        }
        const auto again = encode_sequence(*model, 256, clip, opt, intra);
        CHECK(again.container.serialize() == bytes);
    }
}

TEST_CASE("decoder rejects mismatched or corrupted streams")
{
    const auto model = tiny_model();
    const auto clip = synthetic_clip(4, 64, 64, 12);
    VerbatimIntra intra;
    const auto enc = encode_sequence(*model, 256, clip, {2, 3}, intra);
    CHECK_THROWS_AS(decode_sequence(*model, 512, enc.container, intra), StreamError);
    auto cfg = tiny_config();
    cfg.use_mgp = false;
    CodecModel ablated(cfg, 5);
    ablated.update_tables();
    CHECK_THROWS_AS(decode_sequence(ablated, 256, enc.container, intra), StreamError);

    Container c = enc.container;
    c.records[1].payload.resize(c.records[1].payload.size() - 1);
    try {
        decode_sequence(*model, 256, c, intra);
        FAIL("expected a stream error");
    } catch (const StreamError& e) {
        CHECK(e.frame() == 1);
    }
    c = enc.container;
    std::swap(c.records[1], c.records[2]);
    try {
        decode_sequence(*model, 256, c, intra);
        FAIL("expected a stream error");
    } catch (const StreamError& e) {
        CHECK(e.frame() == 1);
    }
    // Trailing garbage inside a sub-stream is detected.
    c = enc.container;
    auto p = PFramePayload::parse(c.records[3].payload);
    p.motion.push_back(0x55);
    c.records[3].payload = p.serialize();
    try {
        decode_sequence(*model, 256, c, intra);
        FAIL("expected a stream error");
    } catch (const StreamError& e) {
        CHECK(e.frame() == 3);
    }
}

TEST_CASE("checkpoint round trip preserves coding bit-exactly")
{
    const auto model = tiny_model(21);
    const auto dir = scratch_dir("ckpt");
    const auto path = (dir / "m.ckpt").string();
    save_checkpoint(path, *model, 1024, 17, "state");
    const Checkpoint ck = load_checkpoint(path);
    CHECK(ck.lambda == 1024);
    CHECK(ck.step == 17);
    CHECK(ck.rng_state == "state");
    CHECK(ck.hash() == config_hash(model->config(), 1024));
    const auto& a = model->params().items();
    const auto& b = ck.model->params().items();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(bitwise_equal(a[i].second.value(), b[i].second.value()));
    }

    const auto clip = synthetic_clip(3, 64, 64, 13);
    VerbatimIntra intra;
    const auto e1 = encode_sequence(*model, 1024, clip, {8, 3}, intra);
    const auto e2 = encode_sequence(*ck.model, 1024, clip, {8, 3}, intra);
    CHECK(e1.container.serialize() == e2.container.serialize());
    const auto dec = decode_sequence(*ck.model, 1024, e1.container, intra);
    CHECK(bitwise_equal(dec.frames[2], e1.recon[2]));

    auto bytes = read_file(path);
    bytes[0] = 'X';
    CHECK_THROWS(deserialize_checkpoint(bytes));
    bytes = read_file(path);
    bytes.resize(bytes.size() / 2);
    CHECK_THROWS(deserialize_checkpoint(bytes));

    setenv("STTVC_CHECKPOINT_DIR", dir.c_str(), 1);
    CHECK(resolve_checkpoint_path("m.ckpt") == path);
    unsetenv("STTVC_CHECKPOINT_DIR");
    fs::remove_all(dir);
}
