#include "sttvc/checkpoint.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sttvc/bytes.hpp"

namespace sttvc {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'C', 'K'};
constexpr std::uint8_t kVersion = 1;

void put_tables(ByteWriter& w, const std::vector<entropy::FrequencyTable>& tables)
{
    w.put(static_cast<std::uint32_t>(tables.size()));
    for (const auto& t : tables) {
        w.put(static_cast<std::int32_t>(t.min_symbol()));
        w.put(static_cast<std::uint32_t>(t.size()));
        for (auto f : t.freqs()) w.put(static_cast<std::uint16_t>(f - 1));  // f in [1, 65536]
    }
}

std::vector<entropy::FrequencyTable> get_tables(ByteReader& r)
{
    std::vector<entropy::FrequencyTable> tables(r.get<std::uint32_t>());
    for (auto& t : tables) {
        const int min_symbol = r.get<std::int32_t>();
        std::vector<std::uint32_t> freqs(r.get<std::uint32_t>());
        for (auto& f : freqs) f = r.get<std::uint16_t>() + 1u;
        t = entropy::FrequencyTable::from_freqs(min_symbol, std::move(freqs));
    }
    return tables;
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<std::uint8_t> serialize_checkpoint(const CodecModel& model, double lambda, std::uint64_t step,
                                               const std::string& rng_state)
{
    ByteWriter w;
    w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
    w.put(kVersion);
    w.put(config_hash(model.config(), lambda));
    w.put(lambda);
    w.put(model.params().seed());
    w.put(step);
    const std::string cfg = to_json(model.config()).dump();
    w.put(static_cast<std::uint32_t>(cfg.size()));
    w.bytes(cfg);
    w.put(static_cast<std::uint32_t>(rng_state.size()));
    w.bytes(rng_state);

    const auto& items = model.params().items();
    w.put(static_cast<std::uint32_t>(items.size()));
    for (const auto& [name, v] : items) {
        w.put(static_cast<std::uint16_t>(name.size()));
        w.bytes(name);
        w.put(static_cast<std::uint64_t>(v.numel()));
        w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(v.value().data()),
                          static_cast<std::size_t>(v.numel()) * sizeof(double)));
    }
    put_tables(w, model.motion.prior.tables());
    put_tables(w, model.hyper.prior.tables());
    return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    if (r.string(4) != std::string(kMagic, 4)) throw std::runtime_error("checkpoint: bad magic");
    const auto version = r.get<std::uint8_t>();
    if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const auto hash = r.get<std::uint64_t>();
    Checkpoint ck;
    ck.lambda = r.get<double>();
    const auto seed = r.get<std::uint64_t>();
    ck.step = r.get<std::uint64_t>();
    const ModelConfig cfg = model_config_from_json(nlohmann::json::parse(r.string(r.get<std::uint32_t>())));
    ck.rng_state = r.string(r.get<std::uint32_t>());
    if (config_hash(cfg, ck.lambda) != hash) throw std::runtime_error("checkpoint: config hash mismatch");

    ck.model = std::make_unique<CodecModel>(cfg, seed);
    auto& ps = ck.model->params();
    const auto n = r.get<std::uint32_t>();
    if (n != ps.items().size())
        throw std::runtime_error("checkpoint: parameter count " + std::to_string(n) + " does not match the model");
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::string name = r.string(r.get<std::uint16_t>());
        const auto numel = r.get<std::uint64_t>();
        if (!ps.contains(name)) throw std::runtime_error("checkpoint: unknown parameter " + name);
        Var p = ps.get(name);
        if (static_cast<std::uint64_t>(p.numel()) != numel) throw std::runtime_error("checkpoint: size mismatch for " + name);
        const auto raw = r.bytes(numel * sizeof(double));
        std::memcpy(p.mutable_value().data(), raw.data(), raw.size());
    }
    auto motion_tables = get_tables(r);
    auto hyper_tables = get_tables(r);
    if (!motion_tables.empty()) ck.model->motion.prior.set_tables(std::move(motion_tables));
    if (!hyper_tables.empty()) ck.model->hyper.prior.set_tables(std::move(hyper_tables));
    if (r.remaining() != 0) throw std::runtime_error("checkpoint: trailing bytes");
    return ck;
}

void save_checkpoint(const std::string& path, const CodecModel& model, double lambda, std::uint64_t step,
                     const std::string& rng_state)
{
    write_file(path, serialize_checkpoint(model, lambda, step, rng_state));
}

Checkpoint load_checkpoint(const std::string& path)
{
    return deserialize_checkpoint(read_file(resolve_checkpoint_path(path)));
}

std::string resolve_checkpoint_path(const std::string& path)
{
    namespace fs = std::filesystem;
    if (fs::exists(path)) return path;
    if (const char* dir = std::getenv("STTVC_CHECKPOINT_DIR")) {
        const fs::path p = fs::path(dir) / path;
        if (fs::exists(p)) return p.string();
    }
    return path;
}

}  // namespace sttvc
