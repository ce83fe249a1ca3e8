#include "fusion/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace fusion {

TrainState TrainState::init(const ParamList& params, std::uint64_t seed) {
    TrainState state;
    state.seed = seed;
    for (const auto& p : params) {
        state.m.push_back(Tensor::zeros(p.tensor.shape()));
        state.v.push_back(Tensor::zeros(p.tensor.shape()));
    }
    return state;
}

namespace {

constexpr char kMagic[4] = {'F', 'U', 'S', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t x) {
    for (int i = 0; i < 4; ++i)
        buf.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t x) {
    for (int i = 0; i < 8; ++i)
        buf.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double x) {
    put_u64(buf, std::bit_cast<std::uint64_t>(x));
}

struct Cursor {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw CheckpointError("checkpoint truncated at byte " +
                                  std::to_string(pos));
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i)
            x |= static_cast<std::uint32_t>(
                     static_cast<unsigned char>(buf[pos + i]))
                 << (8 * i);
        pos += 4;
        return x;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i)
            x |= static_cast<std::uint64_t>(
                     static_cast<unsigned char>(buf[pos + i]))
                 << (8 * i);
        pos += 8;
        return x;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

void put_record(std::string& buf, const std::string& name, const Tensor& t) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    put_u32(buf, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u64(buf, e);
    for (double x : t.data()) put_f64(buf, x);
}

struct Record {
    Shape shape;
    std::vector<double> values;
};

std::pair<std::string, Record> read_record(Cursor& c) {
    std::uint32_t name_len = c.u32();
    std::string name = c.bytes(name_len);
    std::uint32_t rank = c.u32();
    if (rank > 8)
        throw CheckpointError("checkpoint record '" + name +
                              "' has implausible rank " +
                              std::to_string(rank));
    Record r;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        std::uint64_t e = c.u64();
        r.shape.push_back(static_cast<std::size_t>(e));
        count *= static_cast<std::size_t>(e);
    }
    r.values.resize(count);
    for (auto& x : r.values) x = c.f64();
    return {std::move(name), std::move(r)};
}

struct Parsed {
    std::uint32_t ablation_bits = 0;
    std::uint32_t base = 0;
    std::uint64_t model_seed = 0;
    TrainState scalars;  // moments filled separately
    std::map<std::string, Record> records;
};

Parsed parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CheckpointError("cannot open checkpoint: " + path);
    std::string raw((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    if (raw.size() < 8 || std::memcmp(raw.data(), kMagic, 4) != 0)
        throw CheckpointError("not a checkpoint file: " + path);

    std::string body = raw.substr(4, raw.size() - 8);
    std::uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<std::uint32_t>(static_cast<unsigned char>(
                          raw[raw.size() - 4 + i]))
                      << (8 * i);
    std::uint32_t actual_crc = static_cast<std::uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(body.data()),
              static_cast<uInt>(body.size())));
    if (stored_crc != actual_crc)
        throw CheckpointError("checkpoint CRC mismatch in " + path);

    Cursor c{body};
    std::uint32_t version = c.u32();
    if (version != kVersion)
        throw CheckpointError("unsupported checkpoint version " +
                              std::to_string(version));
    Parsed p;
    p.ablation_bits = c.u32();
    p.base = c.u32();
    p.model_seed = c.u64();
    p.scalars.step = c.u64();
    p.scalars.best_val = c.f64();
    p.scalars.epochs_since_best = c.u64();
    p.scalars.seed = c.u64();
    std::uint32_t n_records = c.u32();
    for (std::uint32_t i = 0; i < n_records; ++i) {
        auto [name, rec] = read_record(c);
        if (!p.records.emplace(std::move(name), std::move(rec)).second)
            throw CheckpointError("duplicate checkpoint record");
    }
    if (c.pos != body.size())
        throw CheckpointError("trailing bytes in checkpoint " + path);
    return p;
}

void restore(const Parsed& parsed, FusionModel& model, TrainState& state) {
    const ParamList& params = model.parameters();
    if (parsed.records.size() != 3 * params.size())
        throw CheckpointError("checkpoint tensor count mismatch: stored " +
                              std::to_string(parsed.records.size()) +
                              ", model needs " +
                              std::to_string(3 * params.size()));
    // validate the full shape table before touching the model
    for (const auto& p : params)
        for (const char* kind : {"param:", "m:", "v:"}) {
            auto it = parsed.records.find(kind + p.name);
            if (it == parsed.records.end())
                throw CheckpointError(std::string("checkpoint missing "
                                                  "tensor ") +
                                      kind + p.name);
            if (it->second.shape != p.tensor.shape())
                throw CheckpointError("checkpoint shape mismatch for " +
                                      p.name + ": stored " +
                                      shape_str(it->second.shape) +
                                      ", model has " +
                                      shape_str(p.tensor.shape()));
        }

    TrainState fresh = TrainState::init(params, parsed.scalars.seed);
    fresh.step = parsed.scalars.step;
    fresh.best_val = parsed.scalars.best_val;
    fresh.epochs_since_best = parsed.scalars.epochs_since_best;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& name = params[i].name;
        auto copy_into = [&](const std::string& key, Tensor& dst) {
            const auto& vals = parsed.records.at(key).values;
            std::copy(vals.begin(), vals.end(), dst.data().begin());
        };
        Tensor pt = params[i].tensor;
        copy_into("param:" + name, pt);
        copy_into("m:" + name, fresh.m[i]);
        copy_into("v:" + name, fresh.v[i]);
    }
    state = std::move(fresh);
}

}  // namespace

void save_checkpoint(const FusionModel& model, const TrainState& state,
                     const std::string& path) {
    const ParamList& params = model.parameters();
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw CheckpointError("train state does not match model parameters");

    std::string body;
    put_u32(body, kVersion);
    put_u32(body, model.ablation().to_bits());
    put_u32(body, static_cast<std::uint32_t>(model.config().base));
    put_u64(body, model.seed());
    put_u64(body, state.step);
    put_f64(body, state.best_val);
    put_u64(body, state.epochs_since_best);
    put_u64(body, state.seed);
    put_u32(body, static_cast<std::uint32_t>(3 * params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        put_record(body, "param:" + params[i].name, params[i].tensor);
        put_record(body, "m:" + params[i].name, state.m[i]);
        put_record(body, "v:" + params[i].name, state.v[i]);
    }

    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(body.data()),
              static_cast<uInt>(body.size())));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw CheckpointError("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    for (int i = 0; i < 4; ++i) {
        char b = static_cast<char>((crc >> (8 * i)) & 0xff);
        out.write(&b, 1);
    }
    if (!out)
        throw CheckpointError("short write to checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    Parsed parsed = parse_file(path);
    FusionModel model(ModelConfig::from_base(parsed.base),
                      AblationConfig::from_bits(parsed.ablation_bits),
                      parsed.model_seed);
    TrainState state;
    restore(parsed, model, state);
    return {std::move(model), std::move(state)};
}

void load_checkpoint_into(const std::string& path, FusionModel& model,
                          TrainState& state) {
    Parsed parsed = parse_file(path);
    if (parsed.base != model.config().base)
        throw CheckpointError(
            "checkpoint base width " + std::to_string(parsed.base) +
            " does not match model base " +
            std::to_string(model.config().base));
    if (parsed.ablation_bits != model.ablation().to_bits())
        throw CheckpointError("checkpoint ablation config does not match "
                              "model");
    restore(parsed, model, state);
}

}  // namespace fusion
