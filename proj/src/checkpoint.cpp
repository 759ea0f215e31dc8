#include "cmfuse/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "cmfuse/error.hpp"

namespace cmfuse {

namespace {

constexpr char kMagic[8] = {'C', 'M', 'F', 'U', 'S', 'E', '0', '1'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw io_error("truncated checkpoint: " + path);
    return v;
}

void write_string(std::ofstream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in, const std::string& path) {
    const auto len = read_pod<std::uint32_t>(in, path);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw io_error("truncated checkpoint: " + path);
    return s;
}

void write_doubles(std::ofstream& out, const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, Tensor& t, const std::string& path) {
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw io_error("truncated checkpoint: " + path);
}

void write_store(std::ofstream& out, const std::string& name, const ParamStore& store) {
    write_string(out, name);
    write_pod<std::int64_t>(out, store.step());
    write_pod<std::uint64_t>(out, store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& e = store.entry(i);
        write_string(out, e.name);
        write_pod<std::int32_t>(out, e.value.rows());
        write_pod<std::int32_t>(out, e.value.cols());
        write_doubles(out, e.value);
        write_doubles(out, e.m);
        write_doubles(out, e.v);
    }
}

void read_store(std::ifstream& in, ParamStore& store, const std::string& path) {
    store.set_step(read_pod<std::int64_t>(in, path));
    const auto count = read_pod<std::uint64_t>(in, path);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = read_string(in, path);
        const auto rows = read_pod<std::int32_t>(in, path);
        const auto cols = read_pod<std::int32_t>(in, path);
        Tensor value(rows, cols), m(rows, cols), v(rows, cols);
        read_doubles(in, value, path);
        read_doubles(in, m, path);
        read_doubles(in, v, path);
        if (store.has(name)) {
            throw io_error("duplicate parameter in checkpoint: " + name);
        }
        store.add(name, std::move(value));
        auto& e = store.entry(store.size() - 1);
        e.m = std::move(m);
        e.v = std::move(v);
    }
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.write(kMagic, sizeof(kMagic));

    nlohmann::json meta = {
        {"format_version", 1},
        {"n", state.gcfg.n},
        {"T", state.gcfg.T},
        {"d", state.gcfg.d},
        {"d_k", state.gcfg.d_k},
        {"d_v", state.gcfg.d_v},
        {"lambda", state.gcfg.lambda},
        {"hidden", state.hcfg.hidden},
        {"epoch", state.epoch},
        {"rng", state.rng.serialize()},
    };
    write_string(out, meta.dump());

    write_pod<std::uint32_t>(out, 2);
    write_store(out, "gen", state.gen_store);
    write_store(out, "disc", state.disc_store);
    if (!out) throw io_error("write failed: " + path);
}

TrainState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw io_error("not a checkpoint file: " + path);
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_string(in, path));
    } catch (const std::exception& e) {
        throw io_error("bad checkpoint metadata in " + path + ": " + e.what());
    }

    TrainState state;
    state.gcfg.n = meta.at("n").get<int>();
    state.gcfg.T = meta.at("T").get<int>();
    state.gcfg.d = meta.at("d").get<int>();
    state.gcfg.d_k = meta.at("d_k").get<int>();
    state.gcfg.d_v = meta.at("d_v").get<int>();
    state.gcfg.lambda = meta.at("lambda").get<double>();
    state.hcfg = HeadConfig{state.gcfg.n, meta.at("hidden").get<int>()};
    state.epoch = meta.at("epoch").get<int>();
    state.rng.deserialize(meta.at("rng").get<std::string>());

    const auto store_count = read_pod<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < store_count; ++i) {
        const std::string name = read_string(in, path);
        if (name == "gen") {
            read_store(in, state.gen_store, path);
        } else if (name == "disc") {
            read_store(in, state.disc_store, path);
        } else {
            throw io_error("unknown store '" + name + "' in checkpoint: " + path);
        }
    }
    return state;
}

}  // namespace cmfuse
