#include "grasp/checkpoint.hpp"

#include "grasp/binary_io.hpp"

#include "json.hpp"

#include <fstream>
#include <map>

namespace grasp {

using json = nlohmann::json;

void ModelConfig::validate() const {
    if (n_layers < 1 || n_heads < 1 || d_model < 1 || vocab_size < 1) {
        throw ConfigError("model dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ConfigError("d_model must be divisible by n_heads");
    }
    if (context_length < 2) {
        throw ConfigError("context_length must be at least 2");
    }
    if (!(bias_scale >= 0.0)) {
        throw ConfigError("bias_scale must be non-negative");
    }
}

std::string ModelConfig::to_json() const {
    return json{{"n_layers", n_layers},         {"n_heads", n_heads},       {"d_model", d_model},
                {"context_length", context_length}, {"vocab_size", vocab_size}, {"bias_scale", bias_scale}}
        .dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    const json doc = json::parse(text);
    ModelConfig c;
    c.n_layers = doc.at("n_layers").get<int>();
    c.n_heads = doc.at("n_heads").get<int>();
    c.d_model = doc.at("d_model").get<int>();
    c.context_length = doc.at("context_length").get<int>();
    c.vocab_size = doc.at("vocab_size").get<int>();
    c.bias_scale = doc.at("bias_scale").get<double>();
    c.validate();
    return c;
}

namespace {

constexpr const char* kMagic = "GSAR-CKPT";
constexpr std::uint32_t kVersion = 1;

void write_string(std::ostream& out, const std::string& s) {
    binio::write(out, static_cast<std::uint32_t>(s.size()));
    binio::write_bytes(out, s.data(), s.size());
}

std::string read_string(std::istream& in, const char* what) {
    const auto n = binio::read<std::uint32_t>(in, what);
    if (n > (1u << 26)) {
        throw IoError(std::string("implausible length for ") + what);
    }
    std::string s(n, '\0');
    binio::read_bytes(in, s.data(), n, what);
    return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::vector<std::pair<std::string, const Mat<float>*>> tensors;
    ckpt.params.for_each([&](const std::string& name, const Mat<float>& t) { tensors.emplace_back(name, &t); });
    ckpt.optimizer.m.for_each(
        [&](const std::string& name, const Mat<float>& t) { tensors.emplace_back("adam.m." + name, &t); });
    ckpt.optimizer.v.for_each(
        [&](const std::string& name, const Mat<float>& t) { tensors.emplace_back("adam.v." + name, &t); });

    json header = json::parse(ckpt.config.to_json());
    header["config_hash"] = ckpt.config_hash;
    header["adam"] = {{"step", ckpt.optimizer.step},
                      {"beta1", ckpt.optimizer.beta1},
                      {"beta2", ckpt.optimizer.beta2},
                      {"eps", ckpt.optimizer.eps},
                      {"clip_norm", ckpt.optimizer.clip_norm}};

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    binio::write_bytes(out, kMagic, 9);
    binio::write(out, kVersion);
    write_string(out, header.dump());
    binio::write(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_string(out, name);
        binio::write(out, std::uint32_t{2});
        binio::write(out, static_cast<std::uint32_t>(t->rows()));
        binio::write(out, static_cast<std::uint32_t>(t->cols()));
        binio::write_bytes(out, t->data(), sizeof(float) * static_cast<std::size_t>(t->size()));
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    binio::expect_magic(in, kMagic);
    const auto version = binio::read<std::uint32_t>(in, "version");
    if (version != kVersion) {
        throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    json header;
    try {
        header = json::parse(read_string(in, "config block"));
        ckpt.config = ModelConfig::from_json(header.dump());
        ckpt.config_hash = header.value("config_hash", "");
        const auto& adam = header.at("adam");
        ckpt.optimizer.step = adam.at("step").get<std::int64_t>();
        ckpt.optimizer.beta1 = adam.at("beta1").get<double>();
        ckpt.optimizer.beta2 = adam.at("beta2").get<double>();
        ckpt.optimizer.eps = adam.at("eps").get<double>();
        ckpt.optimizer.clip_norm = adam.at("clip_norm").get<double>();
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": malformed config block (" + e.what() + ")");
    }

    ckpt.params = Parameters<float>::zeros(ckpt.config);
    ckpt.optimizer.m = Parameters<float>::zeros(ckpt.config);
    ckpt.optimizer.v = Parameters<float>::zeros(ckpt.config);
    std::map<std::string, Mat<float>*> slots;
    ckpt.params.for_each([&](const std::string& name, Mat<float>& t) { slots[name] = &t; });
    ckpt.optimizer.m.for_each([&](const std::string& name, Mat<float>& t) { slots["adam.m." + name] = &t; });
    ckpt.optimizer.v.for_each([&](const std::string& name, Mat<float>& t) { slots["adam.v." + name] = &t; });

    const auto count = binio::read<std::uint32_t>(in, "tensor count");
    if (count != slots.size()) {
        throw IoError(path.string() + ": tensor count does not match the model config");
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = read_string(in, "tensor name");
        auto it = slots.find(name);
        if (it == slots.end()) {
            throw IoError(path.string() + ": unexpected tensor " + name);
        }
        if (binio::read<std::uint32_t>(in, "rank") != 2) {
            throw IoError(path.string() + ": tensor " + name + " is not rank 2");
        }
        const auto rows = binio::read<std::uint32_t>(in, "dims");
        const auto cols = binio::read<std::uint32_t>(in, "dims");
        Mat<float>& t = *it->second;
        if (rows != t.rows() || cols != t.cols()) {
            throw IoError(path.string() + ": shape mismatch for " + name);
        }
        binio::read_bytes(in, t.data(), sizeof(float) * static_cast<std::size_t>(t.size()), name.c_str());
        slots.erase(it);
    }
    return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, int expected_vocab_size) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.config.vocab_size != expected_vocab_size) {
        throw ConfigError(path.string() + ": checkpoint vocab_size " + std::to_string(ckpt.config.vocab_size) +
                          " does not match vocabulary size " + std::to_string(expected_vocab_size));
    }
    return ckpt;
}

}  // namespace grasp
