#include "resobj/checkpoint.hpp"

#include <fstream>
#include <string>

#include <json.hpp>

#include "binary_io.hpp"
#include "resobj/config.hpp"
#include "resobj/errors.hpp"

namespace resobj {

namespace {

constexpr char kMagic[8] = {'R', 'O', 'B', 'J', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxMetadataBytes = 1u << 24;

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
    nlohmann::json tensors = nlohmann::json::array();
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
        tensors.push_back({{"name", ck.params.names[i]}, {"shape", ck.params.tensors[i].shape}});
    }
    const nlohmann::json meta = {{"config", to_json(ck.config)}, {"iteration", ck.iteration}, {"tensors", tensors}};
    const std::string text = meta.dump();

    os.write(kMagic, sizeof kMagic);
    detail::write_u32(os, kVersion);
    detail::write_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const Tensor& t : ck.params.tensors)
        for (double v : t.data) detail::write_f32(os, v);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    write_checkpoint(out, checkpoint);
    if (!out) throw FormatError("write failed for " + path.string());
}

Checkpoint read_checkpoint(std::istream& is) {
    char magic[sizeof kMagic];
    if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kMagic)) {
        throw FormatError("not a checkpoint (bad magic)");
    }
    const std::uint32_t version = detail::read_u32(is, "version");
    if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t length = detail::read_u32(is, "metadata length");
    if (length > kMaxMetadataBytes) throw FormatError("checkpoint metadata length is implausible");
    const std::string text = detail::read_bytes(is, length, "metadata");

    Checkpoint ck;
    try {
        const auto meta = nlohmann::json::parse(text);
        detail::check_keys(meta, {"config", "iteration", "tensors"}, "checkpoint metadata");
        ck.config = model_config_from_json(meta.at("config"));
        ck.iteration = meta.at("iteration").get<std::uint64_t>();
        for (const auto& t : meta.at("tensors")) {
            ck.params.names.push_back(t.at("name").get<std::string>());
            ck.params.tensors.emplace_back(t.at("shape").get<Shape>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint metadata: ") + e.what());
    }
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
        for (double& v : ck.params.tensors[i].data) v = detail::read_f32(is, "tensor payload");
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint payload");
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return read_checkpoint(in);
}

ModelParameters parameters_for(const Checkpoint& checkpoint, const ModelConfig& config) {
    ModelConfig zero = config;
    zero.init_std = 0.0;
    const ModelParameters expected = init_model(zero);
    const ModelParameters& got = checkpoint.params;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        const std::string& name = expected.names[i];
        if (i >= got.size() || got.names[i] != name) {
            throw FormatError("checkpoint is missing tensor '" + name + "' expected by the config");
        }
        if (got.tensors[i].shape != expected.tensors[i].shape) {
            throw FormatError("tensor '" + name + "' has shape " + shape_string(got.tensors[i].shape) +
                              " in the checkpoint but the config expects " +
                              shape_string(expected.tensors[i].shape));
        }
    }
    if (got.size() > expected.size()) {
        throw FormatError("checkpoint has tensor '" + got.names[expected.size()] + "' the config does not use");
    }
    return got;
}

void quantize_to_f32(ModelParameters& params) {
    for (Tensor& t : params.tensors)
        for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace resobj
