#include "paddyforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace pf {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'P', 'D', 'Y', 'F', 'O', 'R', 'G', 'E'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) {
    put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& origin)
        : bytes_(bytes), origin_(origin) {}

    const char* take(std::size_t n) {
        if (pos_ + n > bytes_.size()) {
            throw FormatError("checkpoint " + origin_ + ": truncated at byte " +
                              std::to_string(pos_));
        }
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint16_t u16() {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(take(2));
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint32_t u32() {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4));
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) |
               (static_cast<std::uint32_t>(p[3]) << 24);
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

json spec_to_json(const LayerSpec& s) {
    switch (s.kind) {
        case LayerSpec::Kind::Conv2D:
            return {{"kind", "conv2d"},
                    {"out_channels", s.out_channels},
                    {"kernel", {s.kernel_h, s.kernel_w}},
                    {"stride", s.stride},
                    {"padding", s.padding}};
        case LayerSpec::Kind::MaxPool:
            return {{"kind", "maxpool"}, {"window", s.window}, {"stride", s.pool_stride}};
        case LayerSpec::Kind::ReLU:
            return {{"kind", "relu"}};
        case LayerSpec::Kind::Linear:
            return {{"kind", "linear"}, {"out_features", s.out_features}};
        case LayerSpec::Kind::Residual:
            return {{"kind", "residual"}};
        case LayerSpec::Kind::Flatten:
            return {{"kind", "flatten"}};
        case LayerSpec::Kind::GlobalAvgPool:
            return {{"kind", "global_avg_pool"}};
        case LayerSpec::Kind::Softmax:
            return {{"kind", "softmax"}};
    }
    throw ConfigError("unknown layer kind");
}

LayerSpec spec_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "conv2d") {
        const auto& k = j.at("kernel");
        return LayerSpec::conv2d(j.at("out_channels").get<int>(), k.at(0).get<int>(),
                                 k.at(1).get<int>(), j.at("stride").get<int>(),
                                 j.at("padding").get<int>());
    }
    if (kind == "maxpool") {
        return LayerSpec::maxpool(j.at("window").get<int>(), j.at("stride").get<int>());
    }
    if (kind == "relu") return LayerSpec::relu();
    if (kind == "linear") return LayerSpec::linear(j.at("out_features").get<int>());
    if (kind == "residual") return LayerSpec::residual();
    if (kind == "flatten") return LayerSpec::flatten();
    if (kind == "global_avg_pool") return LayerSpec::global_avg_pool();
    if (kind == "softmax") return LayerSpec::softmax();
    throw FormatError("checkpoint header names unknown layer kind '" + kind + "'");
}

}  // namespace

void save_checkpoint(const Network& net, const std::vector<std::string>& classes,
                     const CheckpointMeta& meta, const std::filesystem::path& path) {
    if (static_cast<int>(classes.size()) != net.num_classes()) {
        throw ConfigError("checkpoint: class list size does not match the network");
    }

    json header;
    header["arch"] = net.arch_name();
    header["input"] = {{"height", net.input_size().height}, {"width", net.input_size().width}};
    header["in_channels"] = net.in_channels();
    header["num_classes"] = net.num_classes();
    header["classes"] = classes;
    json layers = json::array();
    for (const LayerSpec& s : net.specs()) layers.push_back(spec_to_json(s));
    header["layers"] = layers;
    json params = json::array();
    for (const Parameter* p : net.parameters()) {
        params.push_back({{"name", p->name}, {"shape", p->master.shape()}});
    }
    header["params"] = params;
    header["meta"] = {
        {"epochs", meta.epochs}, {"config_hash", meta.config_hash}, {"seed", meta.seed}};

    const std::string header_text = header.dump();
    std::string blob;
    blob.append(kMagic, sizeof(kMagic));
    put_u16(blob, kVersion);
    put_u32(blob, static_cast<std::uint32_t>(header_text.size()));
    blob += header_text;
    for (const Parameter* p : net.parameters()) {
        for (std::size_t i = 0; i < p->master.size(); ++i) put_f32(blob, p->master[i]);
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.good()) {
        throw IoError("cannot open checkpoint for writing: " + path.string());
    }
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out.good()) {
        throw IoError("failed writing checkpoint: " + path.string());
    }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) {
        throw IoError("cannot open checkpoint: " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(bytes, path.filename().string());

    const char* magic = r.take(sizeof(kMagic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw FormatError("checkpoint " + path.string() + ": bad magic");
    }
    const std::uint16_t version = r.u16();
    if (version != kVersion) {
        throw FormatError("checkpoint " + path.string() + ": unsupported format version " +
                          std::to_string(version));
    }
    const std::uint32_t header_len = r.u32();
    const char* header_bytes = r.take(header_len);

    json header;
    try {
        header = json::parse(header_bytes, header_bytes + header_len);
    } catch (const json::exception& e) {
        throw FormatError("checkpoint " + path.string() + ": bad header: " + e.what());
    }

    LoadedCheckpoint loaded;
    try {
        std::vector<LayerSpec> specs;
        for (const auto& j : header.at("layers")) specs.push_back(spec_from_json(j));
        const Shape2D input{header.at("input").at("height").get<int>(),
                            header.at("input").at("width").get<int>()};
        loaded.net = Network::from_specs(specs, input, header.at("in_channels").get<int>(),
                                         header.at("num_classes").get<int>(), /*seed=*/0,
                                         header.at("arch").get<std::string>());
        loaded.classes = header.at("classes").get<std::vector<std::string>>();
        loaded.meta.epochs = header.at("meta").at("epochs").get<std::uint64_t>();
        loaded.meta.config_hash = header.at("meta").at("config_hash").get<std::string>();
        loaded.meta.seed = header.at("meta").at("seed").get<std::uint64_t>();

        auto params = loaded.net.parameters();
        const auto& param_headers = header.at("params");
        if (param_headers.size() != params.size()) {
            throw FormatError("checkpoint " + path.string() + ": header lists " +
                              std::to_string(param_headers.size()) + " parameters, network has " +
                              std::to_string(params.size()));
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto shape = param_headers.at(i).at("shape").get<std::vector<std::size_t>>();
            if (shape != params[i]->master.shape()) {
                throw FormatError("checkpoint " + path.string() + ": parameter " +
                                  params[i]->name + " shape disagrees with the architecture");
            }
        }
        for (Parameter* p : params) {
            for (std::size_t i = 0; i < p->master.size(); ++i) p->master[i] = r.f32();
            p->sync_working(Precision::Full32);
            p->zero_grad();
            p->trainable = true;  // freeze decisions never persist
        }
    } catch (const json::exception& e) {
        throw FormatError("checkpoint " + path.string() + ": bad header: " + e.what());
    }
    if (r.remaining() != 0) {
        throw FormatError("checkpoint " + path.string() + ": " +
                          std::to_string(r.remaining()) + " trailing bytes after payload");
    }
    if (static_cast<int>(loaded.classes.size()) != loaded.net.num_classes()) {
        throw FormatError("checkpoint " + path.string() +
                          ": class list does not match num_classes");
    }
    return loaded;
}

}  // namespace pf
