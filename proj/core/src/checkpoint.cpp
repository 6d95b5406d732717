#include "dialscm/checkpoint.hpp"

#include "dialscm/error.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

namespace dialscm {

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kFormatName = "dialscm-checkpoint";

void write_le_doubles(std::ofstream& out, const std::vector<double>& values) {
    for (double v : values) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        unsigned char bytes[8];
        for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
}

std::vector<double> read_le_doubles(std::ifstream& in, std::size_t count) {
    std::vector<double> values(count);
    std::vector<unsigned char> bytes(count * 8);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
        throw ValidationError("checkpoint sidecar is shorter than the manifest declares");
    }
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= static_cast<std::uint64_t>(bytes[i * 8 + static_cast<std::size_t>(b)]) << (8 * b);
        }
        values[i] = std::bit_cast<double>(bits);
    }
    return values;
}

std::size_t shape_count(const std::vector<int>& shape) {
    std::size_t total = 1;
    for (int d : shape) {
        if (d < 0) throw ValidationError("checkpoint tensor has a negative dimension");
        total *= static_cast<std::size_t>(d);
    }
    return total;
}

} // namespace

int checkpoint_format_version() { return kFormatVersion; }

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    std::set<std::string> names;
    for (const NamedTensor& t : checkpoint.tensors) {
        if (!names.insert(t.name).second) {
            throw ValidationError("duplicate checkpoint tensor name '" + t.name + "'");
        }
        if (shape_count(t.shape) != t.values.size()) {
            throw ValidationError("checkpoint tensor '" + t.name + "' has inconsistent shape");
        }
    }

    const std::string sidecar_path = path + ".bin";
    nlohmann::json manifest;
    manifest["format"] = kFormatName;
    manifest["version"] = kFormatVersion;
    manifest["dtype"] = "float64";
    manifest["byte_order"] = "little";
    manifest["sidecar"] = std::filesystem::path(sidecar_path).filename().string();
    try {
        manifest["meta"] = nlohmann::json::parse(checkpoint.meta_json);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint meta is not valid JSON: ") + e.what());
    }

    nlohmann::json tensor_list = nlohmann::json::array();
    std::uint64_t offset_bytes = 0;
    for (const NamedTensor& t : checkpoint.tensors) {
        nlohmann::json entry;
        entry["name"] = t.name;
        entry["shape"] = t.shape;
        entry["offset_bytes"] = offset_bytes;
        entry["count"] = t.values.size();
        tensor_list.push_back(std::move(entry));
        offset_bytes += static_cast<std::uint64_t>(t.values.size()) * 8;
    }
    manifest["tensors"] = std::move(tensor_list);

    std::ofstream side(sidecar_path, std::ios::binary);
    if (!side.good()) throw ValidationError("cannot open '" + sidecar_path + "' for writing");
    for (const NamedTensor& t : checkpoint.tensors) write_le_doubles(side, t.values);
    side.close();
    if (!side.good()) throw ValidationError("failed while writing '" + sidecar_path + "'");

    std::ofstream man(path, std::ios::binary);
    if (!man.good()) throw ValidationError("cannot open '" + path + "' for writing");
    man << manifest.dump(2) << '\n';
    man.close();
    if (!man.good()) throw ValidationError("failed while writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream man(path, std::ios::binary);
    if (!man.good()) throw ValidationError("cannot open checkpoint manifest '" + path + "'");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(man);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed checkpoint manifest: ") + e.what());
    }

    try {
        if (manifest.at("format").get<std::string>() != kFormatName) {
            throw ValidationError("not a checkpoint manifest");
        }
        if (manifest.at("version").get<int>() != kFormatVersion) {
            throw ValidationError("unsupported checkpoint version " +
                                  std::to_string(manifest.at("version").get<int>()));
        }
        if (manifest.at("dtype").get<std::string>() != "float64" ||
            manifest.at("byte_order").get<std::string>() != "little") {
            throw ValidationError("unsupported checkpoint encoding");
        }

        const std::filesystem::path sidecar_path =
            std::filesystem::path(path).parent_path() /
            manifest.at("sidecar").get<std::string>();
        std::ifstream side(sidecar_path, std::ios::binary);
        if (!side.good()) {
            throw ValidationError("cannot open checkpoint sidecar '" + sidecar_path.string() +
                                  "'");
        }

        Checkpoint checkpoint;
        checkpoint.meta_json = manifest.value("meta", nlohmann::json::object()).dump();
        for (const auto& entry : manifest.at("tensors")) {
            NamedTensor t;
            t.name = entry.at("name").get<std::string>();
            t.shape = entry.at("shape").get<std::vector<int>>();
            const std::size_t count = entry.at("count").get<std::size_t>();
            if (shape_count(t.shape) != count) {
                throw ValidationError("checkpoint tensor '" + t.name +
                                      "' count disagrees with its shape");
            }
            side.seekg(static_cast<std::streamoff>(entry.at("offset_bytes").get<std::uint64_t>()));
            if (!side.good()) {
                throw ValidationError("checkpoint sidecar seek failed for '" + t.name + "'");
            }
            t.values = read_le_doubles(side, count);
            checkpoint.tensors.push_back(std::move(t));
        }
        return checkpoint;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed checkpoint manifest: ") + e.what());
    }
}

} // namespace dialscm
