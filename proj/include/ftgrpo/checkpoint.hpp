#pragma once

// Checkpoint container: magic + version header, a JSON manifest (dims, vocab,
// tensor table, payload checksum, role metadata), then raw little-endian
// float32 tensor data in manifest order. Round-trips bit-exactly.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ftgrpo/policy.hpp"
#include "ftgrpo/vocab.hpp"

namespace ftgrpo {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

inline constexpr char kCheckpointMagic[4] = {'F', 'T', 'G', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    bool reference_eligible = false;
    std::string role;              // e.g. "init", "sft", "grpo"
    nlohmann::ordered_json extra;  // opaque run metadata

    CheckpointMeta() : extra(nlohmann::ordered_json::object()) {}
};

struct Checkpoint {
    PolicyParams params;
    std::vector<std::string> vocabulary;
    CheckpointMeta meta;
};

namespace detail {

inline std::uint64_t fnv1a64_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    const auto shapes = detail::tensor_shapes(ck.params.dims);
    auto tensors = ck.params.tensor_map();

    std::vector<float> payload;
    payload.reserve(ck.params.param_count());
    nlohmann::ordered_json tensor_table = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const auto& vec = *tensors[i].second;
        tensor_table.push_back({{"name", shapes[i].name},
                                {"shape", {shapes[i].rows, shapes[i].cols}},
                                {"offset", offset},
                                {"count", vec.size()}});
        payload.insert(payload.end(), vec.begin(), vec.end());
        offset += vec.size();
    }
    const std::uint64_t checksum =
        detail::fnv1a64_bytes(payload.data(), payload.size() * sizeof(float));

    nlohmann::ordered_json manifest = {
        {"format_version", kCheckpointVersion},
        {"dims",
         {{"vocab", ck.params.dims.vocab},
          {"embed", ck.params.dims.embed},
          {"hidden", ck.params.dims.hidden}}},
        {"param_count", ck.params.param_count()},
        {"payload_checksum", checksum},
        {"tensors", tensor_table},
        {"vocabulary", ck.vocabulary},
        {"reference_eligible", ck.meta.reference_eligible},
        {"role", ck.meta.role},
        {"meta", ck.meta.extra},
    };
    const std::string mstr = manifest.dump();

    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open '" + path + "' for writing");
    out.write(kCheckpointMagic, 4);
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t mlen = mstr.size();
    out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
    in.seekg(0, std::ios::end);
    const std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0, std::ios::beg);

    auto fail = [&](std::uint64_t offset, const std::string& why) -> Checkpoint {
        throw std::runtime_error("load_checkpoint: '" + path + "' corrupt at offset " +
                                 std::to_string(offset) + ": " + why);
    };

    char magic[4] = {};
    if (file_size < 16) return fail(0, "file shorter than header");
    in.read(magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) return fail(0, "bad magic");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kCheckpointVersion)
        throw std::runtime_error("load_checkpoint: '" + path + "' has container version " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
    std::uint64_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    if (16 + mlen > file_size) return fail(16, "manifest length exceeds file size");
    std::string mstr(mlen, '\0');
    in.read(mstr.data(), static_cast<std::streamsize>(mlen));

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mstr);
    } catch (const std::exception& e) {
        return fail(16, std::string("manifest parse error: ") + e.what());
    }

    Checkpoint ck;
    PolicyDims dims;
    dims.vocab = manifest.at("dims").at("vocab").get<int>();
    dims.embed = manifest.at("dims").at("embed").get<int>();
    dims.hidden = manifest.at("dims").at("hidden").get<int>();
    ck.params = zero_params(dims);
    ck.vocabulary = manifest.at("vocabulary").get<std::vector<std::string>>();
    ck.meta.reference_eligible = manifest.at("reference_eligible").get<bool>();
    ck.meta.role = manifest.at("role").get<std::string>();
    ck.meta.extra = manifest.value("meta", nlohmann::ordered_json::object());

    const std::uint64_t expected_count = manifest.at("param_count").get<std::uint64_t>();
    if (expected_count != ck.params.param_count())
        return fail(16, "param_count " + std::to_string(expected_count) +
                            " does not match dims (expected " +
                            std::to_string(ck.params.param_count()) + ")");
    const std::uint64_t payload_offset = 16 + mlen;
    const std::uint64_t payload_bytes = expected_count * sizeof(float);
    if (payload_offset + payload_bytes != file_size)
        return fail(payload_offset, "payload has " + std::to_string(file_size - payload_offset) +
                                        " bytes, expected " + std::to_string(payload_bytes));

    std::vector<float> payload(expected_count);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload_bytes));
    if (!in) return fail(payload_offset, "payload read failed");

    const std::uint64_t checksum = detail::fnv1a64_bytes(payload.data(), payload_bytes);
    const std::uint64_t expected_sum = manifest.at("payload_checksum").get<std::uint64_t>();
    if (checksum != expected_sum)
        return fail(payload_offset, "payload checksum mismatch (expected " +
                                        std::to_string(expected_sum) + ", got " +
                                        std::to_string(checksum) + ")");

    auto tensors = ck.params.tensor_map();
    const auto shapes = detail::tensor_shapes(dims);
    std::size_t cursor = 0;
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::uint64_t count = entry.at("count").get<std::uint64_t>();
        bool found = false;
        for (std::size_t i = 0; i < shapes.size(); ++i) {
            if (name != shapes[i].name) continue;
            found = true;
            auto& vec = *tensors[i].second;
            if (count != vec.size())
                return fail(payload_offset, "tensor '" + name + "' count " +
                                                std::to_string(count) + " != expected " +
                                                std::to_string(vec.size()));
            std::copy(payload.begin() + static_cast<std::ptrdiff_t>(cursor),
                      payload.begin() + static_cast<std::ptrdiff_t>(cursor + count), vec.begin());
            break;
        }
        if (!found) return fail(payload_offset, "unknown tensor '" + name + "' in manifest");
        cursor += count;
    }
    if (cursor != expected_count)
        return fail(payload_offset, "tensor table covers " + std::to_string(cursor) +
                                        " values, payload has " + std::to_string(expected_count));
    return ck;
}

} // namespace ftgrpo
