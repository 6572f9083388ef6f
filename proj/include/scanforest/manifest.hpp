#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "scanforest/error.hpp"
#include "scanforest/version.hpp"

namespace scanforest {

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4), self-contained
// ---------------------------------------------------------------------------

class Sha256 {
public:
    Sha256() { reset(); }

    void reset() {
        state_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
                  0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
        bitlen_ = 0;
        buffer_len_ = 0;
    }

    void update(const void* data, std::size_t len) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bitlen_ += static_cast<std::uint64_t>(len) * 8;
        while (len > 0) {
            const std::size_t take = std::min(len, buffer_.size() - buffer_len_);
            std::memcpy(buffer_.data() + buffer_len_, p, take);
            buffer_len_ += take;
            p += take;
            len -= take;
            if (buffer_len_ == buffer_.size()) {
                process_block(buffer_.data());
                buffer_len_ = 0;
            }
        }
    }

    std::array<std::uint8_t, 32> digest() {
        const std::uint64_t bitlen = bitlen_;
        std::uint8_t pad = 0x80;
        update(&pad, 1);
        const std::uint8_t zero = 0;
        while (buffer_len_ != 56) update(&zero, 1);
        std::array<std::uint8_t, 8> len_bytes;
        for (int i = 0; i < 8; ++i)
            len_bytes[static_cast<std::size_t>(i)] =
                static_cast<std::uint8_t>(bitlen >> (56 - 8 * i));
        update(len_bytes.data(), len_bytes.size());

        std::array<std::uint8_t, 32> out;
        for (std::size_t i = 0; i < 8; ++i) {
            out[4 * i] = static_cast<std::uint8_t>(state_[i] >> 24);
            out[4 * i + 1] = static_cast<std::uint8_t>(state_[i] >> 16);
            out[4 * i + 2] = static_cast<std::uint8_t>(state_[i] >> 8);
            out[4 * i + 3] = static_cast<std::uint8_t>(state_[i]);
        }
        return out;
    }

    static std::string hex(std::string_view data) {
        Sha256 h;
        h.update(data.data(), data.size());
        return to_hex(h.digest());
    }

    static std::string hex_of_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open '" + path + "' for hashing");
        Sha256 h;
        std::array<char, 65536> chunk;
        while (in.read(chunk.data(), static_cast<std::streamsize>(chunk.size())) ||
               in.gcount() > 0)
            h.update(chunk.data(), static_cast<std::size_t>(in.gcount()));
        return to_hex(h.digest());
    }

private:
    static std::string to_hex(const std::array<std::uint8_t, 32>& bytes) {
        static const char* digits = "0123456789abcdef";
        std::string s;
        s.reserve(64);
        for (const std::uint8_t b : bytes) {
            s.push_back(digits[b >> 4]);
            s.push_back(digits[b & 0xF]);
        }
        return s;
    }

    static std::uint32_t rotr(std::uint32_t x, int n) {
        return (x >> n) | (x << (32 - n));
    }

    void process_block(const std::uint8_t* p) {
        static constexpr std::array<std::uint32_t, 64> k = {
            0x428a2f98u, 0x71374491u, 0xb5c0fbcfu, 0xe9b5dba5u, 0x3956c25bu, 0x59f111f1u,
            0x923f82a4u, 0xab1c5ed5u, 0xd807aa98u, 0x12835b01u, 0x243185beu, 0x550c7dc3u,
            0x72be5d74u, 0x80deb1feu, 0x9bdc06a7u, 0xc19bf174u, 0xe49b69c1u, 0xefbe4786u,
            0x0fc19dc6u, 0x240ca1ccu, 0x2de92c6fu, 0x4a7484aau, 0x5cb0a9dcu, 0x76f988dau,
            0x983e5152u, 0xa831c66du, 0xb00327c8u, 0xbf597fc7u, 0xc6e00bf3u, 0xd5a79147u,
            0x06ca6351u, 0x14292967u, 0x27b70a85u, 0x2e1b2138u, 0x4d2c6dfcu, 0x53380d13u,
            0x650a7354u, 0x766a0abbu, 0x81c2c92eu, 0x92722c85u, 0xa2bfe8a1u, 0xa81a664bu,
            0xc24b8b70u, 0xc76c51a3u, 0xd192e819u, 0xd6990624u, 0xf40e3585u, 0x106aa070u,
            0x19a4c116u, 0x1e376c08u, 0x2748774cu, 0x34b0bcb5u, 0x391c0cb3u, 0x4ed8aa4au,
            0x5b9cca4fu, 0x682e6ff3u, 0x748f82eeu, 0x78a5636fu, 0x84c87814u, 0x8cc70208u,
            0x90befffau, 0xa4506cebu, 0xbef9a3f7u, 0xc67178f2u};

        std::array<std::uint32_t, 64> w;
        for (std::size_t i = 0; i < 16; ++i)
            w[i] = (static_cast<std::uint32_t>(p[4 * i]) << 24) |
                   (static_cast<std::uint32_t>(p[4 * i + 1]) << 16) |
                   (static_cast<std::uint32_t>(p[4 * i + 2]) << 8) |
                   static_cast<std::uint32_t>(p[4 * i + 3]);
        for (std::size_t i = 16; i < 64; ++i) {
            const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }

        auto [a, b, c, d, e, f, g, h] = state_;
        for (std::size_t i = 0; i < 64; ++i) {
            const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            const std::uint32_t ch = (e & f) ^ (~e & g);
            const std::uint32_t t1 = h + s1 + ch + k[i] + w[i];
            const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            const std::uint32_t t2 = s0 + maj;
            h = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        state_[0] += a;
        state_[1] += b;
        state_[2] += c;
        state_[3] += d;
        state_[4] += e;
        state_[5] += f;
        state_[6] += g;
        state_[7] += h;
    }

    std::array<std::uint32_t, 8> state_;
    std::uint64_t bitlen_ = 0;
    std::array<std::uint8_t, 64> buffer_;
    std::size_t buffer_len_ = 0;
};

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

struct FileDigest {
    std::string path;
    std::string sha256;

    bool operator==(const FileDigest&) const = default;
};

/// Reproducibility record one CLI command writes next to its output.
/// Digests are of the exact bytes consumed or produced.
struct RunManifest {
    std::string command;        // command line as invoked
    std::string config_digest;  // digest of the parsed config bytes; empty if none
    std::vector<FileDigest> inputs;
    std::vector<std::string> outputs;
    std::string timestamp;  // ISO-8601 UTC
};

inline void to_json(nlohmann::json& j, const FileDigest& d) {
    j = nlohmann::json{{"path", d.path}, {"sha256", d.sha256}};
}

inline void from_json(const nlohmann::json& j, FileDigest& d) {
    d.path = j.at("path").get<std::string>();
    d.sha256 = j.at("sha256").get<std::string>();
}

inline void to_json(nlohmann::json& j, const RunManifest& m) {
    j = nlohmann::json{{"schema_version", kManifestSchemaVersion},
                       {"command", m.command},
                       {"config_digest", m.config_digest},
                       {"inputs", m.inputs},
                       {"outputs", m.outputs},
                       {"timestamp", m.timestamp}};
}

inline void from_json(const nlohmann::json& j, RunManifest& m) {
    if (!j.contains("schema_version") ||
        j.at("schema_version").get<int>() != kManifestSchemaVersion)
        throw UnsupportedVersion("unsupported manifest schema_version");
    m.command = j.at("command").get<std::string>();
    m.config_digest = j.at("config_digest").get<std::string>();
    m.inputs = j.at("inputs").get<std::vector<FileDigest>>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.timestamp = j.at("timestamp").get<std::string>();
}

inline std::string now_utc_iso8601() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

/// Manifest sits next to the output it describes:
/// `corpus.csv` + `generate` -> `corpus.csv.generate.manifest.json`.
inline std::string manifest_path_for(const std::string& output_path,
                                     const std::string& command) {
    return output_path + "." + command + ".manifest.json";
}

/// Writes via a temporary file and rename, so a failed write never leaves a
/// truncated file at the destination.
inline void write_file_atomic(const std::string& path, std::string_view content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("failed writing '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
    }
}

inline void write_manifest(const RunManifest& m, const std::string& path) {
    write_file_atomic(path, nlohmann::json(m).dump(2) + "\n");
}

}  // namespace scanforest
