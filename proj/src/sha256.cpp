#include "etlab/sha256.hpp"

#include <openssl/evp.h>

#include <stdexcept>

namespace etlab {

Sha256Digest sha256(const uint8_t* data, size_t len) {
    Sha256Digest digest{};
    unsigned int out_len = 0;
    if (EVP_Digest(data, len, digest.data(), &out_len, EVP_sha256(), nullptr) != 1 || out_len != 32)
        throw std::runtime_error("sha256: EVP_Digest failed");
    return digest;
}

Sha256Digest sha256(const std::vector<uint8_t>& data) { return sha256(data.data(), data.size()); }

Sha256Digest sha256(const std::string& data) {
    return sha256(reinterpret_cast<const uint8_t*>(data.data()), data.size());
}

std::string to_hex(const Sha256Digest& digest) {
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (uint8_t b : digest) {
        s.push_back(hex[b >> 4]);
        s.push_back(hex[b & 0xF]);
    }
    return s;
}

std::string sha256_hex(const std::vector<uint8_t>& data) { return to_hex(sha256(data)); }
std::string sha256_hex(const std::string& data) { return to_hex(sha256(data)); }

}  // namespace etlab
