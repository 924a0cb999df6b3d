#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include <sodium.h>

#include "tes/common.hpp"

namespace tes::crypto {

inline void ensure_init() {
    static const int rc = sodium_init();
    if (rc < 0) fail("CryptoInit", "libsodium initialization failed");
}

inline std::string to_hex(const unsigned char* data, size_t len) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (size_t i = 0; i < len; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0xf]);
    }
    return out;
}

inline std::string from_hex(std::string_view hex) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (hex.size() % 2 != 0) fail("BadHex", "odd-length hex string");
    std::string out;
    out.reserve(hex.size() / 2);
    for (size_t i = 0; i < hex.size(); i += 2) {
        int hi = nibble(hex[i]), lo = nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) fail("BadHex", "non-hex character");
        out.push_back(static_cast<char>((hi << 4) | lo));
    }
    return out;
}

inline std::string sha256_hex(std::string_view data) {
    ensure_init();
    unsigned char h[crypto_hash_sha256_BYTES];
    crypto_hash_sha256(h, reinterpret_cast<const unsigned char*>(data.data()), data.size());
    return to_hex(h, sizeof(h));
}

// Ed25519 key pair, hex-encoded. Key generation is seed-deterministic so a
// scenario seed reproduces the same identities run to run.
struct KeyPair {
    std::string public_key;  // hex
    std::string secret_key;  // hex

    static KeyPair from_seed(std::string_view seed) {
        ensure_init();
        unsigned char s[crypto_sign_SEEDBYTES];
        crypto_hash_sha256(s, reinterpret_cast<const unsigned char*>(seed.data()), seed.size());
        static_assert(crypto_sign_SEEDBYTES == crypto_hash_sha256_BYTES);
        unsigned char pk[crypto_sign_PUBLICKEYBYTES];
        unsigned char sk[crypto_sign_SECRETKEYBYTES];
        crypto_sign_seed_keypair(pk, sk, s);
        return {to_hex(pk, sizeof(pk)), to_hex(sk, sizeof(sk))};
    }
};

inline std::string sign(const std::string& secret_key_hex, std::string_view msg) {
    ensure_init();
    std::string sk = from_hex(secret_key_hex);
    if (sk.size() != crypto_sign_SECRETKEYBYTES) fail("BadKey", "wrong secret key size");
    unsigned char sig[crypto_sign_BYTES];
    crypto_sign_detached(sig, nullptr, reinterpret_cast<const unsigned char*>(msg.data()),
                         msg.size(), reinterpret_cast<const unsigned char*>(sk.data()));
    return to_hex(sig, sizeof(sig));
}

inline bool verify(const std::string& public_key_hex, std::string_view msg,
                   const std::string& signature_hex) {
    ensure_init();
    std::string pk, sig;
    try {
        pk = from_hex(public_key_hex);
        sig = from_hex(signature_hex);
    } catch (const Error&) {
        return false;
    }
    if (pk.size() != crypto_sign_PUBLICKEYBYTES || sig.size() != crypto_sign_BYTES) return false;
    return crypto_sign_verify_detached(reinterpret_cast<const unsigned char*>(sig.data()),
                                       reinterpret_cast<const unsigned char*>(msg.data()),
                                       msg.size(),
                                       reinterpret_cast<const unsigned char*>(pk.data())) == 0;
}

// Pluggable hash/signature suite. The ledger takes one of these; tests may
// swap in a fast keyed-digest fake.
struct Suite {
    std::function<std::string(std::string_view)> hash = sha256_hex;
    std::function<std::string(const std::string&, std::string_view)> sign = crypto::sign;
    std::function<bool(const std::string&, std::string_view, const std::string&)> verify =
        crypto::verify;
};

inline const Suite& default_suite() {
    static const Suite s{};
    return s;
}

}  // namespace tes::crypto
