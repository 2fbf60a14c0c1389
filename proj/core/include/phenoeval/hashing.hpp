#pragma once

#include <string>
#include <string_view>

namespace phenoeval {

// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

// Lowercase hex of the first 128 bits of SHA-256(data). Used for concept ids.
std::string content_id128(std::string_view data);

}  // namespace phenoeval
