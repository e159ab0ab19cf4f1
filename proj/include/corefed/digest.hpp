#pragma once

#include <span>
#include <string>
#include <string_view>

namespace corefed {

/// Lowercase hex SHA-256 of raw bytes.
std::string sha256_hex(std::span<const unsigned char> bytes);

/// Git blob hash: SHA-1 of "blob <len>\0" followed by the content.
std::string git_blob_hash(std::string_view content);

}  // namespace corefed
