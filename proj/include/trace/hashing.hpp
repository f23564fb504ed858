#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace trace {

/// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 of a file's contents; throws IoError if unreadable.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace trace
