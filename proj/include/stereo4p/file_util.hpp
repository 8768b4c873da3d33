#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace stereo4p {

/// Writes `bytes` to a temporary sibling and renames it over `path`, so
/// an interrupted run never leaves a partial file. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Whole file as bytes. Throws IoError if it cannot be opened.
std::string read_file_bytes(const std::filesystem::path& path);

}  // namespace stereo4p
