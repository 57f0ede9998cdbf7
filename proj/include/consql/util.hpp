#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace consql::util {

std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename, so readers never observe a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

void log_warn(std::string_view message);
void log_info(std::string_view message);
/// Suppresses log_info output (warnings still print).
void set_quiet(bool quiet);

}  // namespace consql::util
