#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace attrirec {

// Throws InputError when the file cannot be read.
std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place, so readers
// never observe a partially written file. Throws InputError on failure.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string_view trim_view(std::string_view text);

} // namespace attrirec
