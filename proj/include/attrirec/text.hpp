#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace attrirec {

// Lowercases ASCII and splits on every byte that is not an ASCII letter or
// digit. Bytes >= 0x80 are kept inside tokens so UTF-8 words stay whole.
std::vector<std::string> tokenize(std::string_view text);

std::string trim(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

} // namespace attrirec
