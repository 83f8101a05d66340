#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rsu {

/// Lowercases ASCII and splits on anything that is not a letter or digit.
/// Non-ASCII bytes are kept inside tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Tokens of `text` joined by single spaces.
std::string normalize_phrase(std::string_view text);

std::optional<long> parse_integer_token(std::string_view token);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::uint64_t fnv1a64(std::string_view data) noexcept;

}  // namespace rsu
