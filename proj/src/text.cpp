#include "rsu/text.hpp"

#include <charconv>

#include "rsu/error.hpp"

namespace rsu {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::parse: return "parse";
    case ErrorCode::validation: return "validation";
    case ErrorCode::duplicate: return "duplicate";
    case ErrorCode::not_found: return "not-found";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::backend_unavailable: return "backend-unavailable";
    case ErrorCode::backend_timeout: return "timeout";
    case ErrorCode::malformed_response: return "malformed-response";
    case ErrorCode::missing_ground_truth: return "missing-annotation";
    case ErrorCode::pool_exhausted: return "pool-exhausted";
    case ErrorCode::network: return "network";
  }
  return "unknown";
}

namespace {
bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}
}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string normalize_phrase(std::string_view text) { return join(tokenize(text), " "); }

std::optional<long> parse_integer_token(std::string_view token) {
  if (token.empty()) return std::nullopt;
  long value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) return std::nullopt;
  return value;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view data) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace rsu
