#include "oreo/types.hpp"

#include <charconv>

namespace oreo {

std::string format_tokens(std::span<const TokenId> tokens) {
  std::string out;
  out.reserve(tokens.size() * 3);
  char buf[16];
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(',');
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), tokens[i]);
    out.append(buf, p);
  }
  return out;
}

}  // namespace oreo
