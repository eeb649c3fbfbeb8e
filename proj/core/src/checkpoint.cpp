#include "oreo/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "oreo/errors.hpp"

namespace oreo {

namespace {

constexpr std::string_view kHeader = "oreo-ckpt v1";

std::string format_double(double x) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) throw NumericError("checkpoint: unprintable double");
  return std::string(buf, p);
}

double parse_double(std::string_view s, std::size_t line_no) {
  double x = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw IoError("checkpoint line " + std::to_string(line_no) +
                  ": bad number '" + std::string(s) + "'");
  return x;
}

StateKey parse_key(std::string_view s, std::size_t line_no) {
  StateKey key;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t comma = s.find(',', pos);
    if (comma == std::string_view::npos) comma = s.size();
    const std::string_view item = s.substr(pos, comma - pos);
    TokenId t = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), t);
    if (ec != std::errc{} || p != item.data() + item.size())
      throw IoError("checkpoint line " + std::to_string(line_no) +
                    ": bad token '" + std::string(item) + "'");
    key.push_back(t);
    pos = comma + 1;
  }
  return key;
}

std::vector<double> parse_doubles(std::string_view s, std::size_t line_no) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t comma = s.find(',', pos);
    if (comma == std::string_view::npos) comma = s.size();
    out.push_back(parse_double(s.substr(pos, comma - pos), line_no));
    pos = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

Checkpoint make_checkpoint(const PolicyTable& policy,
                           const ValueTable& value) {
  Checkpoint ckpt;
  for (const StateKey& k : policy.sorted_keys())
    ckpt.logits.emplace(k, policy.entry_by_key(k).logits);
  for (const StateKey& k : value.sorted_keys())
    ckpt.values.emplace(k, value.at_key(k));
  return ckpt;
}

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  std::string out{kHeader};
  out += '\n';
  for (const auto& [key, logits] : ckpt.logits) {
    out += "S ";
    out += format_tokens(key);
    out += " | logits: ";
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (i > 0) out += ',';
      out += format_double(logits[i]);
    }
    out += '\n';
  }
  for (const auto& [key, v] : ckpt.values) {
    out += "S ";
    out += format_tokens(key);
    out += " | V: ";
    out += format_double(v);
    out += '\n';
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view text) {
  std::istringstream lines{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(lines, line) || trim(line) != kHeader)
    throw IoError("checkpoint: missing 'oreo-ckpt v1' header");
  ++line_no;
  Checkpoint ckpt;
  while (std::getline(lines, line)) {
    ++line_no;
    std::string_view rest = trim(line);
    if (rest.empty()) continue;
    if (!rest.starts_with("S "))
      throw IoError("checkpoint line " + std::to_string(line_no) +
                    ": expected 'S ' record");
    rest.remove_prefix(2);
    const std::size_t bar = rest.find(" | ");
    if (bar == std::string_view::npos)
      throw IoError("checkpoint line " + std::to_string(line_no) +
                    ": missing ' | ' separator");
    const StateKey key = parse_key(trim(rest.substr(0, bar)), line_no);
    std::string_view payload = trim(rest.substr(bar + 3));
    if (payload.starts_with("logits: ")) {
      payload.remove_prefix(8);
      if (!ckpt.logits.emplace(key, parse_doubles(payload, line_no)).second)
        throw IoError("checkpoint line " + std::to_string(line_no) +
                      ": duplicate logits record");
    } else if (payload.starts_with("V: ")) {
      payload.remove_prefix(3);
      if (!ckpt.values.emplace(key, parse_double(payload, line_no)).second)
        throw IoError("checkpoint line " + std::to_string(line_no) +
                      ": duplicate value record");
    } else {
      throw IoError("checkpoint line " + std::to_string(line_no) +
                    ": unknown record payload");
    }
  }
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << checkpoint_to_string(ckpt);
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

PolicyTable bind_policy(const TaskMdp& mdp, const Checkpoint& ckpt,
                        std::size_t cap) {
  std::unordered_map<StateKey, State, StateKeyHash> by_key;
  for (State& s : enumerate_states(mdp, cap)) {
    StateKey key = s.tokens;
    by_key.emplace(std::move(key), std::move(s));
  }
  PolicyTable table;
  for (const auto& [key, logits] : ckpt.logits) {
    auto it = by_key.find(key);
    if (it == by_key.end())
      throw ContractError("checkpoint policy state [" + format_tokens(key) +
                          "] is not reachable in this environment");
    const auto actions = mdp.legal_actions(it->second);
    if (actions.size() != logits.size())
      throw ContractError("checkpoint logits arity mismatch in state [" +
                          format_tokens(key) + "]");
    table.define_state(it->second, actions, logits);
  }
  return table;
}

ValueTable bind_value(const Checkpoint& ckpt) {
  ValueTable table;
  for (const auto& [key, v] : ckpt.values) table.set_key(key, v);
  return table;
}

}  // namespace oreo
