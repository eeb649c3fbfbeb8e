#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "oreo/mdp.hpp"
#include "oreo/tables.hpp"

namespace oreo {

// Versioned text checkpoint. Header line "oreo-ckpt v1", then one record
// per state:
//   S <comma-separated tokens> | logits: <comma-separated doubles>
//   S <comma-separated tokens> | V: <double>
// Records are sorted by key so identical tables serialize byte-identically.
struct Checkpoint {
  std::map<StateKey, std::vector<double>> logits;
  std::map<StateKey, double> values;
};

Checkpoint make_checkpoint(const PolicyTable& policy, const ValueTable& value);

std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text);

void write_checkpoint(const Checkpoint& ckpt,
                      const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Rebuilds a policy table by matching checkpoint keys against the MDP's
/// reachable states; logits are in legal-action order. ContractError on
/// unknown keys or arity mismatches.
PolicyTable bind_policy(const TaskMdp& mdp, const Checkpoint& ckpt,
                        std::size_t cap = kDefaultStateCap);

/// Value entries as stored (afterstate keys included).
ValueTable bind_value(const Checkpoint& ckpt);

}  // namespace oreo
