#pragma once

#include <iosfwd>
#include <string>

#include "advlab/network.hpp"

namespace advlab {

inline constexpr int kCheckpointVersion = 1;

/// Text checkpoint: a versioned header, the network spec, then every weight
/// matrix and bias vector with 17 significant digits.
void save_checkpoint(const ReluNetwork& net, std::ostream& out);
void save_checkpoint(const ReluNetwork& net, const std::string& path);
ReluNetwork load_checkpoint(std::istream& in);
ReluNetwork load_checkpoint(const std::string& path);

/// Save to `path` and load it back.
ReluNetwork checkpoint_roundtrip(const ReluNetwork& net, const std::string& path);

}  // namespace advlab
