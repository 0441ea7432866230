#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmnet/model.hpp"
#include "mmnet/params.hpp"

namespace mmnet {

// Immutable snapshot of a model's parameters plus the digest of the config
// that produced them.
struct Checkpoint {
  std::uint64_t config_digest = 0;
  std::vector<ParamEntry> tensors;  // manifest order
};

Checkpoint snapshot(const ParamRegistry& params, std::uint64_t config_digest);

// Little-endian binary layout:
//   8 bytes  magic "MMNETCK1"
//   u32      format version (1)
//   u64      config digest
//   u32      tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u32 dims[rank],
//               f64 values (row-major)
// Round-trips are bit-exact.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint values into the model. The checkpoint must carry the
// expected config digest and match the model's manifest exactly.
void load_into_model(MMNet& model, const Checkpoint& ckpt,
                     std::uint64_t expected_digest);

}  // namespace mmnet
