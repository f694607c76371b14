#ifndef FEDBOOK_CHECKPOINT_H_
#define FEDBOOK_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "fedbook/params.h"

namespace fedbook {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Versioned binary container:
//   "FEDBOOK\0" | u32 version | u32 #meta | (str key, str value)*
//   | u32 #params | (str name, u32 rank, u64 dims[rank], f64 data[])*
//   | u8 has_counters | [u64 heads, u64 tokens, u64 counts[]]
// Strings are u32 length + bytes. All integers and doubles are written in
// host byte order, so files round-trip bit-exactly on the same platform.
struct Checkpoint {
  std::map<std::string, std::string> metadata;
  ParamSet params;
  std::optional<FrequencyCounters> counters;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void WriteCheckpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint ReadCheckpoint(std::istream& in);

void SaveCheckpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

}  // namespace fedbook

#endif  // FEDBOOK_CHECKPOINT_H_
