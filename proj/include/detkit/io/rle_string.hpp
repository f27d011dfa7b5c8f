#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace detkit {

// Compressed run-length string form: 5 bits per character with a
// continuation flag, characters offset by 48, counts past the second stored
// as deltas against the count two positions back.
std::string rle_counts_to_string(const std::vector<std::int64_t>& counts);
std::vector<std::int64_t> rle_counts_from_string(const std::string& s);

}  // namespace detkit
