#include "detkit/io/rle_string.hpp"

#include <stdexcept>

namespace detkit {

std::string rle_counts_to_string(const std::vector<std::int64_t>& counts) {
    std::string s;
    s.reserve(counts.size() * 2);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        std::int64_t x = counts[i];
        if (i > 2) x -= counts[i - 2];
        bool more = true;
        while (more) {
            char c = char(x & 0x1f);
            x >>= 5;
            more = (c & 0x10) ? x != -1 : x != 0;
            if (more) c |= 0x20;
            s.push_back(char(c + 48));
        }
    }
    return s;
}

std::vector<std::int64_t> rle_counts_from_string(const std::string& s) {
    std::vector<std::int64_t> counts;
    std::size_t p = 0;
    while (p < s.size()) {
        std::int64_t x = 0;
        int k = 0;
        bool more = true;
        while (more) {
            if (p >= s.size()) throw std::invalid_argument("truncated run-length string");
            const char c = char(s[p] - 48);
            if (c < 0 || c > 0x3f) throw std::invalid_argument("corrupt run-length string");
            x |= std::int64_t(c & 0x1f) << (5 * k);
            more = (c & 0x20) != 0;
            ++p;
            ++k;
            if (!more && (c & 0x10)) x |= std::int64_t(-1) << (5 * k);
        }
        if (counts.size() > 2) x += counts[counts.size() - 2];
        counts.push_back(x);
    }
    return counts;
}

}  // namespace detkit
