#include "kacdiff/io.hpp"

#include <cmath>
#include <cstdio>

namespace kacdiff {

std::string_view version() { return KACDIFF_VERSION; }

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string header_line(std::string_view config_hash, std::string_view extra) {
    std::string out = "# kacdiff ";
    out += version();
    out += " config=";
    out += config_hash;
    if (!extra.empty()) {
        out += ' ';
        out += extra;
    }
    return out;
}

}  // namespace kacdiff
