#include "bknet/report.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <stdexcept>

namespace bknet {

std::string iso_timestamp_utc() {
    std::time_t t = 0;
    const char* fixed = std::getenv("BK_SOURCE_DATE_EPOCH");
    if (!fixed) fixed = std::getenv("SOURCE_DATE_EPOCH");
    if (fixed) {
        t = std::time_t(std::atoll(fixed));
    } else {
        t = std::time(nullptr);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << text;
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace bknet
