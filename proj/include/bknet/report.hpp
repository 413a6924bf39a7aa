#pragma once

#include <string>

namespace bknet {

// ISO-8601 UTC timestamp. Honors BK_SOURCE_DATE_EPOCH (or
// SOURCE_DATE_EPOCH) so reproducible runs emit byte-identical reports.
std::string iso_timestamp_utc();

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace bknet
