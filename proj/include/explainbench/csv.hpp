#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace explainbench::csv {

using Record = std::vector<std::string>;

// RFC-4180 reader: quoted fields, doubled quotes, embedded newlines, CRLF or
// LF line endings. A UTF-8 byte-order mark on the first field is dropped.
std::vector<Record> parse(std::string_view text);
std::vector<Record> read_file(const std::string& path);

// Quotes a field only when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);
void write_record(std::ostream& out, const Record& record);

}  // namespace explainbench::csv
