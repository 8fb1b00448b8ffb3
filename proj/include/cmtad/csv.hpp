#pragma once

#include <string>
#include <vector>

namespace cmtad {

// Minimal CSV: comma-separated, no quoting (none of our formats need it).
// Lines starting with '#' and blank lines are skipped on read.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path);
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace cmtad
