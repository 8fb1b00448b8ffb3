#include "cmtad/csv.hpp"

#include "cmtad/common.hpp"

#include <fstream>

namespace cmtad {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto cells = split_csv_line(line);
        if (!have_header) {
            table.header = std::move(cells);
            have_header = true;
        } else {
            if (cells.size() != table.header.size())
                throw ValidationError("'" + path + "': row with " + std::to_string(cells.size()) +
                                      " cells, header has " + std::to_string(table.header.size()));
            table.rows.push_back(std::move(cells));
        }
    }
    if (!have_header) throw ValidationError("'" + path + "': no header row");
    return table;
}

}  // namespace cmtad
