#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ldlmoe/series.hpp"

namespace ldlmoe {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::invalid_argument("csv: missing column '" + name + "'");
    }

    bool has_column(const std::string& name) const {
        for (const auto& h : header)
            if (h == name) return true;
        return false;
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("csv: cannot open " + path);
    CsvTable t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        if (!s.empty() && s.back() == ',') out.push_back("");
        return out;
    };
    if (!std::getline(f, line)) throw std::runtime_error("csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split(line);
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto row = split(line);
        if (row.size() != t.header.size())
            throw std::runtime_error("csv: ragged row in " + path);
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("csv: cannot open " + path + " for writing");
    f.precision(17);
    for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
    f << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
        f << "\n";
    }
}

/// Load series from CSV. Expected columns: optional series_id, optional t,
/// a `y` target column and optional feature columns f_1..f_d. The target
/// becomes channel 0; features are appended in header order.
inline std::vector<TimeSeries> load_series_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    std::size_t y_col = t.column("y");
    std::vector<std::size_t> feat_cols;
    for (std::size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i].rfind("f_", 0) == 0) feat_cols.push_back(i);
    bool has_id = t.has_column("series_id");
    bool has_t = t.has_column("t");
    std::size_t id_col = has_id ? t.column("series_id") : 0;
    std::size_t t_col = has_t ? t.column("t") : 0;

    std::map<std::string, TimeSeries> by_id;
    std::vector<std::string> order;
    for (const auto& row : t.rows) {
        std::string id = has_id ? row[id_col] : "series";
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            it = by_id.emplace(id, TimeSeries{id, {}, std::nullopt}).first;
            if (has_t) it->second.timestamps = std::vector<long>{};
            order.push_back(id);
        }
        std::vector<double> v;
        v.reserve(1 + feat_cols.size());
        v.push_back(std::stod(row[y_col]));
        for (auto c : feat_cols) v.push_back(std::stod(row[c]));
        it->second.values.push_back(std::move(v));
        if (has_t) it->second.timestamps->push_back(std::stol(row[t_col]));
    }
    std::vector<TimeSeries> out;
    for (const auto& id : order) {
        by_id[id].validate();
        out.push_back(std::move(by_id[id]));
    }
    return out;
}

}  // namespace ldlmoe
