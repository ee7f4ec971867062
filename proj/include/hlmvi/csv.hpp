#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "data.hpp"

namespace hlmvi {

/// Column mapping for CSV ingestion. The group column is present iff a
/// grouped model is requested; with no group column the file loads as a
/// single group.
struct DatasetSchema {
    std::string response_col;
    std::vector<std::string> predictor_cols;
    std::string group_col;  // empty: single group
    bool intercept = true;

    void validate() const {
        if (response_col.empty()) throw domain_error("DatasetSchema: no response column");
        for (const auto& c : predictor_cols)
            if (c == response_col)
                throw domain_error("DatasetSchema: response listed among predictors");
    }
};

namespace detail {

/// One RFC-4180 record; handles quoted fields and embedded commas/quotes.
inline std::vector<std::string> split_csv_record(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

inline double parse_cell(const std::string& s, int row, const std::string& col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
        return v;
    } catch (const std::exception&) {
        throw io_error("load_csv: cannot parse cell at row " + std::to_string(row) +
                       ", column '" + col + "': '" + s + "'");
    }
}

}  // namespace detail

/// Load a CSV file (header row required) into a grouped dataset. Groups are
/// ordered by first appearance of their group-column value; an intercept
/// column is prepended when the schema requests one.
inline GroupedDataset load_csv(const std::string& path, const DatasetSchema& schema) {
    schema.validate();
    std::ifstream in(path);
    if (!in) throw io_error("load_csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw io_error("load_csv: empty file '" + path + "'");
    const auto header = detail::split_csv_record(line);
    std::map<std::string, int> col_index;
    for (std::size_t i = 0; i < header.size(); ++i)
        col_index[header[i]] = static_cast<int>(i);

    auto require = [&](const std::string& name) {
        auto it = col_index.find(name);
        if (it == col_index.end())
            throw io_error("load_csv: missing column '" + name + "' in '" + path + "'");
        return it->second;
    };
    const int y_idx = require(schema.response_col);
    std::vector<int> x_idx;
    for (const auto& c : schema.predictor_cols) x_idx.push_back(require(c));
    const int g_idx = schema.group_col.empty() ? -1 : require(schema.group_col);

    struct Raw {
        std::vector<double> y;
        std::vector<std::vector<double>> x;
    };
    std::vector<std::string> order;
    std::map<std::string, Raw> by_group;

    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto fields = detail::split_csv_record(line);
        if (fields.size() != header.size())
            throw io_error("load_csv: row " + std::to_string(row) + " has " +
                           std::to_string(fields.size()) + " fields, expected " +
                           std::to_string(header.size()));
        const std::string key = g_idx < 0 ? "all" : fields[g_idx];
        if (by_group.find(key) == by_group.end()) order.push_back(key);
        Raw& raw = by_group[key];
        raw.y.push_back(detail::parse_cell(fields[y_idx], row, schema.response_col));
        std::vector<double> xs;
        for (std::size_t j = 0; j < x_idx.size(); ++j)
            xs.push_back(
                detail::parse_cell(fields[x_idx[j]], row, schema.predictor_cols[j]));
        raw.x.push_back(std::move(xs));
    }
    if (order.empty()) throw io_error("load_csv: no data rows in '" + path + "'");

    GroupedDataset out;
    const int p_raw = static_cast<int>(schema.predictor_cols.size());
    const int p = p_raw + (schema.intercept ? 1 : 0);
    for (const auto& key : order) {
        const Raw& raw = by_group[key];
        const int n = static_cast<int>(raw.y.size());
        if (n == 0) throw io_error("load_csv: empty group '" + key + "'");
        GroupedDataset::Group g;
        g.y = Eigen::Map<const Vector>(raw.y.data(), n);
        g.X.resize(n, p);
        for (int i = 0; i < n; ++i) {
            int c = 0;
            if (schema.intercept) g.X(i, c++) = 1.0;
            for (int j = 0; j < p_raw; ++j) g.X(i, c++) = raw.x[i][j];
        }
        out.groups.push_back(std::move(g));
        out.labels.push_back(key);
    }
    out.validate();
    return out;
}

/// Writes a dataset back to CSV under the given schema. When the schema's
/// intercept flag is set, the leading all-ones column of X is assumed present
/// and is not written. Values are printed with 17 significant digits so a
/// subsequent load_csv reproduces the dataset exactly.
inline void save_csv(const std::string& path, const GroupedDataset& data,
                     const DatasetSchema& schema) {
    schema.validate();
    data.validate();
    const int p_raw = static_cast<int>(schema.predictor_cols.size());
    if (data.p() != p_raw + (schema.intercept ? 1 : 0))
        throw domain_error("save_csv: schema predictor count does not match data");
    const bool grouped = !schema.group_col.empty();
    if (grouped && static_cast<int>(data.labels.size()) != data.m())
        throw domain_error("save_csv: missing group labels");
    std::ofstream out(path);
    if (!out) throw io_error("save_csv: cannot open '" + path + "'");
    out.precision(17);
    if (grouped) out << schema.group_col << ",";
    out << schema.response_col;
    for (const auto& c : schema.predictor_cols) out << "," << c;
    out << "\n";
    for (int j = 0; j < data.m(); ++j) {
        const auto& g = data.groups[j];
        for (int i = 0; i < g.n(); ++i) {
            if (grouped) out << data.labels[j] << ",";
            out << g.y[i];
            for (int c = 0; c < p_raw; ++c)
                out << "," << g.X(i, c + (schema.intercept ? 1 : 0));
            out << "\n";
        }
    }
    if (!out) throw io_error("save_csv: write failed for '" + path + "'");
}

}  // namespace hlmvi
