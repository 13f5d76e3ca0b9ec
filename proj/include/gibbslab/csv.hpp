#pragma once

// RFC-4180 CSV with '.' decimals and 17 significant digits, the single
// results format. Rows are written whole (one write + flush each) so a
// killed run never leaves a torn line.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gibbslab/common.hpp"

namespace gibbslab {

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

// one estimator value with its full experimental context
struct ResultRow {
    std::string experiment_id;
    std::string model;
    long N = 0;
    double eps = 0;
    double s_N = 0;
    double t = 0; // -1 marks rows comparing t=1 against t=0
    std::string k; // dash-joined powers, empty when not applicable
    std::string estimator;
    double value = 0;
    double stderr_ = 0;
    long n_disorder = 0;
    long n_blocks = 0;
    uint64_t seed = 0;
};

inline const char* result_csv_header() {
    return "experiment_id,model,N,eps,s_N,t,k,estimator,value,stderr,n_disorder,n_blocks,seed";
}

inline std::string to_csv_line(const ResultRow& r) {
    std::ostringstream os;
    os << csv_quote(r.experiment_id) << ',' << csv_quote(r.model) << ',' << r.N << ','
       << format_g17(r.eps) << ',' << format_g17(r.s_N) << ',' << format_g17(r.t) << ','
       << csv_quote(r.k) << ',' << csv_quote(r.estimator) << ',' << format_g17(r.value) << ','
       << format_g17(r.stderr_) << ',' << r.n_disorder << ',' << r.n_blocks << ',' << r.seed;
    return os.str();
}

// RFC-4180 field splitter (quotes, doubled quotes, commas in quotes)
inline std::vector<std::string> parse_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline ResultRow row_from_csv_line(const std::string& line) {
    const auto f = parse_csv_line(line);
    check_arg(f.size() == 13, "results csv: malformed row (expected 13 fields)");
    ResultRow r;
    r.experiment_id = f[0];
    r.model = f[1];
    r.N = std::stol(f[2]);
    r.eps = std::stod(f[3]);
    r.s_N = std::stod(f[4]);
    r.t = std::stod(f[5]);
    r.k = f[6];
    r.estimator = f[7];
    r.value = std::stod(f[8]);
    r.stderr_ = std::stod(f[9]);
    r.n_disorder = std::stol(f[10]);
    r.n_blocks = std::stol(f[11]);
    r.seed = std::stoull(f[12]);
    return r;
}

class ResultWriter {
public:
    ResultWriter(const std::string& path, bool append) {
        out_.open(path, append ? std::ios::app : std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot open results file '" + path + "'");
        if (!append) write_line(result_csv_header());
    }

    void write_line(const std::string& line) {
        out_ << line << "\n";
        out_.flush(); // whole rows on disk even if the run dies
        if (!out_) throw std::runtime_error("write to results file failed");
    }

    void write_row(const ResultRow& r) { write_line(to_csv_line(r)); }

private:
    std::ofstream out_;
};

inline std::vector<ResultRow> read_result_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open results file '" + path + "'");
    std::string line;
    std::vector<ResultRow> rows;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first) {
            check_arg(line == result_csv_header(), "results csv: unexpected header");
            first = false;
            continue;
        }
        if (line.empty()) continue;
        rows.push_back(row_from_csv_line(line));
    }
    check_arg(!first, "results csv: empty file");
    return rows;
}

} // namespace gibbslab
