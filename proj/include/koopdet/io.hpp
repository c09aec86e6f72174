// Artifact serialization.
//
// Streams are CSV with a comment header carrying the schema tag and config
// hash, then `t,s0,...,s{p-1}`. Doubles are written with shortest round-trip
// encoding so write -> read -> write is lossless. Reports are line-delimited
// JSON (header object first, then one object per detection step). All writes
// go through a temp file and an atomic rename.

#ifndef KOOPDET_IO_HPP
#define KOOPDET_IO_HPP

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "koopdet/detector.hpp"
#include "koopdet/errors.hpp"
#include "koopdet/frame.hpp"

namespace koopdet {

// FNV-1a 64-bit; used to stamp artifacts with a hash of the canonical config.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[19] = "0x";
    for (int i = 15; i >= 0; --i) {
        buf[2 + (15 - i)] = "0123456789abcdef"[(h >> (4 * i)) & 0xf];
    }
    buf[18] = '\0';
    return std::string(buf);
}

// Shortest decimal encoding that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError(context + ": bad number \"" + std::string(s) + "\"");
    return v;
}

// Write-temp-then-rename so readers never observe a half-written artifact.
inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out.flush()) throw Error("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " +
                        ec.message());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("missing artifact: " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        lines.push_back(text.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

}  // namespace detail

inline void write_stream_csv(const std::filesystem::path& path, const StreamWindow& stream,
                             const std::string& schema, const std::string& config_hash) {
    std::string out;
    out.reserve(static_cast<std::size_t>(stream.size()) *
                (static_cast<std::size_t>(stream.dim()) + 1) * 20);
    out += "# schema=" + schema + " config=" + config_hash + "\n";
    out += "t";
    for (Eigen::Index s = 0; s < stream.dim(); ++s) out += ",s" + std::to_string(s);
    out += "\n";
    for (Eigen::Index i = 0; i < stream.size(); ++i) {
        out += format_double(stream.time_at(i));
        for (Eigen::Index s = 0; s < stream.dim(); ++s) {
            out += ',';
            out += format_double(stream.data()(s, i));
        }
        out += '\n';
    }
    atomic_write_text(path, out);
}

inline StreamWindow read_stream_csv(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    const auto lines = detail::split_lines(text);
    std::size_t first = 0;
    while (first < lines.size() && (lines[first].empty() || lines[first][0] == '#')) ++first;
    if (first >= lines.size() || lines[first].substr(0, 2) != "t,")
        throw ParseError(path.string() + ": missing t,s0,... header");
    const std::size_t p = detail::split_csv_line(lines[first]).size() - 1;
    ++first;

    std::vector<double> times;
    std::vector<double> values;
    for (std::size_t li = first; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        const auto cells = detail::split_csv_line(lines[li]);
        if (cells.size() != p + 1)
            throw ParseError(path.string() + ": row " + std::to_string(li + 1) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(p + 1));
        const std::string ctx = path.string() + ":" + std::to_string(li + 1);
        times.push_back(parse_double(cells[0], ctx));
        for (std::size_t c = 1; c < cells.size(); ++c)
            values.push_back(parse_double(cells[c], ctx));
    }
    if (times.size() < 2) throw ParseError(path.string() + ": needs at least 2 data rows");

    const double dt = times[1] - times[0];
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (std::abs(times[i] - (times[0] + static_cast<double>(i) * dt)) > kEquispacingTol)
            throw ParseError(path.string() + ": rows are not equispaced at index " +
                             std::to_string(i));
    }
    Eigen::MatrixXd data(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(times.size()));
    for (std::size_t i = 0; i < times.size(); ++i)
        for (std::size_t s = 0; s < p; ++s)
            data(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i)) =
                values[i * p + s];
    return StreamWindow(times[0], dt, std::move(data));
}

// Ground-truth labels: one 0/1 cell per sensor per sample.
inline void write_labels_csv(const std::filesystem::path& path, const std::vector<double>& times,
                             int sensor_count, const std::vector<std::vector<int>>& attacked,
                             const std::string& config_hash) {
    std::string out;
    out += "# schema=koopdet.labels.v1 config=" + config_hash + "\n";
    out += "t";
    for (int s = 0; s < sensor_count; ++s) out += ",s" + std::to_string(s);
    out += "\n";
    for (std::size_t i = 0; i < times.size(); ++i) {
        out += format_double(times[i]);
        std::vector<char> row(static_cast<std::size_t>(sensor_count), '0');
        for (int s : attacked[i]) row[static_cast<std::size_t>(s)] = '1';
        for (int s = 0; s < sensor_count; ++s) {
            out += ',';
            out += row[static_cast<std::size_t>(s)];
        }
        out += '\n';
    }
    atomic_write_text(path, out);
}

struct LabelTable {
    std::vector<double> times;
    std::vector<std::vector<int>> attacked;  // ascending sensor indices per sample
    int sensor_count = 0;
};

inline LabelTable read_labels_csv(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    const auto lines = detail::split_lines(text);
    std::size_t first = 0;
    while (first < lines.size() && (lines[first].empty() || lines[first][0] == '#')) ++first;
    if (first >= lines.size() || lines[first].substr(0, 2) != "t,")
        throw ParseError(path.string() + ": missing t,s0,... header");
    LabelTable table;
    table.sensor_count = static_cast<int>(detail::split_csv_line(lines[first]).size()) - 1;
    for (std::size_t li = first + 1; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        const auto cells = detail::split_csv_line(lines[li]);
        if (cells.size() != static_cast<std::size_t>(table.sensor_count) + 1)
            throw ParseError(path.string() + ": row " + std::to_string(li + 1) +
                             " has wrong cell count");
        table.times.push_back(parse_double(cells[0], path.string()));
        std::vector<int> set;
        for (int s = 0; s < table.sensor_count; ++s) {
            const auto& cell = cells[static_cast<std::size_t>(s) + 1];
            if (cell == "1")
                set.push_back(s);
            else if (cell != "0")
                throw ParseError(path.string() + ": label cells must be 0 or 1");
        }
        table.attacked.push_back(std::move(set));
    }
    return table;
}

inline nlohmann::json report_to_json(const DetectionReport& rep) {
    nlohmann::json j;
    j["step"] = rep.step;
    j["t"] = rep.t;
    j["attack"] = rep.attack;
    j["separation"] = rep.separation;
    j["labels"] = rep.labels;
    j["flagged"] = rep.flagged;
    j["modes_residual"] = rep.modes_residual;
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < rep.mode_rows.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index m = 0; m < rep.mode_rows.cols(); ++m)
            row.push_back(rep.mode_rows(i, m));
        rows.push_back(std::move(row));
    }
    j["mode_spread"] = std::move(rows);
    return j;
}

inline DetectionReport report_from_json(const nlohmann::json& j) {
    DetectionReport rep;
    rep.step = j.at("step").get<long>();
    rep.t = j.at("t").get<double>();
    rep.attack = j.at("attack").get<bool>();
    rep.separation = j.at("separation").get<double>();
    rep.labels = j.at("labels").get<std::vector<int>>();
    rep.flagged = j.at("flagged").get<std::vector<int>>();
    rep.modes_residual = j.at("modes_residual").get<double>();
    const auto& rows = j.at("mode_spread");
    if (!rows.empty()) {
        rep.mode_rows.resize(static_cast<Eigen::Index>(rows.size()),
                             static_cast<Eigen::Index>(rows[0].size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t m = 0; m < rows[i].size(); ++m)
                rep.mode_rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) =
                    rows[i][m].get<double>();
    }
    return rep;
}

inline void write_reports_jsonl(const std::filesystem::path& path,
                                const std::vector<DetectionReport>& reports,
                                const std::string& config_hash) {
    std::string out;
    nlohmann::json header = {{"schema", "koopdet.reports.v1"}, {"config", config_hash}};
    out += header.dump();
    out += '\n';
    for (const auto& rep : reports) {
        out += report_to_json(rep).dump();
        out += '\n';
    }
    atomic_write_text(path, out);
}

inline std::vector<DetectionReport> read_reports_jsonl(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    const auto lines = detail::split_lines(text);
    std::vector<DetectionReport> reports;
    bool seen_header = false;
    for (const auto& line : lines) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
        if (!seen_header) {
            seen_header = true;
            if (!j.contains("schema"))
                throw ParseError(path.string() + ": first line must be the schema header");
            continue;
        }
        reports.push_back(report_from_json(j));
    }
    return reports;
}

}  // namespace koopdet

#endif  // KOOPDET_IO_HPP
