#include "tpr/io.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <memory>
#include <sstream>
#include <unordered_map>

#ifndef TPR_VERSION
#define TPR_VERSION "0.0.0"
#endif

namespace tpr {

nlohmann::json Provenance::to_json() const {
    return {{"tool_version", tool_version},
            {"config_hash", config_hash},
            {"seed", seed},
            {"timestamp", timestamp},
            {"config", config}};
}

Provenance Provenance::from_json(const nlohmann::json& j) {
    Provenance p;
    p.tool_version = j.value("tool_version", "");
    p.config_hash = j.value("config_hash", "");
    p.seed = j.value("seed", std::uint64_t{0});
    p.timestamp = j.value("timestamp", "");
    if (j.contains("config")) p.config = j.at("config");
    return p;
}

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string timestamp_utc() {
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    if (const char* fixed = std::getenv("SOURCE_DATE_EPOCH"); fixed != nullptr && *fixed != '\0') {
        long long v = 0;
        const char* end = fixed + std::char_traits<char>::length(fixed);
        if (std::from_chars(fixed, end, v).ec == std::errc{}) now = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Provenance make_provenance(const nlohmann::json& config, std::uint64_t seed) {
    Provenance p;
    p.tool_version = TPR_VERSION;
    p.config = config;
    p.config_hash = fnv1a_hex(config.dump());
    p.seed = seed;
    p.timestamp = timestamp_utc();
    return p;
}

std::string provenance_csv_header(const Provenance& prov) {
    std::ostringstream os;
    os << "# tool_version: " << prov.tool_version << '\n'
       << "# config_hash: " << prov.config_hash << '\n'
       << "# seed: " << prov.seed << '\n'
       << "# timestamp: " << prov.timestamp << '\n'
       << "# config: " << prov.config.dump() << '\n';
    return os.str();
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_number(std::string_view field, Index row, const std::string& column) {
    if (field.empty()) throw ParseFailure(row, column, "missing value");
    if (field.front() == '+') field.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
        throw ParseFailure(row, column, "not a number: '" + std::string(field) + "'");
    }
    if (!std::isfinite(v)) throw ParseFailure(row, column, "non-finite value");
    return v;
}

}  // namespace

EmpiricalDataset parse_dataset_text(std::string_view text, const ColumnMapping& mapping) {
    if (mapping.x.empty()) throw Error(ErrorKind::ConfigInvalid, "no regressor columns named");
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
    std::vector<std::string_view> lines;
    {
        std::size_t start = 0;
        while (start <= text.size()) {
            const std::size_t nl = text.find('\n', start);
            std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
            if (!trim(line).empty() && trim(line).front() != '#') lines.push_back(line);
            if (nl == std::string_view::npos) break;
            start = nl + 1;
        }
    }
    if (lines.empty()) throw Error(ErrorKind::TooFewRows, "no header row");
    const std::vector<std::string_view> header = split_fields(lines.front());
    std::unordered_map<std::string, std::size_t> where;
    for (std::size_t i = 0; i < header.size(); ++i) where.emplace(std::string(header[i]), i);
    auto locate = [&](const std::string& name) {
        const auto it = where.find(name);
        if (it == where.end()) throw Error(ErrorKind::MissingColumn, "column '" + name + "' not in header");
        return it->second;
    };

    const std::size_t y_col = locate(mapping.y);
    const std::size_t q_col = locate(mapping.q);
    std::vector<std::size_t> x_cols, phi_cols;
    for (const auto& name : mapping.x) x_cols.push_back(locate(name));
    for (const auto& name : mapping.u_phi) phi_cols.push_back(locate(name));
    const Index d = static_cast<Index>(phi_cols.size());
    const bool has_date = !mapping.date.empty();
    const std::size_t date_col = has_date ? locate(mapping.date) : 0;

    const Index rows = static_cast<Index>(lines.size()) - 1;
    const Index p = static_cast<Index>(x_cols.size());
    Vector y(std::max<Index>(rows, 0)), q(std::max<Index>(rows, 0));
    Matrix x(std::max<Index>(rows, 0), p);
    Matrix u(std::max<Index>(rows, 0), d);
    std::vector<std::string> dates;
    for (Index r = 0; r < rows; ++r) {
        const auto fields = split_fields(lines[static_cast<std::size_t>(r) + 1]);
        const Index row = r + 1;
        auto field = [&](std::size_t col, const std::string& name) {
            if (col >= fields.size()) throw ParseFailure(row, name, "missing value");
            return fields[col];
        };
        y(r) = parse_number(field(y_col, mapping.y), row, mapping.y);
        q(r) = parse_number(field(q_col, mapping.q), row, mapping.q);
        for (Index j = 0; j < p; ++j) {
            x(r, j) = parse_number(field(x_cols[static_cast<std::size_t>(j)], mapping.x[static_cast<std::size_t>(j)]),
                                   row, mapping.x[static_cast<std::size_t>(j)]);
        }
        for (Index j = 0; j < d; ++j) {
            const auto& name = mapping.u_phi[static_cast<std::size_t>(j)];
            u(r, j) = parse_number(field(phi_cols[static_cast<std::size_t>(j)], name), row, name);
        }
        if (has_date) {
            const auto date = field(date_col, mapping.date);
            if (date.empty()) throw ParseFailure(row, mapping.date, "missing date");
            dates.emplace_back(date);
        }
    }

    const Index usable = rows - 1;
    if (usable < 30) {
        throw Error(ErrorKind::TooFewRows, std::to_string(std::max<Index>(usable, 0)) +
                                               " usable rows after lag alignment, need at least 30");
    }
    EmpiricalDataset ds;
    ds.mapping = mapping;
    ds.raw_rows = rows;
    ds.sample.y = y.tail(usable);
    ds.sample.x_lag = x.topRows(usable);
    ds.sample.q_lag = q.head(usable);
    ds.sample.has_intercept = mapping.intercept;
    ds.x_path = x;
    if (d > 0) ds.u_phi = u.bottomRows(usable);
    if (has_date) ds.dates.assign(dates.begin() + 1, dates.end());
    return ds;
}

EmpiricalDataset parse_dataset(const std::string& path, const ColumnMapping& mapping) {
    return parse_dataset_text(read_file(path), mapping);
}

ColumnMapping simulated_mapping(Index p, Index d, bool intercept) {
    ColumnMapping m;
    m.y = "y";
    m.q = "q";
    m.x.clear();
    for (Index j = 0; j < p; ++j) m.x.push_back("x" + std::to_string(j + 1));
    for (Index j = 0; j < d; ++j) m.u_phi.push_back("uphi" + std::to_string(j + 1));
    m.intercept = intercept;
    return m;
}

RegressorPath dataset_path(const EmpiricalDataset& ds, const PersistenceSpec& spec) {
    if (ds.u_phi.size() == 0) throw Error(ErrorKind::MissingExogenousDraws, "no u_phi columns mapped");
    const Index n = ds.u_phi.rows();
    const Index p = ds.x_path.cols();
    const Index d = ds.u_phi.cols();
    if (spec.p() != p || spec.d() != d) throw Error(ErrorKind::DimensionMismatch, "c/phi do not match the data");
    auto panel = std::make_shared<InnovationPanel>();
    panel->p = p;
    panel->d = d;
    panel->draws = Matrix::Zero(n, 1 + p + d);
    panel->draws.col(0) = ds.sample.y;
    panel->draws.middleCols(1, p) = ds.x_path.bottomRows(n) - ds.x_path.topRows(n);
    panel->draws.rightCols(d) = ds.u_phi;
    RegressorPath path;
    path.x = ds.x_path;
    path.rho = Matrix::Zero(n, p);
    path.spec = spec;
    path.innovations = std::move(panel);
    return path;
}

void write_simulated_csv(std::ostream& out, const SimulatedSample& sim, const Provenance& prov) {
    const Index n = sim.sample.n();
    const Index p = sim.sample.p();
    out << provenance_csv_header(prov);
    out << "t,y";
    for (Index j = 0; j < p; ++j) out << ",x" << (j + 1);
    out << ",q";
    const Index d = sim.path.innovations ? sim.path.innovations->d : 0;
    for (Index j = 0; j < d; ++j) out << ",uphi" << (j + 1);
    out << '\n';
    for (Index t = 0; t <= n; ++t) {
        out << t << ',' << (t == 0 ? std::string("0") : format_double(sim.sample.y(t - 1)));
        for (Index j = 0; j < p; ++j) out << ',' << format_double(sim.path.x(t, j));
        out << ',' << format_double(sim.q(t));
        for (Index j = 0; j < d; ++j) out << ',' << (t == 0 ? std::string("0") : format_double(sim.path.u_phi()(t - 1, j)));
        out << '\n';
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write '" + path + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorKind::IoError, "write failed for '" + path + "'");
}

}  // namespace tpr
