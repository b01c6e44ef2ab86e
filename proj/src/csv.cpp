#include "eetab/csv.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ee {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
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
            out.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(std::move(field));
    return out;
}

bool is_integer_label(const std::string& s) {
    if (s.empty()) return false;
    std::size_t i = (s[0] == '-') ? 1 : 0;
    if (i == s.size()) return false;
    for (; i < s.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

// Sorted raw labels; numeric labels sort by value so ordinal codes keep their
// natural order for the tree methods.
std::vector<std::string> sorted_labels(const std::map<std::string, bool>& seen) {
    std::vector<std::string> labels;
    labels.reserve(seen.size());
    bool all_numeric = true;
    for (const auto& [k, _] : seen) {
        labels.push_back(k);
        all_numeric = all_numeric && is_integer_label(k);
    }
    if (all_numeric) {
        std::sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
            return std::stoll(a) < std::stoll(b);
        });
    } else {
        std::sort(labels.begin(), labels.end());
    }
    return labels;
}

std::size_t default_embedding_dim(const std::string& feature, std::size_t m) {
    static const std::map<std::string, std::size_t> defaults = {
        {"store", 10}, {"day_of_week", 6}, {"day", 10}, {"month", 6},
        {"year", 2},   {"promo", 1},       {"state", 6}};
    const auto it = defaults.find(feature);
    const std::size_t want = it != defaults.end() ? it->second : 10;
    if (m < 2) return 1;
    return std::clamp<std::size_t>(want, 1, m - 1);
}

} // namespace

std::int32_t parse_iso_date(const std::string& s) {
    int y = 0, m = 0, d = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2d", &y, &m, &d) != 3 || s.size() != 10 ||
        s[4] != '-' || s[7] != '-')
        throw std::invalid_argument("bad ISO date: '" + s + "'");
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{unsigned(m)},
                                          std::chrono::day{unsigned(d)}};
    if (!ymd.ok()) throw std::invalid_argument("invalid calendar date: '" + s + "'");
    return static_cast<std::int32_t>(std::chrono::sys_days{ymd}.time_since_epoch().count());
}

std::string iso_date(std::int32_t days) {
    const std::chrono::sys_days sd{std::chrono::days{days}};
    const std::chrono::year_month_day ymd{sd};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()));
    return buf;
}

Dataset build_dataset(const std::vector<RawRecord>& records, bool with_promo, bool with_state) {
    if (records.empty()) throw std::runtime_error("build_dataset: no usable rows");

    // Schema order mirrors the feature table: store, calendar features, promo, state.
    std::vector<std::string> names = {"store", "day_of_week", "day", "month", "year"};
    if (with_promo) names.push_back("promo");
    if (with_state) names.push_back("state");
    const std::size_t nf = names.size();

    std::vector<std::vector<std::string>> values(records.size());
    std::vector<std::map<std::string, bool>> seen(nf);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (!(r.sales > 0.0)) throw std::runtime_error("build_dataset: nonpositive sales");
        const std::chrono::sys_days sd{std::chrono::days{r.date}};
        const std::chrono::year_month_day ymd{sd};
        const unsigned dow = std::chrono::weekday{sd}.iso_encoding(); // Mon=1 .. Sun=7

        auto& v = values[i];
        v.resize(nf);
        v[0] = r.store;
        v[1] = std::to_string(dow);
        v[2] = std::to_string(unsigned(ymd.day()));
        v[3] = std::to_string(unsigned(ymd.month()));
        v[4] = std::to_string(int(ymd.year()));
        std::size_t next = 5;
        if (with_promo) v[next++] = r.promo;
        if (with_state) v[next++] = r.state;
        for (std::size_t j = 0; j < nf; ++j) {
            if (v[j].empty())
                throw std::runtime_error("build_dataset: missing value for " + names[j]);
            seen[j][v[j]] = true;
        }
    }

    FeatureSchema schema;
    std::vector<std::unordered_map<std::string, std::int32_t>> dict(nf);
    for (std::size_t j = 0; j < nf; ++j) {
        FeatureSpec f;
        f.name = names[j];
        f.labels = sorted_labels(seen[j]);
        f.cardinality = f.labels.size();
        f.kind = (f.cardinality <= 2 && f.name == "promo") ? FeatureKind::binary
                                                           : FeatureKind::categorical;
        f.embedding_dim = default_embedding_dim(f.name, f.cardinality);
        for (std::size_t i = 0; i < f.labels.size(); ++i)
            dict[j][f.labels[i]] = static_cast<std::int32_t>(i);
        schema.features.push_back(std::move(f));
    }
    schema.validate();

    std::vector<std::int32_t> xs;
    xs.reserve(records.size() * nf);
    std::vector<double> ys;
    ys.reserve(records.size());
    std::vector<std::int32_t> dates;
    dates.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (std::size_t j = 0; j < nf; ++j) xs.push_back(dict[j].at(values[i][j]));
        ys.push_back(records[i].sales);
        dates.push_back(records[i].date);
    }
    return Dataset(std::move(schema), std::move(xs), std::move(ys), std::move(dates));
}

Dataset ingest_csv(const std::string& path, const ColumnMap& map) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ingest_csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("ingest_csv: empty file " + path);
    const auto header = split_csv_line(line);

    const auto col = [&](const std::string& name, bool required) -> long {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<long>(i);
        if (required)
            throw std::runtime_error("ingest_csv: missing column '" + name + "' in " + path);
        return -1;
    };
    const long c_store = col(map.store, true);
    const long c_date = col(map.date, true);
    const long c_sales = col(map.sales, true);
    const long c_promo = map.promo.empty() ? -1 : col(map.promo, false);
    const long c_state = map.state.empty() ? -1 : col(map.state, false);

    std::vector<RawRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const auto fields = split_csv_line(line);
        const auto field = [&](long c) -> const std::string& {
            if (c < 0 || static_cast<std::size_t>(c) >= fields.size())
                throw std::runtime_error("ingest_csv: row " + std::to_string(line_no) +
                                         ": too few fields");
            return fields[static_cast<std::size_t>(c)];
        };

        const std::string& sales_s = field(c_sales);
        double sales = 0.0;
        const auto res = std::from_chars(sales_s.data(), sales_s.data() + sales_s.size(), sales);
        if (res.ec != std::errc{} || res.ptr != sales_s.data() + sales_s.size())
            throw std::runtime_error("ingest_csv: row " + std::to_string(line_no) +
                                     ": bad sales value '" + sales_s + "'");
        if (sales <= 0.0) continue; // closed-store rows are dropped

        RawRecord r;
        r.sales = sales;
        try {
            r.date = parse_iso_date(field(c_date));
            r.store = field(c_store);
            if (c_promo >= 0) r.promo = field(c_promo);
            if (c_state >= 0) r.state = field(c_state);
            if (r.store.empty()) throw std::invalid_argument("missing store value");
            if (c_promo >= 0 && r.promo.empty())
                throw std::invalid_argument("missing promo value");
            if (c_state >= 0 && r.state.empty())
                throw std::invalid_argument("missing state value");
        } catch (const std::exception& e) {
            throw std::runtime_error("ingest_csv: row " + std::to_string(line_no) + ": " +
                                     e.what());
        }
        records.push_back(std::move(r));
    }
    if (records.empty()) throw std::runtime_error("ingest_csv: no usable rows in " + path);
    return build_dataset(records, c_promo >= 0, c_state >= 0);
}

namespace {

constexpr char kCacheMagic[8] = {'E', 'E', 'T', 'A', 'B', 'D', 'S', '1'};

template <typename T> void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T> T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw std::runtime_error("dataset cache: truncated file");
    return v;
}
void put_string(std::ostream& os, const std::string& s) {
    put<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string get_string(std::istream& is) {
    const auto n = get<std::uint64_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error("dataset cache: truncated string");
    return s;
}

} // namespace

void save_cache(const Dataset& d, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_cache: cannot open " + path);
    os.write(kCacheMagic, sizeof kCacheMagic);
    put<std::uint64_t>(os, d.feature_count());
    put<std::uint64_t>(os, d.size());
    for (const auto& f : d.schema().features) {
        put_string(os, f.name);
        put<std::uint8_t>(os, f.kind == FeatureKind::binary ? 1 : 0);
        put<std::uint64_t>(os, f.cardinality);
        put<std::uint64_t>(os, f.embedding_dim);
        put<std::uint64_t>(os, f.labels.size());
        for (const auto& l : f.labels) put_string(os, l);
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto x = d.x(i);
        os.write(reinterpret_cast<const char*>(x.data()),
                 static_cast<std::streamsize>(x.size_bytes()));
    }
    os.write(reinterpret_cast<const char*>(d.targets().data()),
             static_cast<std::streamsize>(d.size() * sizeof(double)));
    for (std::size_t i = 0; i < d.size(); ++i) put<std::int32_t>(os, d.date(i));
    if (!os) throw std::runtime_error("save_cache: write failed for " + path);
}

Dataset load_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_cache: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kCacheMagic, sizeof magic) != 0)
        throw std::runtime_error("load_cache: bad magic / unsupported version in " + path);
    const auto nf = get<std::uint64_t>(is);
    const auto n = get<std::uint64_t>(is);
    FeatureSchema schema;
    for (std::uint64_t j = 0; j < nf; ++j) {
        FeatureSpec f;
        f.name = get_string(is);
        f.kind = get<std::uint8_t>(is) ? FeatureKind::binary : FeatureKind::categorical;
        f.cardinality = get<std::uint64_t>(is);
        f.embedding_dim = get<std::uint64_t>(is);
        const auto nl = get<std::uint64_t>(is);
        for (std::uint64_t l = 0; l < nl; ++l) f.labels.push_back(get_string(is));
        schema.features.push_back(std::move(f));
    }
    std::vector<std::int32_t> xs(n * nf);
    is.read(reinterpret_cast<char*>(xs.data()), static_cast<std::streamsize>(xs.size() * 4));
    std::vector<double> ys(n);
    is.read(reinterpret_cast<char*>(ys.data()), static_cast<std::streamsize>(n * 8));
    std::vector<std::int32_t> dates(n);
    is.read(reinterpret_cast<char*>(dates.data()), static_cast<std::streamsize>(n * 4));
    if (!is) throw std::runtime_error("load_cache: truncated file " + path);
    return Dataset(std::move(schema), std::move(xs), std::move(ys), std::move(dates));
}

void write_csv(const Dataset& d, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_csv: cannot open " + path);
    const auto& schema = d.schema();
    const auto store_i = schema.feature_index("store");
    const auto promo_i = schema.feature_index("promo");
    const auto state_i = schema.feature_index("state");
    if (!store_i) throw std::runtime_error("write_csv: schema has no store feature");

    os << "Store,Date,Sales";
    if (promo_i) os << ",Promo";
    if (state_i) os << ",State";
    os << "\n";
    char buf[32];
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", d.target(i));
        os << schema.features[*store_i].labels[d.value(i, *store_i)] << ','
           << iso_date(d.date(i)) << ',' << buf;
        if (promo_i) os << ',' << schema.features[*promo_i].labels[d.value(i, *promo_i)];
        if (state_i) os << ',' << schema.features[*state_i].labels[d.value(i, *state_i)];
        os << "\n";
    }
    if (!os) throw std::runtime_error("write_csv: write failed for " + path);
}

} // namespace ee
