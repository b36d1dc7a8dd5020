#include "fird/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "fird/error.hpp"

namespace fird {

namespace {

FeatureKind parse_kind(const std::string& kind) {
    if (kind == "categorical") return FeatureKind::categorical;
    if (kind == "continuous") return FeatureKind::continuous;
    throw InputError("schema: unknown feature kind '" + kind + "'");
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

std::optional<double> parse_number(std::string_view cell) {
    cell = trim(cell);
    if (cell.empty() || cell == "nan" || cell == "NaN" || cell == "NA") {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double value = 0.0;
    if (cell.front() == '+') cell.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) return std::nullopt;
    return value;
}

// Reads one CSV record, which may span several physical lines inside quotes.
bool read_record(std::istream& in, std::string& record, std::size_t& line_no) {
    record.clear();
    std::string line;
    bool in_quotes = false;
    bool any = false;
    while (std::getline(in, line)) {
        ++line_no;
        any = true;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!record.empty() || in_quotes) record.push_back('\n');
        record += line;
        for (char c : line) {
            if (c == '"') in_quotes = !in_quotes;
        }
        if (!in_quotes) return true;
    }
    if (in_quotes) throw InputError("csv: unterminated quoted field at line " + std::to_string(line_no));
    return any;
}

std::string bin_label(std::size_t bin) { return "q" + std::to_string(bin); }

// Categorical cells of feature `spec`, with continuous columns binned to labels.
std::vector<std::string> categorical_cells(const Column& column, const FeatureSpec& spec) {
    if (column.kind == FeatureKind::categorical) {
        if (!spec.values) return column.text;
        std::unordered_set<std::string> allowed(spec.values->begin(), spec.values->end());
        std::vector<std::string> out;
        out.reserve(column.text.size());
        for (const auto& v : column.text) out.push_back(allowed.count(v) ? v : std::string(kOtherValue));
        return out;
    }
    auto binned = bin_continuous(column.numeric, spec.bins);
    std::vector<std::string> out;
    out.reserve(binned.bins.size());
    for (std::size_t n = 0; n < binned.bins.size(); ++n) {
        bool nan = binned.has_nan_bin && std::isnan(column.numeric[n]);
        out.push_back(nan ? std::string(kNanBin) : bin_label(static_cast<std::size_t>(binned.bins[n])));
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema

FeatureSchema FeatureSchema::from_json(const nlohmann::json& doc) {
    FeatureSchema schema;
    try {
        for (const auto& f : doc.at("features")) {
            FeatureSpec spec;
            spec.name = f.at("name").get<std::string>();
            spec.kind = parse_kind(f.value("kind", std::string("categorical")));
            spec.bins = f.value("bins", 10);
            if (f.contains("values")) spec.values = f.at("values").get<std::vector<std::string>>();
            schema.features.push_back(std::move(spec));
        }
        if (doc.contains("label") && !doc.at("label").is_null()) {
            schema.label = doc.at("label").get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("schema: ") + e.what());
    }
    schema.validate();
    return schema;
}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open schema file: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("schema " + path.string() + ": " + e.what());
    }
    return from_json(doc);
}

nlohmann::json FeatureSchema::to_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& f : features) {
        nlohmann::json entry = {{"name", f.name},
                                {"kind", f.kind == FeatureKind::categorical ? "categorical" : "continuous"}};
        if (f.kind == FeatureKind::continuous) entry["bins"] = f.bins;
        if (f.values) entry["values"] = *f.values;
        list.push_back(std::move(entry));
    }
    nlohmann::json doc = {{"features", std::move(list)}};
    if (label) doc["label"] = *label;
    return doc;
}

void FeatureSchema::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write schema file: " + path.string());
    out << to_json().dump(2) << '\n';
}

void FeatureSchema::validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& f : features) {
        if (!seen.insert(f.name).second) throw InputError("schema: duplicate feature '" + f.name + "'");
        if (f.kind == FeatureKind::continuous && f.bins < 2) {
            throw InputError("schema: feature '" + f.name + "' needs bins >= 2");
        }
    }
    if (label && seen.count(*label)) throw InputError("schema: label '" + *label + "' is also a feature");
}

FeatureSchema categorical_schema(const std::vector<std::string>& names, std::optional<std::string> label) {
    FeatureSchema schema;
    for (const auto& n : names) schema.features.push_back({n, FeatureKind::categorical, 10, std::nullopt});
    schema.label = std::move(label);
    return schema;
}

// ---------------------------------------------------------------------------
// Tables

const Column* RawTable::find(std::string_view name) const {
    for (const auto& c : columns) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

const Column& RawTable::column(std::string_view name) const {
    if (const auto* c = find(name)) return *c;
    throw InputError("table has no column '" + std::string(name) + "'");
}

EncodedDataset::EncodedDataset(std::vector<std::string> names, std::vector<std::vector<std::string>> vocab,
                               std::vector<std::int32_t> codes)
    : names_(std::move(names)), vocab_(std::move(vocab)), codes_(std::move(codes)) {
    const std::size_t m = names_.size();
    if (vocab_.size() != m) throw DimensionError("dataset: vocabulary count does not match feature count");
    if (m == 0) {
        if (!codes_.empty()) throw DimensionError("dataset: codes without features");
        return;
    }
    if (codes_.size() % m != 0) throw DimensionError("dataset: code matrix is ragged");
    n_rows_ = codes_.size() / m;
    dims_.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
        if (vocab_[j].empty()) throw DimensionError("dataset: feature '" + names_[j] + "' has empty vocabulary");
        dims_[j] = vocab_[j].size();
    }
    for (std::size_t n = 0; n < n_rows_; ++n) {
        for (std::size_t j = 0; j < m; ++j) {
            auto c = codes_[n * m + j];
            if (c == kUnknownCode) {
                has_unknown_ = true;
            } else if (c < 0 || static_cast<std::size_t>(c) >= dims_[j]) {
                throw DimensionError("dataset: code out of range at row " + std::to_string(n) + ", feature " +
                                     names_[j]);
            }
        }
    }
}

EncodedDataset EncodedDataset::select_rows(std::span<const std::size_t> order) const {
    const std::size_t m = n_features();
    std::vector<std::int32_t> codes;
    codes.reserve(order.size() * m);
    for (auto n : order) {
        auto r = row(n);
        codes.insert(codes.end(), r.begin(), r.end());
    }
    return EncodedDataset(names_, vocab_, std::move(codes));
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::string> split_csv_record(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

RawTable read_csv(std::istream& in, const FeatureSchema& schema, const std::string& source) {
    schema.validate();
    std::size_t line_no = 0;
    std::string record;
    if (!read_record(in, record, line_no)) throw InputError(source + ": missing header row");
    if (record.size() >= 3 && record.compare(0, 3, "\xEF\xBB\xBF") == 0) record.erase(0, 3);
    auto header = split_csv_record(record);

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!index.emplace(header[i], i).second) {
            throw InputError(source + ": duplicate column '" + header[i] + "' in header");
        }
    }

    RawTable table;
    std::vector<std::size_t> source_index;
    auto add_column = [&](const std::string& name, FeatureKind kind) {
        auto it = index.find(name);
        if (it == index.end()) throw InputError(source + ": header has no column '" + name + "'");
        table.columns.push_back(Column{name, kind, {}, {}});
        source_index.push_back(it->second);
    };
    for (const auto& f : schema.features) add_column(f.name, f.kind);
    if (schema.label) add_column(*schema.label, FeatureKind::categorical);

    while (read_record(in, record, line_no)) {
        if (record.empty()) continue;
        auto fields = split_csv_record(record);
        if (fields.size() != header.size()) {
            throw InputError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                             " fields, expected " + std::to_string(header.size()));
        }
        for (std::size_t c = 0; c < table.columns.size(); ++c) {
            auto& col = table.columns[c];
            auto& cell = fields[source_index[c]];
            if (col.kind == FeatureKind::categorical) {
                col.text.push_back(std::move(cell));
            } else {
                auto value = parse_number(cell);
                if (!value) {
                    throw InputError(source + ": line " + std::to_string(line_no) + ", column '" + col.name +
                                     "': not a number: '" + cell + "'");
                }
                col.numeric.push_back(*value);
            }
        }
        ++table.n_rows;
    }
    return table;
}

RawTable load_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open input file: " + path.string());
    return read_csv(in, schema, path.string());
}

void write_csv(const std::filesystem::path& path, const EncodedDataset& data,
               const std::optional<std::pair<std::string, std::vector<std::string>>>& label) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write file: " + path.string());
    const std::size_t m = data.n_features();
    for (std::size_t j = 0; j < m; ++j) out << (j ? "," : "") << csv_escape(data.names()[j]);
    if (label) out << (m ? "," : "") << csv_escape(label->first);
    out << '\n';
    for (std::size_t n = 0; n < data.n_rows(); ++n) {
        for (std::size_t j = 0; j < m; ++j) {
            auto c = data.code(n, j);
            out << (j ? "," : "") << (c == kUnknownCode ? std::string() : csv_escape(data.vocab(j)[c]));
        }
        if (label) out << (m ? "," : "") << csv_escape(label->second.at(n));
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Binning and encoding

BinnedColumn bin_continuous(std::span<const double> values, int bin_count) {
    if (bin_count < 2) throw InputError("bin_continuous: bin_count must be >= 2");
    std::vector<double> finite;
    finite.reserve(values.size());
    bool any_nan = false;
    for (double v : values) {
        if (std::isnan(v)) {
            any_nan = true;
        } else {
            finite.push_back(v);
        }
    }
    if (finite.empty()) throw InputError("bin_continuous: column has no finite values");
    std::sort(finite.begin(), finite.end());

    const std::size_t n = finite.size();
    BinnedColumn out;
    for (int k = 1; k < bin_count; ++k) {
        double edge = finite[static_cast<std::size_t>(k) * n / static_cast<std::size_t>(bin_count)];
        // An edge at the minimum would leave bin 0 empty.
        if (edge <= finite.front()) continue;
        if (!out.edges.empty() && edge <= out.edges.back()) continue;
        out.edges.push_back(edge);
    }
    const std::size_t finite_bins = out.edges.size() + 1;
    out.has_nan_bin = any_nan;
    out.n_bins = finite_bins + (any_nan ? 1 : 0);
    out.bins.reserve(values.size());
    for (double v : values) {
        if (std::isnan(v)) {
            out.bins.push_back(static_cast<std::int32_t>(finite_bins));
        } else {
            auto it = std::upper_bound(out.edges.begin(), out.edges.end(), v);
            out.bins.push_back(static_cast<std::int32_t>(it - out.edges.begin()));
        }
    }
    return out;
}

EncodedDataset encode(const RawTable& table, const FeatureSchema& schema) {
    const std::size_t m = schema.features.size();
    std::vector<std::string> names;
    std::vector<std::vector<std::string>> vocab(m);
    std::vector<std::int32_t> codes(table.n_rows * m);
    for (std::size_t j = 0; j < m; ++j) {
        const auto& spec = schema.features[j];
        names.push_back(spec.name);
        const auto& column = table.column(spec.name);
        if (column.size() != table.n_rows) throw DimensionError("column '" + spec.name + "' is ragged");
        auto cells = categorical_cells(column, spec);
        std::unordered_map<std::string, std::int32_t> lookup;
        if (spec.values && spec.kind == FeatureKind::categorical) {
            for (const auto& v : *spec.values) {
                if (lookup.emplace(v, static_cast<std::int32_t>(vocab[j].size())).second) vocab[j].push_back(v);
            }
        }
        for (std::size_t n = 0; n < table.n_rows; ++n) {
            auto [it, inserted] = lookup.emplace(cells[n], static_cast<std::int32_t>(vocab[j].size()));
            if (inserted) vocab[j].push_back(cells[n]);
            codes[n * m + j] = it->second;
        }
        if (vocab[j].empty()) vocab[j].push_back(std::string(kOtherValue));
    }
    return EncodedDataset(std::move(names), std::move(vocab), std::move(codes));
}

EncodedDataset encode_with_vocab(const RawTable& table, const FeatureSchema& schema,
                                 const std::vector<std::vector<std::string>>& vocab) {
    const std::size_t m = schema.features.size();
    if (vocab.size() != m) {
        throw DimensionError("model has " + std::to_string(vocab.size()) + " features, schema has " +
                             std::to_string(m));
    }
    std::vector<std::string> names;
    std::vector<std::int32_t> codes(table.n_rows * m);
    for (std::size_t j = 0; j < m; ++j) {
        const auto& spec = schema.features[j];
        names.push_back(spec.name);
        auto cells = categorical_cells(table.column(spec.name), spec);
        std::unordered_map<std::string, std::int32_t> lookup;
        for (std::size_t i = 0; i < vocab[j].size(); ++i) lookup.emplace(vocab[j][i], static_cast<std::int32_t>(i));
        for (std::size_t n = 0; n < table.n_rows; ++n) {
            auto it = lookup.find(cells[n]);
            codes[n * m + j] = it == lookup.end() ? kUnknownCode : it->second;
        }
    }
    return EncodedDataset(std::move(names), vocab, std::move(codes));
}

std::vector<std::vector<std::string>> decode(const EncodedDataset& data) {
    std::vector<std::vector<std::string>> out(data.n_features());
    for (std::size_t j = 0; j < data.n_features(); ++j) {
        out[j].reserve(data.n_rows());
        for (std::size_t n = 0; n < data.n_rows(); ++n) {
            auto c = data.code(n, j);
            out[j].push_back(c == kUnknownCode ? std::string() : data.vocab(j)[c]);
        }
    }
    return out;
}

std::optional<std::vector<std::string>> label_values(const RawTable& table, const FeatureSchema& schema) {
    if (!schema.label) return std::nullopt;
    return table.column(*schema.label).text;
}

}  // namespace fird
