#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace fird {

enum class FeatureKind { categorical, continuous };

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::categorical;
    int bins = 10;  // continuous only
    // Categorical only: fixed vocabulary; other values collapse onto kOtherValue.
    std::optional<std::vector<std::string>> values;
};

struct FeatureSchema {
    std::vector<FeatureSpec> features;
    std::optional<std::string> label;

    static FeatureSchema from_json(const nlohmann::json& doc);
    static FeatureSchema load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    void save(const std::filesystem::path& path) const;

    /// Throws InputError on duplicate names or bins < 2.
    void validate() const;
};

/// Every feature of `names` as a categorical feature.
FeatureSchema categorical_schema(const std::vector<std::string>& names,
                                 std::optional<std::string> label = std::nullopt);

struct Column {
    std::string name;
    FeatureKind kind = FeatureKind::categorical;
    std::vector<std::string> text;  // categorical cells
    std::vector<double> numeric;    // continuous cells, NaN for missing

    std::size_t size() const {
        return kind == FeatureKind::categorical ? text.size() : numeric.size();
    }
};

struct RawTable {
    std::vector<Column> columns;
    std::size_t n_rows = 0;

    const Column& column(std::string_view name) const;
    const Column* find(std::string_view name) const;
};

inline constexpr std::int32_t kUnknownCode = -1;
inline constexpr std::string_view kOtherValue = "__other__";
inline constexpr std::string_view kNanBin = "nan";

/// Row-major N x M matrix of vocabulary indices. Immutable after construction.
class EncodedDataset {
public:
    EncodedDataset() = default;
    EncodedDataset(std::vector<std::string> names, std::vector<std::vector<std::string>> vocab,
                   std::vector<std::int32_t> codes);

    std::size_t n_rows() const { return n_rows_; }
    std::size_t n_features() const { return names_.size(); }
    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t dim(std::size_t m) const { return dims_[m]; }
    const std::vector<std::string>& names() const { return names_; }
    const std::vector<std::string>& vocab(std::size_t m) const { return vocab_[m]; }
    const std::vector<std::vector<std::string>>& vocabularies() const { return vocab_; }

    std::int32_t code(std::size_t n, std::size_t m) const { return codes_[n * names_.size() + m]; }
    std::span<const std::int32_t> row(std::size_t n) const {
        return {codes_.data() + n * names_.size(), names_.size()};
    }
    const std::vector<std::int32_t>& codes() const { return codes_; }
    bool has_unknown() const { return has_unknown_; }

    /// Rows in `order`, vocabularies untouched.
    EncodedDataset select_rows(std::span<const std::size_t> order) const;

    friend bool operator==(const EncodedDataset&, const EncodedDataset&) = default;

private:
    std::vector<std::string> names_;
    std::vector<std::vector<std::string>> vocab_;
    std::vector<std::size_t> dims_;
    std::vector<std::int32_t> codes_;
    std::size_t n_rows_ = 0;
    bool has_unknown_ = false;
};

/// Parses RFC 4180 CSV with a header row. Columns not named by the schema are ignored.
RawTable read_csv(std::istream& in, const FeatureSchema& schema, const std::string& source = "<stream>");
RawTable load_csv(const std::filesystem::path& path, const FeatureSchema& schema);

/// Splits one CSV record; `line` must not contain the record terminator.
std::vector<std::string> split_csv_record(std::string_view line);
std::string csv_escape(std::string_view field);

struct BinnedColumn {
    std::vector<std::int32_t> bins;  // NaN cells get index n_bins - 1 when has_nan_bin
    std::size_t n_bins = 0;
    bool has_nan_bin = false;
    std::vector<double> edges;  // finite-value bin b covers [edges[b-1], edges[b])
};

/// Equal-frequency binning with merged duplicate edges.
BinnedColumn bin_continuous(std::span<const double> values, int bin_count);

/// Vocabularies in first-appearance order; the label column is not encoded.
EncodedDataset encode(const RawTable& table, const FeatureSchema& schema);

/// Encodes against a fixed vocabulary; unseen values map to kUnknownCode.
EncodedDataset encode_with_vocab(const RawTable& table, const FeatureSchema& schema,
                                 const std::vector<std::vector<std::string>>& vocab);

/// Raw cell values, column-major.
std::vector<std::vector<std::string>> decode(const EncodedDataset& data);

std::optional<std::vector<std::string>> label_values(const RawTable& table, const FeatureSchema& schema);

/// Writes the dataset through its vocabularies, with an optional trailing label column.
void write_csv(const std::filesystem::path& path, const EncodedDataset& data,
               const std::optional<std::pair<std::string, std::vector<std::string>>>& label = std::nullopt);

}  // namespace fird
