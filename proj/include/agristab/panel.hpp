#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace agristab {

enum class ColumnKind { Numeric, Categorical };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    bool monetary = false;                 // numeric columns scaled by deflate()
    std::vector<std::string> levels;       // closed level list, categorical only
};

struct PanelSchema {
    std::vector<ColumnSpec> columns;

    std::vector<std::size_t> numeric_indices() const;
    std::vector<std::size_t> categorical_indices() const;
    const ColumnSpec* find(const std::string& name) const;
};

// One farm-year observation. Covariate/category slots follow schema order:
// covariates[k] is the k-th numeric column, categories[k] the level index of
// the k-th categorical column.
struct FarmYearRecord {
    std::string farm_id;
    int year = 0;
    double weight = 1.0;
    double income = 0.0;                   // deflated value added; may be negative
    std::vector<double> covariates;
    std::vector<int> categories;
};

struct FarmPanel {
    PanelSchema schema;
    std::vector<FarmYearRecord> records;   // sorted by (farm_id, year)
    int min_year = 0;
    int max_year = 0;

    std::size_t n_records() const { return records.size(); }
    // Contiguous [first, last) record range per farm, in farm_id order.
    std::vector<std::pair<std::size_t, std::size_t>> farm_ranges() const;
    void recompute_year_range();
    void validate() const;                 // throws on invariant violation
};

struct PriceIndex {
    std::map<int, double> by_year;         // base-100, all values > 0
    double at(int year) const;             // throws naming the year if absent
};

PriceIndex load_price_index(const std::string& path);

// CSV layout: farm_id,year[,weight],income,<schema columns...>.
// The weight column is optional and defaults to 1.
FarmPanel load_panel(const std::string& path, const PanelSchema& schema);
void write_panel(const std::string& path, const FarmPanel& panel);

// Scales income and monetary covariates by 100/index(year).
FarmPanel deflate(const FarmPanel& panel, const PriceIndex& index);

struct FilterResult {
    FarmPanel panel;
    std::size_t dropped = 0;
};

// Drops farm-years whose rolling reference income (mean of the previous
// `window` incomes) is undefined or <= 0.
FilterResult filter_positive_reference(const FarmPanel& panel, int window);

// Influence cut-off 4/(n-k-1); requires n > k+1.
double cook_cutoff(std::size_t n_obs, std::size_t n_regressors);

struct SplitResult {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Stratified on zero/non-zero label. Train gets round(frac*n) rows with the
// zero share preserved within one observation; train/test partition the input.
SplitResult stratified_split(const std::vector<double>& labels, double frac,
                             std::uint64_t seed);

// Stratified k-fold assignment (fold id per row), same stratification rule.
std::vector<int> stratified_folds(const std::vector<double>& labels, int folds,
                                  std::uint64_t seed);

} // namespace agristab
