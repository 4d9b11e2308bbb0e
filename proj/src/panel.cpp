#include "agristab/panel.hpp"

#include "agristab/csv.hpp"
#include "agristab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace agristab {

std::vector<std::size_t> PanelSchema::numeric_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].kind == ColumnKind::Numeric) out.push_back(i);
    return out;
}

std::vector<std::size_t> PanelSchema::categorical_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].kind == ColumnKind::Categorical) out.push_back(i);
    return out;
}

const ColumnSpec* PanelSchema::find(const std::string& name) const {
    for (const auto& c : columns)
        if (c.name == name) return &c;
    return nullptr;
}

std::vector<std::pair<std::size_t, std::size_t>> FarmPanel::farm_ranges() const {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    std::size_t i = 0;
    while (i < records.size()) {
        std::size_t j = i + 1;
        while (j < records.size() && records[j].farm_id == records[i].farm_id) ++j;
        ranges.emplace_back(i, j);
        i = j;
    }
    return ranges;
}

void FarmPanel::recompute_year_range() {
    if (records.empty()) {
        min_year = max_year = 0;
        return;
    }
    min_year = max_year = records.front().year;
    for (const auto& r : records) {
        min_year = std::min(min_year, r.year);
        max_year = std::max(max_year, r.year);
    }
}

void FarmPanel::validate() const {
    const auto n_num = schema.numeric_indices().size();
    const auto cat_idx = schema.categorical_indices();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.weight < 0)
            throw std::runtime_error("record " + r.farm_id + "/" + std::to_string(r.year) +
                                     ": negative weight");
        if (r.covariates.size() != n_num || r.categories.size() != cat_idx.size())
            throw std::runtime_error("record " + r.farm_id + "/" + std::to_string(r.year) +
                                     ": covariate slots do not match the schema");
        for (std::size_t k = 0; k < cat_idx.size(); ++k) {
            const auto& col = schema.columns[cat_idx[k]];
            if (r.categories[k] < 0 || r.categories[k] >= static_cast<int>(col.levels.size()))
                throw std::runtime_error("record " + r.farm_id + "/" + std::to_string(r.year) +
                                         ": level index out of range for " + col.name);
        }
        if (i > 0) {
            const auto& prev = records[i - 1];
            if (prev.farm_id > r.farm_id ||
                (prev.farm_id == r.farm_id && prev.year >= r.year))
                throw std::runtime_error("panel not sorted or duplicate key at " +
                                         r.farm_id + "/" + std::to_string(r.year));
        }
    }
    int lo = 0, hi = 0;
    if (!records.empty()) {
        lo = hi = records.front().year;
        for (const auto& r : records) {
            lo = std::min(lo, r.year);
            hi = std::max(hi, r.year);
        }
    }
    if (lo != min_year || hi != max_year)
        throw std::runtime_error("panel year_range does not match the records");
}

double PriceIndex::at(int year) const {
    auto it = by_year.find(year);
    if (it == by_year.end())
        throw std::runtime_error("price index missing year " + std::to_string(year));
    return it->second;
}

PriceIndex load_price_index(const std::string& path) {
    auto table = csv::read_file(path);
    if (table.header.size() != 2 || table.header[0] != "year" || table.header[1] != "index")
        throw std::runtime_error(path + ": expected header 'year,index'");
    PriceIndex index;
    std::size_t line = 1;
    for (const auto& row : table.rows) {
        ++line;
        int year = static_cast<int>(csv::parse_long(row[0], line, "year"));
        double value = csv::parse_double(row[1], line, "index");
        if (value <= 0)
            throw std::runtime_error("price index for year " + std::to_string(year) +
                                     " must be positive");
        index.by_year[year] = value;
    }
    return index;
}

namespace {

std::vector<std::string> panel_header(const PanelSchema& schema, bool with_weight) {
    std::vector<std::string> h = {"farm_id", "year"};
    if (with_weight) h.push_back("weight");
    h.push_back("income");
    for (const auto& c : schema.columns) h.push_back(c.name);
    return h;
}

} // namespace

FarmPanel load_panel(const std::string& path, const PanelSchema& schema) {
    auto table = csv::read_file(path);
    bool with_weight = table.header.size() > 2 && table.header[2] == "weight";
    auto expected = panel_header(schema, with_weight);
    if (table.header != expected) {
        std::ostringstream msg;
        msg << path << ": header does not match the schema; expected ";
        for (std::size_t i = 0; i < expected.size(); ++i)
            msg << (i ? "," : "") << expected[i];
        throw std::runtime_error(msg.str());
    }

    FarmPanel panel;
    panel.schema = schema;
    const std::size_t base = with_weight ? 4 : 3;
    std::size_t line = 1;
    for (const auto& row : table.rows) {
        ++line;
        FarmYearRecord rec;
        rec.farm_id = row[0];
        if (rec.farm_id.empty())
            throw std::runtime_error("line " + std::to_string(line) + ": empty farm_id");
        rec.year = static_cast<int>(csv::parse_long(row[1], line, "year"));
        if (with_weight) {
            rec.weight = csv::parse_double(row[2], line, "weight");
            if (rec.weight < 0)
                throw std::runtime_error("line " + std::to_string(line) + ": negative weight");
        }
        rec.income = csv::parse_double(row[base - 1], line, "income");
        for (std::size_t k = 0; k < schema.columns.size(); ++k) {
            const auto& col = schema.columns[k];
            const std::string& cell = row[base + k];
            if (col.kind == ColumnKind::Numeric) {
                rec.covariates.push_back(csv::parse_double(cell, line, col.name));
            } else {
                auto it = std::find(col.levels.begin(), col.levels.end(), cell);
                if (it == col.levels.end())
                    throw std::runtime_error("line " + std::to_string(line) +
                                             ": unknown level '" + cell + "' for column " +
                                             col.name);
                rec.categories.push_back(static_cast<int>(it - col.levels.begin()));
            }
        }
        panel.records.push_back(std::move(rec));
    }

    std::stable_sort(panel.records.begin(), panel.records.end(),
                     [](const FarmYearRecord& a, const FarmYearRecord& b) {
                         return a.farm_id != b.farm_id ? a.farm_id < b.farm_id
                                                       : a.year < b.year;
                     });
    for (std::size_t i = 1; i < panel.records.size(); ++i) {
        if (panel.records[i].farm_id == panel.records[i - 1].farm_id &&
            panel.records[i].year == panel.records[i - 1].year)
            throw std::runtime_error("duplicate (farm_id, year) key: " +
                                     panel.records[i].farm_id + "/" +
                                     std::to_string(panel.records[i].year));
    }
    panel.recompute_year_range();
    return panel;
}

void write_panel(const std::string& path, const FarmPanel& panel) {
    csv::Table table;
    table.header = panel_header(panel.schema, true);
    for (const auto& r : panel.records) {
        std::vector<std::string> row;
        row.reserve(table.header.size());
        row.push_back(r.farm_id);
        row.push_back(std::to_string(r.year));
        row.push_back(csv::format_double(r.weight));
        row.push_back(csv::format_double(r.income));
        std::size_t num_k = 0, cat_k = 0;
        for (const auto& col : panel.schema.columns) {
            if (col.kind == ColumnKind::Numeric)
                row.push_back(csv::format_double(r.covariates[num_k++]));
            else
                row.push_back(col.levels[r.categories[cat_k++]]);
        }
        table.rows.push_back(std::move(row));
    }
    csv::write_file(path, table);
}

FarmPanel deflate(const FarmPanel& panel, const PriceIndex& index) {
    FarmPanel out = panel;
    const auto num_idx = panel.schema.numeric_indices();
    std::vector<std::size_t> monetary_slots;
    for (std::size_t k = 0; k < num_idx.size(); ++k)
        if (panel.schema.columns[num_idx[k]].monetary) monetary_slots.push_back(k);
    for (auto& r : out.records) {
        const double factor = 100.0 / index.at(r.year);
        r.income *= factor;
        for (auto slot : monetary_slots) r.covariates[slot] *= factor;
    }
    return out;
}

FilterResult filter_positive_reference(const FarmPanel& panel, int window) {
    if (window < 1) throw std::invalid_argument("filter window must be >= 1");
    FilterResult result;
    result.panel.schema = panel.schema;
    for (auto [first, last] : panel.farm_ranges()) {
        for (std::size_t i = first; i < last; ++i) {
            const int year = panel.records[i].year;
            // history must be the `window` consecutive prior years
            double sum = 0.0;
            int found = 0;
            for (std::size_t j = first; j < i; ++j) {
                const int y = panel.records[j].year;
                if (y >= year - window && y <= year - 1) {
                    sum += panel.records[j].income;
                    ++found;
                }
            }
            if (found == window && sum / window > 0.0)
                result.panel.records.push_back(panel.records[i]);
            else
                ++result.dropped;
        }
    }
    result.panel.recompute_year_range();
    return result;
}

double cook_cutoff(std::size_t n_obs, std::size_t n_regressors) {
    if (n_obs <= n_regressors + 1)
        throw std::domain_error("cook_cutoff requires n > k + 1");
    return 4.0 / static_cast<double>(n_obs - n_regressors - 1);
}

namespace {

// Largest-remainder allocation of round(frac*n) across strata.
std::vector<std::size_t> allocate_train(const std::vector<std::size_t>& stratum_sizes,
                                        double frac) {
    std::size_t n = std::accumulate(stratum_sizes.begin(), stratum_sizes.end(),
                                    static_cast<std::size_t>(0));
    const auto target = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
    std::vector<std::size_t> take(stratum_sizes.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < stratum_sizes.size(); ++s) {
        const double exact = frac * static_cast<double>(stratum_sizes[s]);
        take[s] = static_cast<std::size_t>(std::floor(exact));
        take[s] = std::min(take[s], stratum_sizes[s]);
        assigned += take[s];
        remainders.emplace_back(exact - std::floor(exact), s);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::size_t i = 0;
    while (assigned < target && i < remainders.size()) {
        auto s = remainders[i++].second;
        if (take[s] < stratum_sizes[s]) {
            ++take[s];
            ++assigned;
        }
    }
    // target can exceed sum of floors+remainder slots only via rounding of
    // full strata; clamp loop above covers that case.
    return take;
}

} // namespace

SplitResult stratified_split(const std::vector<double>& labels, double frac,
                             std::uint64_t seed) {
    if (frac <= 0.0 || frac >= 1.0)
        throw std::invalid_argument("split fraction must lie in (0,1)");
    std::vector<std::size_t> zero_idx, pos_idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (labels[i] == 0.0 ? zero_idx : pos_idx).push_back(i);

    std::vector<std::vector<std::size_t>> strata;
    if (!zero_idx.empty()) strata.push_back(std::move(zero_idx));
    if (!pos_idx.empty()) strata.push_back(std::move(pos_idx));
    for (const auto& s : strata)
        if (s.size() < 2)
            throw std::runtime_error("degenerate stratum: fewer than 2 observations");

    std::vector<std::size_t> sizes;
    for (const auto& s : strata) sizes.push_back(s.size());
    auto take = allocate_train(sizes, frac);

    SplitResult result;
    auto rng = make_rng(seed);
    for (std::size_t s = 0; s < strata.size(); ++s) {
        auto& idx = strata[s];
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < idx.size(); ++i)
            (i < take[s] ? result.train : result.test).push_back(idx[i]);
    }
    std::sort(result.train.begin(), result.train.end());
    std::sort(result.test.begin(), result.test.end());
    return result;
}

std::vector<int> stratified_folds(const std::vector<double>& labels, int folds,
                                  std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("folds must be >= 2");
    std::vector<int> assignment(labels.size(), -1);
    std::vector<std::size_t> zero_idx, pos_idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (labels[i] == 0.0 ? zero_idx : pos_idx).push_back(i);
    auto rng = make_rng(seed);
    int next = 0;
    for (auto* stratum : {&zero_idx, &pos_idx}) {
        std::shuffle(stratum->begin(), stratum->end(), rng);
        for (auto i : *stratum) {
            assignment[i] = next;
            next = (next + 1) % folds;
        }
    }
    return assignment;
}

} // namespace agristab
