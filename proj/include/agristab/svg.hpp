#pragma once

#include <string>
#include <vector>

namespace agristab::svg {

struct Series {
    std::string label;
    std::vector<double> values;
};

// Grouped bar chart; one bar group per category, one bar per series.
void write_bar_chart(const std::string& path, const std::string& title,
                     const std::vector<std::string>& categories,
                     const std::vector<Series>& series);

// Line chart over a shared numeric x axis.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::vector<double>& x, const std::vector<Series>& series);

} // namespace agristab::svg
