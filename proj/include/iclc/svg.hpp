#pragma once

#include <string>
#include <utility>
#include <vector>

namespace iclc {

// Static vertical bar chart. Bars may be negative; NaN bars are drawn as
// an "n/a" label with no bar.
std::string bar_chart_svg(const std::string& title, const std::string& y_label,
                          const std::vector<std::pair<std::string, double>>& bars);

}  // namespace iclc
