#ifndef PROTOMARK_PLOT_HPP
#define PROTOMARK_PLOT_HPP

#include <string>
#include <vector>

namespace protomark {

// Minimal SVG line chart; plots are informational companions to the CSV data.
struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

void write_svg_line_plot(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<PlotSeries>& series);

} // namespace protomark

#endif
