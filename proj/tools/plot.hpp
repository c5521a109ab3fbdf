#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace psvae::plot {

/// metrics.csv -> one PNG with every loss column as a curve.
void loss_curves(const std::filesystem::path& metrics_csv,
                 const std::filesystem::path& out_png);

/// One or more EvalReport JSON files -> overlaid PCK-vs-threshold curves.
void pck_curves(const std::vector<std::filesystem::path>& report_jsons,
                const std::filesystem::path& out_png);

/// Feature dump CSV (domain, dim_0, dim_1, ...) -> scatter of the first two
/// dimensions, colored by domain.
void feature_scatter(const std::filesystem::path& features_csv,
                     const std::filesystem::path& out_png);

}  // namespace psvae::plot
