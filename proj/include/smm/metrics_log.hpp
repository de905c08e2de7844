#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "smm/trainer.hpp"

namespace smm {

inline constexpr const char* kMetricsHeader =
    "iteration,loss_match,loss_mismatch,loss_generator,mmd,sliced_wasserstein,wall_time_s,seed";

std::string format_metrics_row(const MetricsRow& row);

// Appends rows, writing the header first if the file is new or empty.
void append_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

// Reads a log back; rejects a wrong header or non-finite cells.
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

}  // namespace smm
