#include "smm/metrics_log.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace smm {

std::string format_metrics_row(const MetricsRow& r) {
    std::ostringstream os;
    os << r.iteration << ',' << format_double(r.loss_match) << ',' << format_double(r.loss_mismatch) << ','
       << format_double(r.loss_generator) << ',' << format_double(r.mmd) << ','
       << format_double(r.sliced_wasserstein) << ',' << format_double(r.wall_time_s) << ',' << r.seed;
    return os.str();
}

void append_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::app);
    if (!out) throw FormatError("metrics", "cannot write '" + path.string() + "'");
    if (fresh) out << kMetricsHeader << '\n';
    for (const auto& r : rows) out << format_metrics_row(r) << '\n';
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("metrics", "cannot read '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader) {
        throw FormatError("metrics", "unexpected header in '" + path.string() + "'");
    }
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream cells(line);
        std::string c[8];
        for (auto& cell : c) {
            if (!std::getline(cells, cell, ',')) throw FormatError("metrics", "short row '" + line + "'");
        }
        MetricsRow r;
        r.iteration = std::stoll(c[0]);
        double* numeric[] = {&r.loss_match, &r.loss_mismatch, &r.loss_generator, &r.mmd, &r.sliced_wasserstein,
                             &r.wall_time_s};
        for (int k = 0; k < 6; ++k) {
            *numeric[k] = std::stod(c[k + 1]);
            if (!std::isfinite(*numeric[k])) throw FormatError("metrics", "non-finite cell in '" + line + "'");
        }
        r.seed = std::stoull(c[7]);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace smm
