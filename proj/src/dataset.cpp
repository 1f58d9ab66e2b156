#include "fedpm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fedpm {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_cell(const std::string& cell, std::size_t data_row, std::size_t column) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    // Require the whole cell (modulo trailing whitespace) to be consumed.
    while (end && *end == ' ') ++end;
    if (end == begin || (end && *end != '\0'))
        throw std::runtime_error("csv parse error at row " + std::to_string(data_row) +
                                 ", column " + std::to_string(column) + ": '" + cell + "'");
    if (!std::isfinite(value))
        throw std::runtime_error("non-finite value at row " + std::to_string(data_row) +
                                 ", column " + std::to_string(column));
    return value;
}

}  // namespace

TimeSeriesDataset load_csv(const std::string& path, const CsvOptions& options) {
    std::ifstream file(path);
    if (!file.is_open()) throw std::runtime_error("cannot open file: " + path);

    TimeSeriesDataset ds;
    ds.name = path;

    std::string line;
    std::vector<std::vector<double>> rows;
    std::size_t data_row = 0;
    bool header_pending = options.has_header;
    std::size_t n_channels = 0;

    while (std::getline(file, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        ++data_row;  // 1-based, counting data rows only
        const auto cells = split_line(line);
        if (cells.size() < 2)
            throw std::runtime_error("csv parse error at row " + std::to_string(data_row) +
                                     ": expected timestamp plus at least one channel");
        if (n_channels == 0) {
            n_channels = cells.size() - 1;
        } else if (cells.size() - 1 != n_channels) {
            throw std::runtime_error("csv parse error at row " + std::to_string(data_row) +
                                     ": expected " + std::to_string(n_channels + 1) +
                                     " columns, got " + std::to_string(cells.size()));
        }
        ds.timestamps.push_back(cells[0]);
        std::vector<double> values(n_channels);
        for (std::size_t c = 0; c < n_channels; ++c)
            values[c] = parse_cell(cells[c + 1], data_row, c + 2);
        rows.push_back(std::move(values));
    }

    if (rows.empty()) throw std::runtime_error("empty csv file: " + path);

    ds.values = Matrix(rows.size(), n_channels);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < n_channels; ++c) ds.values(i, c) = rows[i][c];
    return ds;
}

SplitViews split(const TimeSeriesDataset& dataset, const SplitBoundaries& boundaries) {
    const std::size_t total = dataset.length();
    if (boundaries.train_end == 0 || boundaries.train_end >= boundaries.val_end ||
        boundaries.val_end > total)
        throw std::invalid_argument("invalid split boundaries (" +
                                    std::to_string(boundaries.train_end) + ", " +
                                    std::to_string(boundaries.val_end) + ") for length " +
                                    std::to_string(total));
    SplitViews views;
    views.train = SeriesView{&dataset, 0, boundaries.train_end};
    views.val = SeriesView{&dataset, boundaries.train_end, boundaries.val_end};
    views.test = SeriesView{&dataset, boundaries.val_end, total};
    return views;
}

SeriesView few_shot_subset(const SeriesView& train, double fraction) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw std::invalid_argument("few-shot fraction must lie in (0, 1]");
    const auto keep =
        static_cast<std::size_t>(std::floor(fraction * static_cast<double>(train.length())));
    return SeriesView{train.dataset, train.begin, train.begin + keep};
}

std::size_t window_count(std::size_t view_length, std::size_t lookback, std::size_t horizon,
                         std::size_t stride) {
    const std::size_t need = lookback + horizon;
    if (view_length < need) return 0;
    return (view_length - need) / stride + 1;
}

std::vector<double> normalize(const std::vector<double>& values, double& mean_out,
                              double& std_out) {
    const auto n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= n;
    mean_out = mean;
    std_out = std::max(std::sqrt(var), kStdFloor);
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / std_out;
    return out;
}

std::vector<double> de_normalize(const std::vector<double>& values, double mean, double std) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * std + mean;
    return out;
}

std::vector<ForecastInstance> make_instances(const SeriesView& view, std::size_t lookback,
                                             std::size_t horizon, std::size_t stride,
                                             bool allow_empty) {
    if (stride == 0) throw std::invalid_argument("stride must be >= 1");
    const std::size_t per_channel = window_count(view.length(), lookback, horizon, stride);
    if (per_channel == 0) {
        if (allow_empty) return {};
        throw std::invalid_argument("view of length " + std::to_string(view.length()) +
                                    " too short for lookback " + std::to_string(lookback) +
                                    " + horizon " + std::to_string(horizon));
    }

    std::vector<ForecastInstance> instances;
    instances.reserve(per_channel * view.dataset->channels());
    // Channel-independent: one univariate instance per (window, channel).
    for (std::size_t c = 0; c < view.dataset->channels(); ++c) {
        for (std::size_t w = 0; w < per_channel; ++w) {
            const std::size_t start = w * stride;
            ForecastInstance inst;
            inst.channel = c;
            std::vector<double> raw(lookback);
            for (std::size_t i = 0; i < lookback; ++i) raw[i] = view.value(start + i, c);
            inst.lookback = normalize(raw, inst.norm_mean, inst.norm_std);
            inst.target.resize(horizon);
            for (std::size_t i = 0; i < horizon; ++i)
                inst.target[i] = view.value(start + lookback + i, c);
            instances.push_back(std::move(inst));
        }
    }
    return instances;
}

PatchSequence patchify(const std::vector<double>& lookback, std::size_t patch_len) {
    const std::size_t length = lookback.size();
    if (patch_len == 0) throw std::invalid_argument("patch length must be >= 1");
    if (patch_len > length)
        throw std::invalid_argument("patch length " + std::to_string(patch_len) +
                                    " exceeds lookback length " + std::to_string(length));
    // count = ceil((L - S) / S) + 1
    const std::size_t count = (length - patch_len + patch_len - 1) / patch_len + 1;
    PatchSequence seq;
    seq.patch_len = patch_len;
    seq.patches = Matrix(count, patch_len, 0.0);
    for (std::size_t p = 0; p < count; ++p)
        for (std::size_t i = 0; i < patch_len; ++i) {
            const std::size_t src = p * patch_len + i;
            if (src < length) seq.patches(p, i) = lookback[src];
        }
    return seq;
}

std::vector<double> depatch(const PatchSequence& seq, std::size_t length) {
    std::vector<double> out(length, 0.0);
    for (std::size_t p = 0; p < seq.count(); ++p)
        for (std::size_t i = 0; i < seq.patch_len; ++i) {
            const std::size_t dst = p * seq.patch_len + i;
            if (dst < length) out[dst] = seq.patches(p, i);
        }
    return out;
}

}  // namespace fedpm
