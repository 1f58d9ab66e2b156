#ifndef FEDPM_DATASET_HPP
#define FEDPM_DATASET_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "fedpm/matrix.hpp"

namespace fedpm {

/// Index boundaries for the train/val/test split: train = [0, train_end),
/// val = [train_end, val_end), test = [val_end, length).
struct SplitBoundaries {
    std::size_t train_end = 0;
    std::size_t val_end = 0;
};

/**
 * A multichannel time series. `values` has one row per time step and one
 * column per channel; ingestion rejects non-finite cells outright.
 */
struct TimeSeriesDataset {
    std::string name;
    Matrix values;                        // T_total x channels
    std::vector<std::string> timestamps;  // first CSV column, kept verbatim

    std::size_t length() const { return values.rows; }
    std::size_t channels() const { return values.cols; }
};

/// Contiguous half-open range of time steps within a dataset.
struct SeriesView {
    const TimeSeriesDataset* dataset = nullptr;
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - begin; }
    double value(std::size_t offset, std::size_t channel) const {
        return dataset->values(begin + offset, channel);
    }
};

struct SplitViews {
    SeriesView train;
    SeriesView val;
    SeriesView test;
};

/**
 * One training/evaluation example for a single channel. The lookback is
 * stored normalized by its own mean/std; the target stays on the raw scale
 * and is de-normalized predictions' comparison point.
 */
struct ForecastInstance {
    std::vector<double> lookback;  // length L, normalized
    std::vector<double> target;    // length F, raw scale
    std::size_t channel = 0;
    double norm_mean = 0.0;
    double norm_std = 1.0;         // >= kStdFloor
};

/// Non-overlapping patches of a lookback window; the final patch is
/// right-padded with zeros when the length is not a multiple of patch_len.
struct PatchSequence {
    Matrix patches;  // count x patch_len
    std::size_t patch_len = 0;

    std::size_t count() const { return patches.rows; }
};

/// Lower bound applied to the per-instance standard deviation so constant
/// windows normalize to zeros instead of dividing by zero.
inline constexpr double kStdFloor = 1e-5;

struct CsvOptions {
    bool has_header = true;
};

/// Parse a CSV whose first column is a timestamp (kept as text) and whose
/// remaining columns are numeric channels. Throws on malformed or
/// non-finite cells, naming the offending data row and column.
TimeSeriesDataset load_csv(const std::string& path, const CsvOptions& options = {});

/// Validate boundaries and slice the dataset into three disjoint views.
SplitViews split(const TimeSeriesDataset& dataset, const SplitBoundaries& boundaries);

/// Chronological prefix of `fraction` of the view (floor of the product).
SeriesView few_shot_subset(const SeriesView& train, double fraction);

/// Closed-form number of sliding windows per channel.
std::size_t window_count(std::size_t view_length, std::size_t lookback,
                         std::size_t horizon, std::size_t stride);

/**
 * Slide (lookback, horizon) windows over every channel of the view at the
 * given stride. Each instance's lookback is normalized by its own mean and
 * floored std. A too-short view throws unless allow_empty is set.
 */
std::vector<ForecastInstance> make_instances(const SeriesView& view, std::size_t lookback,
                                             std::size_t horizon, std::size_t stride,
                                             bool allow_empty = false);

PatchSequence patchify(const std::vector<double>& lookback, std::size_t patch_len);

/// Inverse of patchify: concatenate patches and truncate to `length`.
std::vector<double> depatch(const PatchSequence& seq, std::size_t length);

std::vector<double> normalize(const std::vector<double>& values, double& mean_out,
                              double& std_out);
std::vector<double> de_normalize(const std::vector<double>& values, double mean, double std);

}  // namespace fedpm

#endif  // FEDPM_DATASET_HPP
