#ifndef FEDPM_SYNTHETIC_HPP
#define FEDPM_SYNTHETIC_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fedpm/dataset.hpp"

namespace fedpm {

/**
 * Generator for desk-scale multi-domain series: a sinusoidal base shared by
 * every domain plus a per-domain component that switches between a small
 * set of recurring regimes, plus optional Gaussian noise.
 */
struct SyntheticSpec {
    std::size_t domains = 3;
    std::size_t length = 2000;
    std::size_t channels = 1;
    std::size_t regimes = 3;         // templates per domain
    std::size_t min_segment = 120;   // regime dwell time bounds (steps)
    std::size_t max_segment = 320;
    double base_amplitude = 1.0;
    double regime_amplitude = 0.6;
    double noise_scale = 0.1;
    std::uint64_t seed = 0;
    // One regime vocabulary for all domains (each domain keeps its own
    // switching schedule). The recurring patterns then transfer across
    // domains; with false, every domain draws private templates.
    bool shared_regimes = false;
};

struct RegimeTemplate {
    double amplitude = 0.0;
    double period = 1.0;
    double phase = 0.0;
    double offset = 0.0;
};

struct Segment {
    std::size_t start = 0;
    std::size_t end = 0;  // exclusive
    std::size_t regime = 0;
};

/// Ground truth for one domain: the regime templates and the per-channel
/// switch schedule, enough to regenerate the noiseless series exactly.
struct DomainSchedule {
    std::size_t domain = 0;
    std::size_t length = 0;
    double base_amplitude = 1.0;
    std::vector<RegimeTemplate> regimes;
    std::vector<std::vector<Segment>> channel_segments;
};

struct SyntheticDomain {
    TimeSeriesDataset data;
    DomainSchedule schedule;
};

double shared_base(double t, double amplitude);
double regime_value(const RegimeTemplate& regime, double t);

std::vector<SyntheticDomain> generate_synthetic(const SyntheticSpec& spec);

/// Noise-free series implied by a schedule; equals the generated series
/// exactly when noise_scale was zero.
TimeSeriesDataset regenerate_from_schedule(const DomainSchedule& schedule, std::string name);

std::string schedule_to_json(const DomainSchedule& schedule);
DomainSchedule schedule_from_json(const std::string& text);

/// CSV with an integer timestamp column and one column per channel, written
/// with round-trip precision.
void write_csv(const TimeSeriesDataset& dataset, const std::string& path);

}  // namespace fedpm

#endif  // FEDPM_SYNTHETIC_HPP
