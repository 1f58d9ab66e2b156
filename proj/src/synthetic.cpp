#include "fedpm/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "fedpm/rng.hpp"

namespace fedpm {

namespace {
constexpr std::uint64_t kSyntheticStream = 0x53594e54;  // stream id

void validate(const SyntheticSpec& spec) {
    if (spec.domains == 0) throw std::invalid_argument("synthetic: domains must be >= 1");
    if (spec.length < 2) throw std::invalid_argument("synthetic: length must be >= 2");
    if (spec.channels == 0) throw std::invalid_argument("synthetic: channels must be >= 1");
    if (spec.regimes == 0) throw std::invalid_argument("synthetic: regimes must be >= 1");
    if (spec.min_segment == 0 || spec.min_segment > spec.max_segment)
        throw std::invalid_argument("synthetic: segment bounds invalid");
    if (spec.noise_scale < 0.0)
        throw std::invalid_argument("synthetic: noise scale must be >= 0");
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

double shared_base(double t, double amplitude) {
    return amplitude * (std::sin(2.0 * M_PI * t / 24.0) +
                        0.5 * std::sin(2.0 * M_PI * t / 96.0));
}

double regime_value(const RegimeTemplate& regime, double t) {
    return regime.offset +
           regime.amplitude * std::sin(2.0 * M_PI * t / regime.period + regime.phase);
}

std::vector<SyntheticDomain> generate_synthetic(const SyntheticSpec& spec) {
    validate(spec);
    std::vector<SyntheticDomain> domains;
    domains.reserve(spec.domains);

    auto draw_templates = [&spec](Rng& rng) {
        std::vector<RegimeTemplate> templates;
        for (std::size_t r = 0; r < spec.regimes; ++r) {
            RegimeTemplate tpl;
            tpl.amplitude = spec.regime_amplitude * rng.uniform(0.5, 1.0);
            tpl.period = rng.uniform(12.0, 48.0);
            tpl.phase = rng.uniform(0.0, 2.0 * M_PI);
            tpl.offset = spec.regime_amplitude * rng.uniform(-1.0, 1.0);
            templates.push_back(tpl);
        }
        return templates;
    };

    std::vector<RegimeTemplate> shared_templates;
    if (spec.shared_regimes) {
        Rng shared_rng = Rng::derive(spec.seed, {kSyntheticStream, 0xFFFF});
        shared_templates = draw_templates(shared_rng);
    }

    for (std::size_t n = 0; n < spec.domains; ++n) {
        Rng rng = Rng::derive(spec.seed, {kSyntheticStream, n});

        DomainSchedule schedule;
        schedule.domain = n;
        schedule.length = spec.length;
        schedule.base_amplitude = spec.base_amplitude;
        schedule.regimes = spec.shared_regimes ? shared_templates : draw_templates(rng);

        schedule.channel_segments.resize(spec.channels);
        for (std::size_t c = 0; c < spec.channels; ++c) {
            std::size_t t = 0;
            while (t < spec.length) {
                Segment seg;
                seg.start = t;
                const std::size_t span =
                    spec.min_segment +
                    static_cast<std::size_t>(
                        rng.below(spec.max_segment - spec.min_segment + 1));
                seg.end = std::min(spec.length, t + span);
                seg.regime = static_cast<std::size_t>(rng.below(spec.regimes));
                schedule.channel_segments[c].push_back(seg);
                t = seg.end;
            }
        }

        SyntheticDomain domain;
        domain.schedule = schedule;
        domain.data.name = "domain_" + std::to_string(n);
        domain.data.values = Matrix(spec.length, spec.channels);
        domain.data.timestamps.reserve(spec.length);
        for (std::size_t t = 0; t < spec.length; ++t)
            domain.data.timestamps.push_back(std::to_string(t));

        for (std::size_t c = 0; c < spec.channels; ++c) {
            for (const Segment& seg : schedule.channel_segments[c]) {
                const RegimeTemplate& tpl = schedule.regimes[seg.regime];
                for (std::size_t t = seg.start; t < seg.end; ++t) {
                    double v = shared_base(static_cast<double>(t), spec.base_amplitude) +
                               regime_value(tpl, static_cast<double>(t));
                    if (spec.noise_scale > 0.0) v += spec.noise_scale * rng.normal();
                    domain.data.values(t, c) = v;
                }
            }
        }
        domains.push_back(std::move(domain));
    }
    return domains;
}

TimeSeriesDataset regenerate_from_schedule(const DomainSchedule& schedule, std::string name) {
    TimeSeriesDataset data;
    data.name = std::move(name);
    data.values = Matrix(schedule.length, schedule.channel_segments.size());
    for (std::size_t t = 0; t < schedule.length; ++t)
        data.timestamps.push_back(std::to_string(t));
    for (std::size_t c = 0; c < schedule.channel_segments.size(); ++c)
        for (const Segment& seg : schedule.channel_segments[c]) {
            const RegimeTemplate& tpl = schedule.regimes[seg.regime];
            for (std::size_t t = seg.start; t < seg.end; ++t)
                data.values(t, c) = shared_base(static_cast<double>(t),
                                                schedule.base_amplitude) +
                                    regime_value(tpl, static_cast<double>(t));
        }
    return data;
}

std::string schedule_to_json(const DomainSchedule& schedule) {
    nlohmann::json j;
    j["domain"] = schedule.domain;
    j["length"] = schedule.length;
    j["base_amplitude"] = schedule.base_amplitude;
    for (const RegimeTemplate& r : schedule.regimes)
        j["regimes"].push_back({{"amplitude", r.amplitude},
                                {"period", r.period},
                                {"phase", r.phase},
                                {"offset", r.offset}});
    for (std::size_t c = 0; c < schedule.channel_segments.size(); ++c) {
        nlohmann::json segs = nlohmann::json::array();
        for (const Segment& s : schedule.channel_segments[c])
            segs.push_back({{"start", s.start}, {"end", s.end}, {"regime", s.regime}});
        j["channels"].push_back({{"channel", c}, {"segments", segs}});
    }
    return j.dump(2);
}

DomainSchedule schedule_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    DomainSchedule schedule;
    schedule.domain = j.at("domain").get<std::size_t>();
    schedule.length = j.at("length").get<std::size_t>();
    schedule.base_amplitude = j.at("base_amplitude").get<double>();
    for (const auto& r : j.at("regimes")) {
        RegimeTemplate tpl;
        tpl.amplitude = r.at("amplitude").get<double>();
        tpl.period = r.at("period").get<double>();
        tpl.phase = r.at("phase").get<double>();
        tpl.offset = r.at("offset").get<double>();
        schedule.regimes.push_back(tpl);
    }
    for (const auto& ch : j.at("channels")) {
        std::vector<Segment> segs;
        for (const auto& s : ch.at("segments"))
            segs.push_back(Segment{s.at("start").get<std::size_t>(),
                                   s.at("end").get<std::size_t>(),
                                   s.at("regime").get<std::size_t>()});
        schedule.channel_segments.push_back(std::move(segs));
    }
    return schedule;
}

void write_csv(const TimeSeriesDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out.is_open()) throw std::runtime_error("cannot write csv: " + path);
    out << "date";
    for (std::size_t c = 0; c < dataset.channels(); ++c) out << ",ch" << c;
    out << "\n";
    for (std::size_t t = 0; t < dataset.length(); ++t) {
        out << (t < dataset.timestamps.size() ? dataset.timestamps[t] : std::to_string(t));
        for (std::size_t c = 0; c < dataset.channels(); ++c)
            out << "," << format_double(dataset.values(t, c));
        out << "\n";
    }
    if (!out) throw std::runtime_error("failed writing csv: " + path);
}

}  // namespace fedpm
