#include "aar/codec/schedule.hpp"

#include "aar/error.hpp"

#include <cmath>
#include <numeric>

namespace aar::codec {

std::string to_string(ScheduleKind kind) {
    switch (kind) {
    case ScheduleKind::linear:
        return "linear";
    case ScheduleKind::quadratic:
        return "quadratic";
    case ScheduleKind::logarithmic:
        return "logarithmic";
    case ScheduleKind::explicit_list:
        return "explicit";
    }
    return "unknown";
}

ScheduleKind parse_schedule_kind(const std::string & name) {
    if (name == "linear") {
        return ScheduleKind::linear;
    }
    if (name == "quadratic") {
        return ScheduleKind::quadratic;
    }
    if (name == "logarithmic") {
        return ScheduleKind::logarithmic;
    }
    if (name == "explicit") {
        return ScheduleKind::explicit_list;
    }
    throw ValidationError("unknown schedule kind '" + name + "'");
}

int ScaleSchedule::total() const { return std::accumulate(lengths.begin(), lengths.end(), 0); }

ScaleSchedule make_schedule(ScheduleKind kind, int scales, int top_length) {
    require(scales >= 1, "schedule needs at least one scale");
    require(top_length >= 1, "top length must be positive");
    require(kind != ScheduleKind::explicit_list, "explicit schedules need a length list");
    ScaleSchedule s;
    s.kind = kind;
    if (scales == 1) {
        s.lengths = {top_length};
        return s;
    }
    const long long span = top_length - 1;
    const long long denom = scales - 1;
    for (int k = 1; k <= scales; ++k) {
        const long long i = k - 1;
        long long len = 1;
        switch (kind) {
        case ScheduleKind::linear:
            len = 1 + span * i / denom;
            break;
        case ScheduleKind::quadratic:
            len = 1 + span * i * i / (denom * denom);
            break;
        case ScheduleKind::logarithmic:
            len = static_cast<long long>(
                std::floor(std::pow(static_cast<double>(top_length), static_cast<double>(i) / denom) + 0.5));
            break;
        case ScheduleKind::explicit_list:
            break;
        }
        s.lengths.push_back(static_cast<int>(std::max<long long>(1, len)));
    }
    s.lengths.back() = top_length;
    validate(s);
    return s;
}

ScaleSchedule explicit_schedule(std::vector<int> lengths, int top_length) {
    ScaleSchedule s;
    s.kind = ScheduleKind::explicit_list;
    s.lengths = std::move(lengths);
    validate(s);
    require(s.top() == top_length,
            "explicit schedule must end at the top length " + std::to_string(top_length));
    return s;
}

void validate(const ScaleSchedule & schedule) {
    require(!schedule.lengths.empty(), "schedule is empty");
    for (std::size_t i = 0; i < schedule.lengths.size(); ++i) {
        require(schedule.lengths[i] >= 1, "schedule lengths must be >= 1");
        require(i == 0 || schedule.lengths[i] >= schedule.lengths[i - 1], "schedule lengths must be nondecreasing");
    }
}

} // namespace aar::codec
