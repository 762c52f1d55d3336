#pragma once

#include <string>
#include <vector>

namespace aar::codec {

enum class ScheduleKind { linear, quadratic, logarithmic, explicit_list };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string & name);

struct ScaleSchedule {
    ScheduleKind kind = ScheduleKind::linear;
    std::vector<int> lengths;

    int scales() const { return static_cast<int>(lengths.size()); }
    int top() const { return lengths.back(); }
    int length(int k) const { return lengths.at(static_cast<std::size_t>(k)); } // 0-based
    int total() const;
};

// linear:      floor(1 + (top-1)(k-1)/(K-1))
// quadratic:   floor(1 + (top-1)((k-1)/(K-1))^2)
// logarithmic: round-half-up(top^((k-1)/(K-1)))
// Every length is clamped to >= 1 and the last one is forced to top.
ScaleSchedule make_schedule(ScheduleKind kind, int scales, int top_length);

// Validates a user-supplied nondecreasing list ending at top_length.
ScaleSchedule explicit_schedule(std::vector<int> lengths, int top_length);

void validate(const ScaleSchedule & schedule);

} // namespace aar::codec
