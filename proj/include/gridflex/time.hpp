#ifndef GRIDFLEX_TIME_HPP
#define GRIDFLEX_TIME_HPP

#include <chrono>
#include <string>
#include <string_view>

namespace gridflex {

/// All instants are UTC with one-second resolution.
using Instant = std::chrono::sys_seconds;
using Minutes = std::chrono::minutes;

inline constexpr Minutes kDefaultResolution{15};
inline constexpr int kHorizonSteps = 96;
inline constexpr double kStepHours = 0.25;

/// Parses `YYYY-MM-DDTHH:MM:SSZ` (fractional seconds and `+00:00` accepted).
Instant parse_instant(std::string_view text);

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_instant(Instant t);

inline bool is_aligned(Instant t, Minutes resolution)
{
    const auto s = t.time_since_epoch().count();
    const auto r = std::chrono::duration_cast<std::chrono::seconds>(resolution).count();
    return s % r == 0;
}

inline Instant floor_to(Instant t, Minutes resolution)
{
    const auto s = t.time_since_epoch().count();
    const auto r = std::chrono::duration_cast<std::chrono::seconds>(resolution).count();
    auto q = s / r;
    if (s % r != 0 && s < 0) --q;
    return Instant{std::chrono::seconds{q * r}};
}

/// Hour of day in [0, 23].
int hour_of_day(Instant t);

/// Day of week in [0, 6], Monday = 0.
int day_of_week(Instant t);

} // namespace gridflex

#endif // GRIDFLEX_TIME_HPP
