#include "gridflex/error.hpp"
#include "gridflex/time.hpp"

#include <charconv>
#include <cstdio>

namespace gridflex {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::invalid_parameter: return "invalid_parameter";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::under_determined_graph: return "under_determined_graph";
    case ErrorCode::singular_conditioning: return "singular_conditioning";
    case ErrorCode::unknown_variable: return "unknown_variable";
    case ErrorCode::duplicate_assignment: return "duplicate_assignment";
    case ErrorCode::unknown_series: return "unknown_series";
    case ErrorCode::unknown_signal: return "unknown_signal";
    case ErrorCode::unknown_entity: return "unknown_entity";
    case ErrorCode::parent_cycle: return "parent_cycle";
    case ErrorCode::misaligned_timestamp: return "misaligned_timestamp";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::insufficient_samples: return "insufficient_samples";
    case ErrorCode::degenerate_parent: return "degenerate_parent";
    case ErrorCode::insufficient_history: return "insufficient_history";
    case ErrorCode::gap_too_large: return "gap_too_large";
    case ErrorCode::missing_forecast: return "missing_forecast";
    case ErrorCode::not_controllable: return "not_controllable";
    case ErrorCode::invalid_config: return "invalid_config";
    case ErrorCode::storage_failure: return "storage_failure";
    }
    return "unknown";
}

namespace {

int read_int(std::string_view text, std::size_t pos, std::size_t len)
{
    if (pos + len > text.size())
        throw Error(ErrorCode::invalid_parameter, "truncated timestamp", {std::string(text)});
    int value = 0;
    const auto* first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, value);
    if (ec != std::errc{} || ptr != first + len)
        throw Error(ErrorCode::invalid_parameter, "malformed timestamp", {std::string(text)});
    return value;
}

void expect(std::string_view text, std::size_t pos, char c)
{
    if (pos >= text.size() || (text[pos] != c && !(c == 'T' && text[pos] == ' ')))
        throw Error(ErrorCode::invalid_parameter, "malformed timestamp", {std::string(text)});
}

} // namespace

Instant parse_instant(std::string_view text)
{
    using namespace std::chrono;
    const int y = read_int(text, 0, 4);
    expect(text, 4, '-');
    const int mo = read_int(text, 5, 2);
    expect(text, 7, '-');
    const int d = read_int(text, 8, 2);
    expect(text, 10, 'T');
    const int h = read_int(text, 11, 2);
    expect(text, 13, ':');
    const int mi = read_int(text, 14, 2);
    expect(text, 16, ':');
    const int s = read_int(text, 17, 2);

    std::size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    }
    const auto rest = text.substr(pos);
    if (rest != "Z" && rest != "z" && rest != "+00:00")
        throw Error(ErrorCode::invalid_parameter, "timestamp must be UTC", {std::string(text)});

    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 60)
        throw Error(ErrorCode::invalid_parameter, "invalid calendar timestamp", {std::string(text)});
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

std::string format_instant(Instant t)
{
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{t - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

int hour_of_day(Instant t)
{
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    return static_cast<int>(duration_cast<hours>(t - day_point).count());
}

int day_of_week(Instant t)
{
    using namespace std::chrono;
    const weekday wd{floor<days>(t)};
    return static_cast<int>(wd.iso_encoding()) - 1;
}

} // namespace gridflex
