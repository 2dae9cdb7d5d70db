#include <cmg/commit.hpp>
#include <cmg/diff.hpp>
#include <cmg/errors.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>

namespace cmg {

namespace {

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out)
{
    if (pos + len > s.size())
        return false;
    auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
    return ec == std::errc{} && ptr == s.data() + pos + len;
}

} // namespace

bool is_valid_sha(std::string_view sha)
{
    return sha.size() == 40 && std::all_of(sha.begin(), sha.end(), [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

std::string format_iso8601(Timestamp t)
{
    std::time_t tt = static_cast<std::time_t>(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[80];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

Timestamp parse_iso8601(std::string_view text)
{
    auto fail = [&]() -> Timestamp { throw Error("invalid ISO-8601 date: '" + std::string(text) + "'"); };
    std::tm tm{};
    int year = 0, month = 0, day = 0;
    if (!read_int(text, 0, 4, year) || text.size() < 10 || text[4] != '-' || !read_int(text, 5, 2, month) || text[7] != '-' || !read_int(text, 8, 2, day))
        return fail();
    tm.tm_year = year - 1900;
    tm.tm_mon = month - 1;
    tm.tm_mday = day;
    long offset_seconds = 0;
    if (text.size() > 10) {
        if (text[10] != 'T' && text[10] != ' ')
            return fail();
        int h = 0, m = 0, s = 0;
        if (!read_int(text, 11, 2, h) || text.size() < 19 || text[13] != ':' || !read_int(text, 14, 2, m) || text[16] != ':' || !read_int(text, 17, 2, s))
            return fail();
        tm.tm_hour = h;
        tm.tm_min = m;
        tm.tm_sec = s;
        auto rest = text.substr(19);
        if (!rest.empty() && rest.front() == '.') {
            rest.remove_prefix(1);
            while (!rest.empty() && rest.front() >= '0' && rest.front() <= '9')
                rest.remove_prefix(1);
        }
        if (rest == "Z" || rest.empty()) {
        } else if ((rest.front() == '+' || rest.front() == '-') && rest.size() == 6 && rest[3] == ':') {
            int oh = 0, om = 0;
            if (!read_int(rest, 1, 2, oh) || !read_int(rest, 4, 2, om))
                return fail();
            offset_seconds = (oh * 3600L + om * 60L) * (rest.front() == '+' ? 1 : -1);
        } else {
            return fail();
        }
    }
    if (month < 1 || month > 12 || day < 1 || day > 31 || tm.tm_hour > 23 || tm.tm_min > 59 || tm.tm_sec > 60)
        return fail();
    return static_cast<Timestamp>(timegm(&tm)) - offset_seconds;
}

std::vector<std::string> check_record(const CommitRecord& record)
{
    std::vector<std::string> problems;
    if (!is_valid_sha(record.sha))
        problems.push_back("sha is not 40 lowercase hex characters");
    if (record.message.find('\n') != std::string::npos || record.message.find('\r') != std::string::npos)
        problems.push_back("message contains a line break");
    for (std::size_t i = 0; i + 1 < record.message.size(); ++i) {
        if (record.message[i] == '#' && record.message[i + 1] >= '0' && record.message[i + 1] <= '9') {
            problems.push_back("message contains a #<digits> reference");
            break;
        }
    }
    try {
        auto parsed = parse_diff(record.diff);
        if (count_loc(parsed) != record.loc)
            problems.push_back("loc does not equal added + deleted lines");
        auto paths = changed_files(parsed);
        std::set<std::string> expected(paths.begin(), paths.end());
        std::set<std::string> actual(record.files.begin(), record.files.end());
        if (expected != actual)
            problems.push_back("files do not match the paths named in the diff");
    } catch (const MalformedDiff& e) {
        problems.push_back(e.what());
    }
    return problems;
}

void to_json(nlohmann::json& j, const CommitRecord& r)
{
    j = nlohmann::json{
        {"diff", r.diff},
        {"message", r.message},
        {"repo_full_name", r.repo_full_name},
        {"sha", r.sha},
        {"author_name", r.author_name},
        {"files", r.files},
        {"date", format_iso8601(r.date)},
        {"loc", r.loc},
    };
}

void from_json(const nlohmann::json& j, CommitRecord& r)
{
    j.at("diff").get_to(r.diff);
    j.at("message").get_to(r.message);
    j.at("repo_full_name").get_to(r.repo_full_name);
    j.at("sha").get_to(r.sha);
    j.at("author_name").get_to(r.author_name);
    j.at("files").get_to(r.files);
    r.date = parse_iso8601(j.at("date").get<std::string>());
    j.at("loc").get_to(r.loc);
}

std::vector<CommitRecord> read_jsonl(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open " + path.string());
    std::vector<CommitRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            records.push_back(nlohmann::json::parse(line).get<CommitRecord>());
        } catch (const nlohmann::json::exception& e) {
            throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<CommitRecord>& records)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    for (const auto& r : records)
        out << nlohmann::json(r).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed)
{
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

} // namespace cmg
