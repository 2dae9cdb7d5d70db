#include <cmg/diff.hpp>
#include <cmg/errors.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <optional>
#include <utility>

namespace cmg {

namespace {

constexpr std::string_view dev_null = "/dev/null";

struct ExtensionEntry {
    std::string_view extension;
    Language language;
};

constexpr std::array<ExtensionEntry, 24> extension_table{{
    {".java", Language::java},
    {".cpp", Language::cpp},
    {".cc", Language::cpp},
    {".cxx", Language::cpp},
    {".c++", Language::cpp},
    {".hpp", Language::cpp},
    {".hh", Language::cpp},
    {".hxx", Language::cpp},
    {".h", Language::cpp},
    {".ipp", Language::cpp},
    {".scala", Language::scala},
    {".sc", Language::scala},
    {".ts", Language::typescript},
    {".tsx", Language::typescript},
    {".mts", Language::typescript},
    {".cts", Language::typescript},
    {".py", Language::python},
    {".pyi", Language::python},
    {".lua", Language::lua},
    {".go", Language::go},
    {".rs", Language::rust},
    {".erl", Language::erlang},
    {".hrl", Language::erlang},
    {".escript", Language::erlang},
}};

// A single line of the raw payload, without its terminating newline.
struct RawLine {
    std::string_view text;
    std::size_t offset;
};

class LineCursor {
public:
    explicit LineCursor(std::string_view raw)
        : m_raw(raw)
    {
    }

    bool at_end() const { return m_pos >= m_raw.size(); }

    std::optional<RawLine> peek() const
    {
        if (at_end())
            return std::nullopt;
        auto end = m_raw.find('\n', m_pos);
        if (end == std::string_view::npos)
            end = m_raw.size();
        return RawLine{m_raw.substr(m_pos, end - m_pos), m_pos};
    }

    RawLine next()
    {
        auto line = *peek();
        m_pos = line.offset + line.text.size() + 1;
        return line;
    }

private:
    std::string_view m_raw;
    std::size_t m_pos = 0;
};

bool starts_with(std::string_view s, std::string_view prefix)
{
    return s.substr(0, prefix.size()) == prefix;
}

std::string unquote_path(std::string_view s)
{
    if (s.size() < 2 || s.front() != '"' || s.back() != '"')
        return std::string(s);
    std::string out;
    s = s.substr(1, s.size() - 2);
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c != '\\' || i + 1 == s.size()) {
            out += c;
            continue;
        }
        char e = s[++i];
        switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default:
            if (e >= '0' && e <= '7') {
                int value = e - '0';
                for (int k = 0; k < 2 && i + 1 < s.size() && s[i + 1] >= '0' && s[i + 1] <= '7'; ++k)
                    value = value * 8 + (s[++i] - '0');
                out += static_cast<char>(value);
            } else {
                out += e;
            }
        }
    }
    return out;
}

std::string strip_prefix(std::string path)
{
    if (path == dev_null)
        return path;
    if (starts_with(path, "a/") || starts_with(path, "b/"))
        path.erase(0, 2);
    return path;
}

// "--- a/foo.c\t2020-01-01 ..." -> "foo.c"
std::string header_path(std::string_view rest)
{
    if (!rest.empty() && rest.front() != '"') {
        auto tab = rest.find('\t');
        if (tab != std::string_view::npos)
            rest = rest.substr(0, tab);
    }
    while (!rest.empty() && (rest.back() == '\r' || rest.back() == ' '))
        rest.remove_suffix(1);
    return strip_prefix(unquote_path(rest));
}

std::pair<std::string, std::string> git_header_paths(std::string_view rest)
{
    while (!rest.empty() && rest.back() == '\r')
        rest.remove_suffix(1);
    if (!rest.empty() && rest.front() == '"') {
        auto close = rest.find("\" ", 1);
        if (close != std::string_view::npos) {
            auto a = rest.substr(0, close + 1);
            auto b = rest.substr(close + 2);
            return {strip_prefix(unquote_path(a)), strip_prefix(unquote_path(b))};
        }
    }
    // Unquoted: "a/<path> b/<path>". When old and new are equal the split is the midpoint.
    if (rest.size() % 2 == 1) {
        auto half = rest.size() / 2;
        auto a = rest.substr(0, half);
        auto b = rest.substr(half + 1);
        if (rest[half] == ' ' && a.size() > 2 && b.size() > 2 && a.substr(2) == b.substr(2))
            return {strip_prefix(std::string(a)), strip_prefix(std::string(b))};
    }
    auto split = rest.rfind(" b/");
    if (split == std::string_view::npos)
        split = rest.rfind(' ');
    if (split == std::string_view::npos)
        return {std::string(rest), std::string(rest)};
    return {strip_prefix(std::string(rest.substr(0, split))), strip_prefix(std::string(rest.substr(split + 1)))};
}

bool parse_number(std::string_view& s, std::size_t& out)
{
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr == s.data())
        return false;
    s.remove_prefix(static_cast<std::size_t>(ptr - s.data()));
    return true;
}

bool parse_range(std::string_view& s, char sign, std::size_t& start, std::size_t& len)
{
    if (s.empty() || s.front() != sign)
        return false;
    s.remove_prefix(1);
    if (!parse_number(s, start))
        return false;
    len = 1;
    if (!s.empty() && s.front() == ',') {
        s.remove_prefix(1);
        if (!parse_number(s, len))
            return false;
    }
    return true;
}

Hunk parse_hunk_header(const RawLine& line)
{
    Hunk hunk;
    std::string_view s = line.text;
    s.remove_prefix(3); // "@@ "
    if (!parse_range(s, '-', hunk.old_start, hunk.old_len))
        throw MalformedDiff(line.offset, "bad old range in hunk header");
    if (s.empty() || s.front() != ' ')
        throw MalformedDiff(line.offset, "bad hunk header");
    s.remove_prefix(1);
    if (!parse_range(s, '+', hunk.new_start, hunk.new_len))
        throw MalformedDiff(line.offset, "bad new range in hunk header");
    if (!starts_with(s, " @@"))
        throw MalformedDiff(line.offset, "hunk header missing closing @@");
    s.remove_prefix(3);
    if (!s.empty() && s.front() == ' ')
        s.remove_prefix(1);
    hunk.heading = std::string(s);
    return hunk;
}

void consume_hunk_body(LineCursor& cursor, Hunk& hunk, std::size_t header_offset)
{
    std::size_t old_left = hunk.old_len;
    std::size_t new_left = hunk.new_len;

    auto attach_marker = [&] {
        auto marker = cursor.peek();
        if (marker && !hunk.lines.empty() && starts_with(marker->text, "\\"))
            hunk.lines.back().eof_marker = std::string(cursor.next().text);
    };

    while (old_left > 0 || new_left > 0) {
        if (cursor.at_end())
            throw MalformedDiff(header_offset, "hunk body truncated");
        auto line = cursor.next();
        if (line.text.empty()) {
            // Some tools strip the single space from blank context lines.
            if (old_left == 0 || new_left == 0)
                throw MalformedDiff(line.offset, "context line exceeds hunk range");
            hunk.lines.push_back({LineKind::context, {}, {}});
            --old_left;
            --new_left;
            continue;
        }
        char tag = line.text.front();
        std::string text(line.text.substr(1));
        switch (tag) {
        case ' ':
            if (old_left == 0 || new_left == 0)
                throw MalformedDiff(line.offset, "context line exceeds hunk range");
            --old_left;
            --new_left;
            hunk.lines.push_back({LineKind::context, std::move(text), {}});
            break;
        case '-':
            if (old_left == 0)
                throw MalformedDiff(line.offset, "deleted line exceeds hunk range");
            --old_left;
            hunk.lines.push_back({LineKind::deleted, std::move(text), {}});
            break;
        case '+':
            if (new_left == 0)
                throw MalformedDiff(line.offset, "added line exceeds hunk range");
            --new_left;
            hunk.lines.push_back({LineKind::added, std::move(text), {}});
            break;
        case '\\':
            if (hunk.lines.empty())
                throw MalformedDiff(line.offset, "no-newline marker before any line");
            hunk.lines.back().eof_marker = std::string(line.text);
            break;
        default:
            throw MalformedDiff(line.offset, "unexpected line inside hunk body");
        }
    }
    attach_marker();
}

} // namespace

std::string_view language_name(Language lang)
{
    switch (lang) {
    case Language::java: return "Java";
    case Language::cpp: return "C++";
    case Language::scala: return "Scala";
    case Language::typescript: return "TypeScript";
    case Language::python: return "Python";
    case Language::lua: return "Lua";
    case Language::go: return "Go";
    case Language::rust: return "Rust";
    case Language::erlang: return "Erlang";
    case Language::other: return "other";
    }
    return "other";
}

Language language_for_path(std::string_view path)
{
    auto slash = path.find_last_of('/');
    auto name = slash == std::string_view::npos ? path : path.substr(slash + 1);
    auto dot = name.find_last_of('.');
    if (dot == std::string_view::npos || dot == 0)
        return Language::other;
    std::string ext(name.substr(dot));
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const auto& entry : extension_table) {
        if (entry.extension == ext)
            return entry.language;
    }
    return Language::other;
}

std::size_t Hunk::added() const
{
    return static_cast<std::size_t>(std::count_if(lines.begin(), lines.end(), [](const DiffLine& l) { return l.kind == LineKind::added; }));
}

std::size_t Hunk::deleted() const
{
    return static_cast<std::size_t>(std::count_if(lines.begin(), lines.end(), [](const DiffLine& l) { return l.kind == LineKind::deleted; }));
}

std::string Hunk::render_body() const
{
    std::string out;
    for (const auto& line : lines) {
        out += static_cast<char>(line.kind);
        out += line.text;
        out += '\n';
        if (!line.eof_marker.empty()) {
            out += line.eof_marker;
            out += '\n';
        }
    }
    return out;
}

const std::string& FileChange::path() const
{
    return new_path == dev_null ? old_path : new_path;
}

std::size_t FileChange::added() const
{
    std::size_t n = 0;
    for (const auto& h : hunks)
        n += h.added();
    return n;
}

std::size_t FileChange::deleted() const
{
    std::size_t n = 0;
    for (const auto& h : hunks)
        n += h.deleted();
    return n;
}

std::size_t ParsedDiff::added() const
{
    std::size_t n = 0;
    for (const auto& f : file_changes)
        n += f.added();
    return n;
}

std::size_t ParsedDiff::deleted() const
{
    std::size_t n = 0;
    for (const auto& f : file_changes)
        n += f.deleted();
    return n;
}

ParsedDiff parse_diff(std::string_view raw)
{
    ParsedDiff result;
    LineCursor cursor(raw);

    FileChange* current = nullptr;
    // Plain unified diffs have no "diff --git" line; a "---" header then opens a new file.
    bool current_has_minus_header = false;

    auto open_file = [&] {
        result.file_changes.emplace_back();
        current = &result.file_changes.back();
        current_has_minus_header = false;
    };

    while (!cursor.at_end()) {
        auto line = cursor.next();
        auto text = line.text;

        if (starts_with(text, "diff --git ")) {
            open_file();
            auto [a, b] = git_header_paths(text.substr(11));
            current->old_path = std::move(a);
            current->new_path = std::move(b);
        } else if (starts_with(text, "--- ")) {
            auto next = cursor.peek();
            if (!next || !starts_with(next->text, "+++ "))
                continue;
            if (!current || current_has_minus_header || !current->hunks.empty())
                open_file();
            current->old_path = header_path(text.substr(4));
            current_has_minus_header = true;
            auto plus = cursor.next();
            current->new_path = header_path(plus.text.substr(4));
        } else if (starts_with(text, "@@ ") || text == "@@") {
            if (text == "@@")
                throw MalformedDiff(line.offset, "empty hunk header");
            if (!current)
                open_file();
            auto hunk = parse_hunk_header(line);
            consume_hunk_body(cursor, hunk, line.offset);
            current->hunks.push_back(std::move(hunk));
        } else if (!current) {
            continue;
        } else if (starts_with(text, "rename from ") || starts_with(text, "copy from ")) {
            current->old_path = unquote_path(text.substr(text.find(" from ") + 6));
        } else if (starts_with(text, "rename to ") || starts_with(text, "copy to ")) {
            current->new_path = unquote_path(text.substr(text.find(" to ") + 4));
        } else if (starts_with(text, "new file mode")) {
            current->old_path = std::string(dev_null);
        } else if (starts_with(text, "deleted file mode")) {
            current->new_path = std::string(dev_null);
        } else if (starts_with(text, "Binary files ") || text == "GIT binary patch") {
            current->binary = true;
        }
    }

    for (auto& file : result.file_changes)
        file.language = language_for_path(file.path());
    return result;
}

std::size_t count_loc(const ParsedDiff& diff)
{
    return diff.added() + diff.deleted();
}

std::size_t diff_line_count(std::string_view raw)
{
    auto n = static_cast<std::size_t>(std::count(raw.begin(), raw.end(), '\n'));
    if (!raw.empty() && raw.back() != '\n')
        ++n;
    return n;
}

std::vector<std::string> changed_files(const ParsedDiff& diff)
{
    std::vector<std::string> out;
    auto add = [&](const std::string& p) {
        if (p.empty() || p == dev_null)
            return;
        if (std::find(out.begin(), out.end(), p) == out.end())
            out.push_back(p);
    };
    for (const auto& f : diff.file_changes) {
        add(f.new_path);
        add(f.old_path);
    }
    return out;
}

} // namespace cmg
