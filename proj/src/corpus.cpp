#include <cmg/corpus.hpp>
#include <cmg/diff.hpp>
#include <cmg/errors.hpp>
#include <cmg/tokenizer.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <iostream>
#include <memory>
#include <numeric>
#include <regex>

#include <sys/wait.h>

namespace cmg {

namespace {

struct CommandOutput {
    int status = -1;
    std::string out;
};

std::string shell_quote(std::string_view arg)
{
    std::string q = "'";
    for (char c : arg) {
        if (c == '\'')
            q += "'\\''";
        else
            q += c;
    }
    q += '\'';
    return q;
}

CommandOutput run_git(const std::filesystem::path& dir, const std::vector<std::string>& args)
{
    std::string cmd = "git -C " + shell_quote(dir.string());
    for (const auto& a : args)
        cmd += ' ' + shell_quote(a);
    cmd += " 2>/dev/null";

    CommandOutput result;
    std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
    if (!pipe)
        throw Error("failed to spawn git");
    char buf[1 << 16];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe.get())) > 0)
        result.out.append(buf, n);
    int raw = pclose(pipe.release());
    result.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return result;
}

std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string lowercase(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string extension_of(std::string_view path)
{
    auto slash = path.find_last_of('/');
    auto name = slash == std::string_view::npos ? path : path.substr(slash + 1);
    auto dot = name.find_last_of('.');
    if (dot == std::string_view::npos || dot == 0)
        return {};
    return lowercase(name.substr(dot));
}

bool has_source_file(const CommitRecord& record, const FilterConfig& config)
{
    return std::any_of(record.files.begin(), record.files.end(), [&](const std::string& f) {
        if (config.source_extensions.empty())
            return language_for_path(f) != Language::other;
        return config.source_extensions.count(extension_of(f)) > 0;
    });
}

// Lowercased alphanumeric words; "merged-cell" yields "merged" and "cell".
bool contains_keyword(std::string_view message, const std::vector<std::string>& keywords)
{
    std::string lower = lowercase(message);
    std::size_t i = 0;
    while (i < lower.size()) {
        while (i < lower.size() && !std::isalnum(static_cast<unsigned char>(lower[i])))
            ++i;
        std::size_t start = i;
        while (i < lower.size() && std::isalnum(static_cast<unsigned char>(lower[i])))
            ++i;
        if (i > start) {
            std::string_view word(lower.data() + start, i - start);
            if (std::find(keywords.begin(), keywords.end(), word) != keywords.end())
                return true;
        }
    }
    return false;
}

LengthSummary summarize(const std::vector<std::size_t>& values)
{
    LengthSummary s;
    double sum = 0;
    for (auto v : values)
        sum += static_cast<double>(v);
    s.mean = sum / static_cast<double>(values.size());
    s.max = *std::max_element(values.begin(), values.end());
    s.median = lower_median(values);
    return s;
}

} // namespace

std::string derive_repo_name(const std::filesystem::path& git_dir)
{
    auto url = trim(run_git(git_dir, {"config", "--get", "remote.origin.url"}).out);
    if (!url.empty()) {
        if (url.size() > 4 && url.substr(url.size() - 4) == ".git")
            url.resize(url.size() - 4);
        while (!url.empty() && url.back() == '/')
            url.pop_back();
        auto last = url.find_last_of("/:");
        if (last != std::string::npos) {
            auto owner_end = last;
            auto owner_start = url.find_last_of("/:", owner_end - 1);
            auto owner = url.substr(owner_start == std::string::npos ? 0 : owner_start + 1, owner_end - (owner_start == std::string::npos ? 0 : owner_start + 1));
            auto name = url.substr(last + 1);
            if (!owner.empty() && !name.empty())
                return owner + "/" + name;
        }
    }
    auto abs = std::filesystem::absolute(git_dir).lexically_normal();
    auto name = abs.filename().string();
    if (name.empty())
        name = abs.parent_path().filename().string();
    return "local/" + name;
}

void ingest_repo(const std::filesystem::path& git_dir, const IngestOptions& options,
                 const std::function<void(CommitRecord&&)>& sink)
{
    std::error_code ec;
    if (!std::filesystem::is_directory(git_dir, ec) || run_git(git_dir, {"rev-parse", "--git-dir"}).status != 0)
        throw RepoNotFound("not a git repository: " + git_dir.string());
    if (run_git(git_dir, {"rev-parse", "--verify", "--quiet", options.branch + "^{commit}"}).status != 0)
        throw BranchNotFound("branch not found: " + options.branch);

    std::string repo = options.repo_full_name ? *options.repo_full_name : derive_repo_name(git_dir);

    auto log = run_git(git_dir, {"-c", "core.quotepath=off", "-c", "diff.noprefix=false", "-c", "diff.mnemonicPrefix=false",
                                 "log", options.branch, "--no-merges", "--no-color", "--no-ext-diff", "--no-textconv", "-M",
                                 "--patch", "--format=%x1e%H%x1f%an%x1f%ct%x1f%B%x1f", "--"});
    if (log.status != 0)
        throw Error("git log failed in " + git_dir.string());

    std::string_view all = log.out;
    std::size_t pos = all.find('\x1e');
    while (pos != std::string_view::npos) {
        std::size_t next = all.find('\x1e', pos + 1);
        std::string_view chunk = all.substr(pos + 1, next == std::string_view::npos ? std::string_view::npos : next - pos - 1);
        pos = next;

        std::array<std::string_view, 4> fields;
        std::size_t start = 0;
        bool ok = true;
        for (auto& field : fields) {
            auto sep = chunk.find('\x1f', start);
            if (sep == std::string_view::npos) {
                ok = false;
                break;
            }
            field = chunk.substr(start, sep - start);
            start = sep + 1;
        }
        if (!ok)
            continue;

        CommitRecord record;
        record.sha = std::string(fields[0]);
        record.author_name = std::string(fields[1]);
        record.date = std::stoll(std::string(fields[2]));
        if (record.date < options.since)
            continue;
        std::string message(fields[3]);
        while (!message.empty() && message.back() == '\n')
            message.pop_back();
        record.message = std::move(message);
        record.repo_full_name = repo;

        auto diff = chunk.substr(start);
        while (!diff.empty() && diff.front() == '\n')
            diff.remove_prefix(1);
        if (diff.empty())
            continue; // empty commit: nothing to describe
        record.diff = std::string(diff);
        try {
            auto parsed = parse_diff(record.diff);
            record.loc = count_loc(parsed);
            record.files = changed_files(parsed);
        } catch (const MalformedDiff& e) {
            std::cerr << "warning: skipping " << record.sha << ": " << e.what() << '\n';
            continue;
        }
        sink(std::move(record));
    }
}

std::vector<CommitRecord> ingest_repo(const std::filesystem::path& git_dir, const IngestOptions& options)
{
    std::vector<CommitRecord> out;
    ingest_repo(git_dir, options, [&](CommitRecord&& r) { out.push_back(std::move(r)); });
    return out;
}

std::string preprocess_message(std::string_view raw)
{
    auto eol = raw.find('\n');
    std::string line(raw.substr(0, eol));

    static const std::regex pr_paren(R"(\(#[0-9]+\))");
    static const std::regex pr_bare(R"(#[0-9]+)");
    line = std::regex_replace(line, pr_paren, " ");
    line = std::regex_replace(line, pr_bare, " ");

    std::string out;
    bool pending_space = false;
    for (char c : line) {
        if (c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f') {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty())
            out += ' ';
        pending_space = false;
        out += c;
    }
    return out;
}

std::size_t FilterReport::total_rejected() const
{
    return std::accumulate(rejected.begin(), rejected.end(), std::size_t{0});
}

FilterReport& FilterReport::operator+=(const FilterReport& other)
{
    input_count += other.input_count;
    for (std::size_t i = 0; i < filter_rule_count; ++i)
        rejected[i] += other.rejected[i];
    retained_count += other.retained_count;
    return *this;
}

nlohmann::json to_json(const FilterReport& report)
{
    nlohmann::json j;
    j["input"] = report.input_count;
    for (std::size_t i = 0; i < filter_rule_count; ++i)
        j["rejected_r" + std::to_string(i + 1)] = report.rejected[i];
    j["retained"] = report.retained_count;
    return j;
}

std::size_t word_count(std::string_view message)
{
    std::size_t n = 0;
    bool in_word = false;
    for (char c : message) {
        bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
        if (!space && !in_word)
            ++n;
        in_word = !space;
    }
    return n;
}

std::optional<FilterRule> first_failing_rule(const CommitRecord& record, const FilterConfig& config)
{
    auto words = word_count(record.message);
    if (words < config.min_words || words > config.max_words)
        return FilterRule::r1_message_length;

    auto diff_lines = config.diff_length_mode == DiffLengthMode::raw_lines ? diff_line_count(record.diff) : record.loc;
    if (diff_lines > config.max_diff_lines)
        return FilterRule::r2_diff_length;

    if (!has_source_file(record, config))
        return FilterRule::r3_file_type;

    if (lowercase(record.author_name).find(lowercase(config.bot_marker)) != std::string::npos)
        return FilterRule::r4_bot_author;

    if (contains_keyword(record.message, config.rejected_keywords))
        return FilterRule::r5_merge_revert;

    return std::nullopt;
}

FilterResult apply_filters(std::vector<CommitRecord> records, const FilterConfig& config, Execution exec)
{
    // -1 retained, otherwise the index of the first failing rule
    std::vector<int> verdicts(records.size(), -1);
    auto n = static_cast<std::ptrdiff_t>(records.size());
    auto classify = [&](std::ptrdiff_t i) {
        auto rule = first_failing_rule(records[static_cast<std::size_t>(i)], config);
        verdicts[static_cast<std::size_t>(i)] = rule ? static_cast<int>(*rule) : -1;
    };
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 64)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            classify(i);
    } else {
        for (std::ptrdiff_t i = 0; i < n; ++i)
            classify(i);
    }

    FilterResult result;
    result.report.input_count = records.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (verdicts[i] < 0) {
            result.retained.push_back(std::move(records[i]));
            ++result.report.retained_count;
        } else {
            ++result.report.rejected[static_cast<std::size_t>(verdicts[i])];
        }
    }
    return result;
}

nlohmann::json to_json(const CorpusStats& stats)
{
    auto summary = [](const LengthSummary& s) { return nlohmann::json{{"mean", s.mean}, {"max", s.max}, {"median", s.median}}; };
    return nlohmann::json{
        {"diff_tokens", summary(stats.diff_tokens)},
        {"message_tokens", summary(stats.message_tokens)},
        {"median_files", stats.median_files},
        {"median_changed_lines", stats.median_changed_lines},
    };
}

std::size_t lower_median(std::vector<std::size_t> values)
{
    if (values.empty())
        throw EmptyCorpus("median of an empty set");
    auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
    std::nth_element(values.begin(), mid, values.end());
    return *mid;
}

CorpusStats compute_stats(const std::vector<CommitRecord>& records, Execution exec)
{
    if (records.empty())
        throw EmptyCorpus("cannot compute statistics of an empty corpus");

    std::vector<std::size_t> diff_tokens(records.size()), message_tokens(records.size()), files(records.size()), lines(records.size());
    auto n = static_cast<std::ptrdiff_t>(records.size());
    auto measure = [&](std::ptrdiff_t si) {
        auto i = static_cast<std::size_t>(si);
        diff_tokens[i] = tokenize(records[i].diff).size();
        message_tokens[i] = tokenize(records[i].message).size();
        files[i] = records[i].files.size();
        lines[i] = records[i].loc;
    };
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            measure(i);
    } else {
        for (std::ptrdiff_t i = 0; i < n; ++i)
            measure(i);
    }

    CorpusStats stats;
    stats.diff_tokens = summarize(diff_tokens);
    stats.message_tokens = summarize(message_tokens);
    stats.median_files = lower_median(files);
    stats.median_changed_lines = lower_median(lines);
    return stats;
}

} // namespace cmg
