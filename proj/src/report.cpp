#include <cmg/errors.hpp>
#include <cmg/harness.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace cmg {

namespace {

constexpr std::array<std::pair<std::string_view, std::string_view>, 4> metric_columns{{
    {"bleu", "BLEU"},
    {"rouge_l", "ROUGE-L"},
    {"meteor", "METEOR"},
    {"cider", "CIDEr"},
}};

std::string fixed2(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string run_label(const nlohmann::json& m)
{
    std::string label = m.at("method").get<std::string>();
    if (!m["k"].is_null())
        label += " k=" + std::to_string(m["k"].get<std::size_t>());
    return label;
}

double metric(const nlohmann::json& m, std::string_view key)
{
    return m.at("metrics").at(std::string(key)).get<double>();
}

} // namespace

std::string relative_change(double value, double baseline)
{
    if (baseline == 0.0)
        return {};
    long pct = std::lround(100.0 * (value - baseline) / baseline);
    if (pct < 0)
        return "↓" + std::to_string(-pct) + "%";
    return "↑" + std::to_string(pct) + "%";
}

std::string render_report(std::span<const nlohmann::json> manifests)
{
    if (manifests.empty())
        throw Error("no experiment manifests to report");
    const auto& subset = manifests.front().at("subset_hash");
    for (const auto& m : manifests)
        if (m.at("subset_hash") != subset)
            throw ManifestMismatch("runs were made on different subsets (" + subset.get<std::string>() + " vs " +
                                   m.at("subset_hash").get<std::string>() + ")");

    const nlohmann::json* baseline = nullptr;
    for (const auto& m : manifests)
        if (m.at("method") == "direct") {
            baseline = &m;
            break;
        }

    std::ostringstream out;
    out << "# Results\n\n";
    out << "Subset " << subset.get<std::string>() << ", " << manifests.front().at("subset_size").get<std::size_t>() << " commits, seed "
        << manifests.front().at("seed").get<std::uint64_t>() << ".\n\n";
    out << "| Method | Generator |";
    for (const auto& [_, title] : metric_columns)
        out << ' ' << title << " |";
    out << " OK | Failed |\n|---|---|";
    for (std::size_t i = 0; i < metric_columns.size(); ++i)
        out << "---:|";
    out << "---:|---:|\n";
    for (const auto& m : manifests) {
        out << "| " << run_label(m) << " | " << m.at("generator").get<std::string>() << " |";
        for (const auto& [key, _] : metric_columns) {
            double v = metric(m, key);
            out << ' ' << fixed2(v);
            if (baseline && &m != baseline) {
                auto change = relative_change(v, metric(*baseline, key));
                if (!change.empty())
                    out << " (" << change << ')';
            }
            out << " |";
        }
        out << ' ' << m.at("counts").at("ok").get<std::size_t>() << " | " << m.at("counts").at("failed").get<std::size_t>() << " |\n";
    }

    std::vector<const nlohmann::json*> series;
    for (const auto& m : manifests)
        if (m.at("method") == "rag")
            series.push_back(&m);
    std::stable_sort(series.begin(), series.end(), [](const nlohmann::json* a, const nlohmann::json* b) {
        return std::make_pair(a->at("generator").get<std::string>(), a->at("k").get<std::size_t>()) <
               std::make_pair(b->at("generator").get<std::string>(), b->at("k").get<std::size_t>());
    });
    if (!series.empty()) {
        out << "\n## Scores by number of example pairs\n\n| Generator | k |";
        for (const auto& [_, title] : metric_columns)
            out << ' ' << title << " |";
        out << "\n|---|---:|";
        for (std::size_t i = 0; i < metric_columns.size(); ++i)
            out << "---:|";
        out << '\n';
        for (const auto* m : series) {
            out << "| " << m->at("generator").get<std::string>() << " | " << m->at("k").get<std::size_t>() << " |";
            for (const auto& [key, _] : metric_columns)
                out << ' ' << fixed2(metric(*m, key)) << " |";
            out << '\n';
        }
    }
    return out.str();
}

} // namespace cmg
