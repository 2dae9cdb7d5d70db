#include <cmg/augmenter.hpp>
#include <cmg/corpus.hpp>
#include <cmg/errors.hpp>
#include <cmg/harness.hpp>
#include <cmg/metrics.hpp>
#include <cmg/providers.hpp>
#include <cmg/retriever.hpp>
#include <cmg/tokenizer.hpp>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw cmg::Error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> read_lines(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw cmg::Error("cannot read " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

// One message per line: plain text, a JSON string, or a JSON object with a `field` member
// (results.jsonl rows and corpus records work as-is).
std::vector<std::string> read_messages(const std::string& path, const char* field)
{
    auto lines = read_lines(path);
    for (auto& line : lines) {
        if (line.empty() || (line.front() != '"' && line.front() != '{'))
            continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_string())
            line = j.get<std::string>();
        else if (j.is_object() && j.contains(field))
            line = j[field].get<std::string>();
        else if (j.is_object() && j.contains("message"))
            line = j["message"].get<std::string>();
    }
    return lines;
}

void write_text(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw cmg::Error("cannot write " + path);
    out << text;
}

struct PromptFlags {
    std::string template_path;
    std::size_t max_chars = 48000;

    void add(CLI::App* app)
    {
        app->add_option("--template", template_path, "Prompt template file");
        app->add_option("--max-prompt-chars", max_chars, "Prompt length budget in characters")->capture_default_str();
    }

    cmg::PromptTemplate load() const
    {
        return template_path.empty() ? cmg::PromptTemplate::builtin() : cmg::PromptTemplate::load(template_path);
    }
};

struct EmbedFlags {
    std::string endpoint = "mock://256";
    std::size_t dimension = 256;
    std::string model = "jina-embeddings-v2-base-code";
    std::string cache;

    void add(CLI::App* app)
    {
        app->add_option("--embed-endpoint", endpoint, "Embedding endpoint URL, or mock://<dim>")->capture_default_str();
        app->add_option("--embed-dimension", dimension, "Embedding dimension")->capture_default_str();
        app->add_option("--embed-model", model, "Embedding model identifier")->capture_default_str();
        app->add_option("--embed-cache", cache, "Embedding cache file (JSON Lines)");
    }

    std::pair<std::unique_ptr<cmg::EmbeddingService>, std::shared_ptr<cmg::EmbeddingCache>> make(std::size_t inflight = 4) const
    {
        auto cache_store = std::make_shared<cmg::EmbeddingCache>();
        if (!cache.empty())
            cache_store->load(cache);
        auto backend = cmg::make_embedder(endpoint, dimension, model);
        return {std::make_unique<cmg::EmbeddingService>(backend, cache_store, cmg::RetryPolicy{}, inflight), cache_store};
    }
};

int run(int argc, char** argv)
{
    CLI::App app{"Retrieval-augmented commit message generation toolkit"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Mine commits from a local git clone into JSON Lines");
    std::string ingest_repo_dir, ingest_branch = "HEAD", ingest_since, ingest_out, ingest_name;
    ingest->add_option("--repo", ingest_repo_dir, "Repository directory")->required();
    ingest->add_option("--branch", ingest_branch, "Branch or revision")->capture_default_str();
    ingest->add_option("--since", ingest_since, "Keep commits at or after this date (YYYY-MM-DD or ISO 8601)");
    ingest->add_option("--name", ingest_name, "Project name (owner/name); derived from origin when omitted");
    ingest->add_option("--out", ingest_out, "Output corpus file")->required();

    // filter
    auto* filter = app.add_subcommand("filter", "Preprocess messages and apply the corpus filters");
    std::string filter_in, filter_out, filter_report, filter_mode = "raw";
    filter->add_option("--in", filter_in, "Input corpus")->required();
    filter->add_option("--out", filter_out, "Filtered corpus")->required();
    filter->add_option("--report", filter_report, "Filter report JSON");
    filter->add_option("--diff-lines", filter_mode, "Diff length measure: raw or changed")
        ->check(CLI::IsMember({"raw", "changed"}))
        ->capture_default_str();

    // stats
    auto* stats = app.add_subcommand("stats", "Token length and change size statistics");
    std::string stats_in;
    stats->add_option("--in", stats_in, "Corpus file")->required();

    // tokenize
    auto* tok = app.add_subcommand("tokenize", "Print the enhanced tokenization of a text");
    std::string tok_text;
    bool tok_drop = false;
    tok->add_option("--text", tok_text, "Text to tokenize")->required();
    tok->add_flag("--drop-symbol-tokens", tok_drop, "Drop punctuation tokens");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score hypotheses against references, one message per line (text or JSON Lines)");
    std::string eval_hyp, eval_ref, eval_out;
    double eval_cider_scale = 100.0;
    evaluate->add_option("--hyp", eval_hyp, "Hypotheses file")->required();
    evaluate->add_option("--ref", eval_ref, "References file")->required();
    evaluate->add_option("--out", eval_out, "Output JSON (default stdout)");
    evaluate->add_option("--cider-scale", eval_cider_scale, "CIDEr multiplier (10 for the canonical range)")->capture_default_str();

    // index
    auto* index = app.add_subcommand("index", "Build a retrieval index from a corpus");
    std::string index_in, index_out;
    std::size_t index_workers = 4;
    EmbedFlags index_embed;
    index->add_option("--in", index_in, "Corpus file")->required();
    index->add_option("--out", index_out, "Index directory")->required();
    index->add_option("--workers", index_workers, "Embedding workers")->capture_default_str();
    index_embed.add(index);

    // retrieve
    auto* retr = app.add_subcommand("retrieve", "Top-k example pairs for a diff");
    std::string retr_index, retr_query, retr_repo, retr_exclude;
    std::size_t retr_k = 1;
    EmbedFlags retr_embed;
    retr->add_option("--index", retr_index, "Index directory")->required();
    retr->add_option("--query-diff", retr_query, "File containing the query diff")->required();
    retr->add_option("--repo", retr_repo, "Project to search (owner/name)")->required();
    retr->add_option("-k", retr_k, "Number of pairs")->capture_default_str();
    retr->add_option("--exclude-sha", retr_exclude, "Commit to leave out");
    retr_embed.add(retr);

    // prompt
    auto* prompt = app.add_subcommand("prompt", "Render the direct prompt for a diff");
    std::string prompt_diff;
    PromptFlags prompt_flags;
    prompt->add_option("--diff", prompt_diff, "Diff file")->required();
    prompt_flags.add(prompt);

    // experiment
    auto* experiment = app.add_subcommand("experiment", "Run an experiment from a JSON config");
    std::string exp_config;
    experiment->add_option("--config", exp_config, "Experiment config")->required();

    // suggest
    auto* suggest = app.add_subcommand("suggest", "Suggest a message for a diff using the repository's history");
    std::string sug_repo, sug_diff, sug_branch = "HEAD", sug_generator = "retrieval-copy", sug_gen_endpoint, sug_gen_model;
    std::size_t sug_k = 1;
    bool sug_print_prompt = false;
    EmbedFlags sug_embed;
    PromptFlags sug_prompt;
    suggest->add_option("--repo", sug_repo, "Repository directory")->required();
    suggest->add_option("--diff", sug_diff, "Diff file")->required();
    suggest->add_option("-k", sug_k, "Number of example pairs (1-5)")->capture_default_str()->check(CLI::Range(1, 5));
    suggest->add_option("--branch", sug_branch, "Branch whose history is searched")->capture_default_str();
    suggest->add_option("--generator", sug_generator, "retrieval-copy, echo-mock or provider")
        ->check(CLI::IsMember({"retrieval-copy", "echo-mock", "provider"}))
        ->capture_default_str();
    suggest->add_option("--gen-endpoint", sug_gen_endpoint, "Chat completions URL for --generator provider");
    suggest->add_option("--gen-model", sug_gen_model, "Generation model identifier");
    suggest->add_flag("--print-prompt", sug_print_prompt, "Print the augmented prompt to stderr");
    sug_embed.add(suggest);
    sug_prompt.add(suggest);

    // report
    auto* report = app.add_subcommand("report", "Comparison table over experiment outputs");
    std::string report_in, report_out;
    report->add_option("--in", report_in, "Results directory")->required();
    report->add_option("--out", report_out, "Markdown output (default stdout)");

    CLI11_PARSE(app, argc, argv);

    if (*ingest) {
        cmg::IngestOptions opts;
        opts.branch = ingest_branch;
        if (!ingest_since.empty())
            opts.since = cmg::parse_iso8601(ingest_since);
        if (!ingest_name.empty())
            opts.repo_full_name = ingest_name;
        std::ofstream out(ingest_out, std::ios::binary);
        if (!out)
            throw cmg::Error("cannot write " + ingest_out);
        std::size_t n = 0;
        cmg::ingest_repo(ingest_repo_dir, opts, [&](cmg::CommitRecord&& r) {
            nlohmann::json j = r;
            out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
            ++n;
        });
        std::cerr << "ingested " << n << " commits\n";
    } else if (*filter) {
        auto records = cmg::read_jsonl(filter_in);
        for (auto& r : records)
            r.message = cmg::preprocess_message(r.message);
        cmg::FilterConfig cfg;
        cfg.diff_length_mode = filter_mode == "raw" ? cmg::DiffLengthMode::raw_lines : cmg::DiffLengthMode::changed_lines;
        auto result = cmg::apply_filters(std::move(records), cfg);
        cmg::write_jsonl(filter_out, result.retained);
        auto report_json = cmg::to_json(result.report).dump(2) + "\n";
        if (!filter_report.empty())
            write_text(filter_report, report_json);
        else
            std::cerr << report_json;
    } else if (*stats) {
        auto records = cmg::read_jsonl(stats_in);
        std::cout << cmg::to_json(cmg::compute_stats(records)).dump(2) << '\n';
    } else if (*tok) {
        cmg::TokenizerOptions opts;
        opts.drop_symbol_tokens = tok_drop;
        std::cout << cmg::tokenize(tok_text, opts).join() << '\n';
    } else if (*evaluate) {
        auto hyps = read_messages(eval_hyp, "generated");
        auto refs = read_messages(eval_ref, "reference");
        if (hyps.size() != refs.size())
            throw cmg::Error("hypothesis and reference files have different line counts");
        std::vector<std::pair<std::string, std::string>> pairs;
        for (std::size_t i = 0; i < hyps.size(); ++i)
            pairs.emplace_back(hyps[i], refs[i]);
        cmg::EvalOptions opts;
        opts.cider_scale = eval_cider_scale;
        write_text(eval_out, cmg::to_json(cmg::evaluate_corpus(pairs, opts)).dump(2) + "\n");
    } else if (*index) {
        auto records = cmg::read_jsonl(index_in);
        auto [service, cache] = index_embed.make();
        auto built = cmg::build_index(records, *service, index_workers);
        cmg::save_index(built, index_out, {{"corpus", index_in}});
        if (!index_embed.cache.empty())
            cache->save(index_embed.cache);
        std::cerr << "indexed " << built.size() << " commits in " << built.repos().size() << " projects\n";
    } else if (*retr) {
        auto idx = cmg::load_index(retr_index);
        auto [service, cache] = retr_embed.make();
        cmg::RetrievalRequest req{read_file(retr_query), retr_k, retr_repo, std::nullopt};
        if (!retr_exclude.empty())
            req.exclude_sha = retr_exclude;
        auto result = cmg::retrieve(req, idx, *service);
        auto out = nlohmann::json::array();
        for (const auto& p : result.pairs)
            out.push_back({{"sha", p.handle.sha}, {"repo", p.handle.repo_full_name}, {"hybrid_score", p.hybrid_score}, {"message", p.message}});
        std::cout << out.dump(2) << '\n';
        if (!result.warning.empty())
            std::cerr << "warning: " << result.warning << '\n';
    } else if (*prompt) {
        std::cout << cmg::build_direct_prompt(read_file(prompt_diff), prompt_flags.load());
    } else if (*experiment) {
        auto config = cmg::ExperimentConfig::load(exp_config);
        auto results = cmg::run_configured(config);
        for (const auto& r : results)
            std::cerr << r.manifest.at("method").get<std::string>() << " k=" << r.manifest.at("k").dump() << ": "
                      << r.manifest.at("metrics").dump() << '\n';
        std::cerr << "wrote " << config.output.string() << '\n';
    } else if (*suggest) {
        auto diff = read_file(sug_diff);
        auto records = cmg::ingest_repo(sug_repo, cmg::IngestOptions{sug_branch, 0, std::nullopt});
        for (auto& r : records)
            r.message = cmg::preprocess_message(r.message);
        auto kept = cmg::apply_filters(std::move(records)).retained;
        if (kept.empty())
            throw cmg::EmptyScope("no usable commits in " + sug_repo);
        auto repo = kept.front().repo_full_name;
        auto [service, cache] = sug_embed.make();
        auto idx = cmg::build_index(kept, *service);
        if (!sug_embed.cache.empty())
            cache->save(sug_embed.cache);

        auto result = cmg::retrieve(cmg::RetrievalRequest{diff, sug_k, repo, std::nullopt}, idx, *service);
        if (result.pairs.empty())
            throw cmg::EmptyScope("no admissible example pair in " + repo);
        cmg::PromptOptions popts;
        popts.max_chars = sug_prompt.max_chars;
        auto rendered = cmg::build_rag_prompt(diff, result.pairs, sug_prompt.load(), popts);
        if (sug_print_prompt)
            std::cerr << rendered.text << '\n';

        std::string message;
        if (sug_generator == "retrieval-copy") {
            message = result.pairs.front().message;
        } else {
            cmg::GenerationConfig gcfg;
            gcfg.endpoint = sug_gen_endpoint;
            gcfg.model = sug_gen_model;
            std::shared_ptr<cmg::Generator> gen;
            if (sug_generator == "provider") {
                if (sug_gen_endpoint.empty())
                    throw cmg::ConfigError("--gen-endpoint is required with --generator provider");
                const char* key = std::getenv("CORACMG_GEN_KEY");
                gen = std::make_shared<cmg::HttpGenerator>(cmg::HttpEndpoint{sug_gen_endpoint, key ? key : ""});
            } else {
                gen = std::make_shared<cmg::EchoGenerator>();
            }
            cmg::GenerationRequest greq{rendered.text, {result.pairs.begin(), result.pairs.begin() + static_cast<std::ptrdiff_t>(rendered.examples_used)}};
            message = cmg::generate(*gen, greq, gcfg);
        }
        std::cout << message << '\n';
    } else if (*report) {
        auto manifests = cmg::load_manifests(report_in);
        write_text(report_out, cmg::render_report(manifests));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
