#include <cmg/errors.hpp>
#include <cmg/retriever.hpp>

#include <array>
#include <cstring>
#include <fstream>
#include <set>

namespace cmg {

namespace {

constexpr std::array<char, 4> vectors_magic{'C', 'M', 'G', 'V'};
constexpr std::array<char, 4> lexical_magic{'C', 'M', 'G', 'L'};
constexpr std::uint32_t format_version = 1;

class Writer {
public:
    explicit Writer(const std::filesystem::path& path)
        : m_out(path, std::ios::binary), m_path(path)
    {
        if (!m_out)
            throw Error("cannot write " + path.string());
    }

    void bytes(const void* data, std::size_t n) { m_out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n)); }

    void u32(std::uint32_t v)
    {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i)
            b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 4);
    }

    void u64(std::uint64_t v)
    {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i)
            b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 8);
    }

    void f32(float f)
    {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        u32(bits);
    }

    void str(const std::string& s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

    void close()
    {
        m_out.close();
        if (!m_out)
            throw Error("failed writing " + m_path.string());
    }

private:
    std::ofstream m_out;
    std::filesystem::path m_path;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path)
        : m_path(path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw Error("cannot open " + path.string());
        m_data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    void need(std::size_t n) const
    {
        if (m_pos + n > m_data.size())
            throw Error("truncated index file " + m_path.string());
    }

    void magic(const std::array<char, 4>& expected)
    {
        need(4);
        if (std::memcmp(m_data.data() + m_pos, expected.data(), 4) != 0)
            throw Error("bad magic in " + m_path.string());
        m_pos += 4;
    }

    std::uint32_t u32()
    {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(m_data[m_pos + static_cast<std::size_t>(i)])) << (8 * i);
        m_pos += 4;
        return v;
    }

    std::uint64_t u64()
    {
        std::uint64_t lo = u32();
        std::uint64_t hi = u32();
        return lo | (hi << 32);
    }

    float f32()
    {
        auto bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }

    std::string str()
    {
        auto n = u32();
        need(n);
        std::string s(m_data.data() + m_pos, n);
        m_pos += n;
        return s;
    }

    bool done() const { return m_pos == m_data.size(); }

private:
    std::filesystem::path m_path;
    std::string m_data;
    std::size_t m_pos = 0;
};

} // namespace

class IndexReader {
public:
    static void save(const RetrievalIndex& index, const std::filesystem::path& dir, const nlohmann::json& extra)
    {
        std::filesystem::create_directories(dir);
        auto count = index.size();

        Writer vectors(dir / "vectors.bin");
        vectors.bytes(vectors_magic.data(), 4);
        vectors.u32(format_version);
        vectors.u32(static_cast<std::uint32_t>(count));
        vectors.u32(static_cast<std::uint32_t>(index.dimension()));

        Writer lexical(dir / "lexical.bin");
        lexical.bytes(lexical_magic.data(), 4);
        lexical.u32(format_version);
        lexical.u32(static_cast<std::uint32_t>(count));

        auto partitions = nlohmann::json::array();
        for (const auto& [repo, part] : index.m_partitions) {
            partitions.push_back({{"repo", repo}, {"count", part.size()}, {"vocabulary", part.vocabulary_size()}, {"average_length", part.average_length()}});
            for (std::size_t row = 0; row < part.size(); ++row) {
                for (float f : part.vector(row))
                    vectors.f32(f);
                const auto& doc = part.doc(row);
                lexical.str(doc.sha);
                lexical.str(doc.repo_full_name);
                lexical.u64(static_cast<std::uint64_t>(doc.date));
                lexical.str(doc.message);
                lexical.str(doc.diff);
                auto terms = part.terms(row);
                lexical.u32(static_cast<std::uint32_t>(terms.size()));
                for (const auto& tc : terms) {
                    lexical.str(part.term(tc.term));
                    lexical.u32(tc.count);
                }
            }
        }
        vectors.close();
        lexical.close();

        nlohmann::json manifest = {
            {"format", "cmg-index"},
            {"version", format_version},
            {"count", count},
            {"dimension", index.dimension()},
            {"embed_model", index.embed_model()},
            {"bm25", {{"k1", index.bm25().k1}, {"b", index.bm25().b}}},
            {"tokenizer", {{"drop_symbol_tokens", index.tokenizer().drop_symbol_tokens}}},
            {"partitions", partitions},
        };
        if (extra.is_object())
            manifest["extra"] = extra;
        std::ofstream out(dir / "manifest.json");
        out << manifest.dump(2) << '\n';
    }

    static RetrievalIndex load(const std::filesystem::path& dir)
    {
        std::ifstream mf(dir / "manifest.json");
        if (!mf)
            throw Error("missing manifest.json in " + dir.string());
        auto manifest = nlohmann::json::parse(mf);
        if (manifest.value("format", "") != "cmg-index" || manifest.value("version", 0u) != format_version)
            throw Error("unsupported index format in " + dir.string());

        RetrievalIndex index;
        index.m_dimension = manifest.at("dimension").get<std::size_t>();
        index.m_bm25.k1 = manifest.at("bm25").at("k1").get<double>();
        index.m_bm25.b = manifest.at("bm25").at("b").get<double>();
        index.m_tokenizer.drop_symbol_tokens = manifest.at("tokenizer").at("drop_symbol_tokens").get<bool>();
        index.m_embed_model = manifest.value("embed_model", "");

        Reader vectors(dir / "vectors.bin");
        vectors.magic(vectors_magic);
        if (vectors.u32() != format_version)
            throw Error("unsupported vectors.bin version");
        auto count = vectors.u32();
        auto dim = vectors.u32();
        if (dim != index.m_dimension || count != manifest.at("count").get<std::uint32_t>())
            throw Error("vectors.bin header disagrees with manifest.json");

        Reader lexical(dir / "lexical.bin");
        lexical.magic(lexical_magic);
        if (lexical.u32() != format_version)
            throw Error("unsupported lexical.bin version");
        if (lexical.u32() != count)
            throw Error("lexical.bin count disagrees with manifest.json");

        struct PendingTerms {
            std::vector<std::pair<std::string, std::uint32_t>> terms;
        };
        std::map<std::string, std::vector<PendingTerms>> pending;

        for (std::uint32_t i = 0; i < count; ++i) {
            IndexedDoc doc;
            doc.sha = lexical.str();
            doc.repo_full_name = lexical.str();
            doc.date = static_cast<Timestamp>(lexical.u64());
            doc.message = lexical.str();
            doc.diff = lexical.str();
            PendingTerms pt;
            auto n_terms = lexical.u32();
            pt.terms.reserve(n_terms);
            for (std::uint32_t t = 0; t < n_terms; ++t) {
                auto term = lexical.str();
                auto c = lexical.u32();
                pt.terms.emplace_back(std::move(term), c);
            }

            auto& part = index.m_partitions[doc.repo_full_name];
            part.m_repo = doc.repo_full_name;
            part.m_dimension = dim;
            for (std::uint32_t d = 0; d < dim; ++d)
                part.m_vectors.push_back(vectors.f32());
            pending[doc.repo_full_name].push_back(std::move(pt));
            part.m_docs.push_back(std::move(doc));
        }
        if (!vectors.done() || !lexical.done())
            throw Error("trailing bytes in index files");

        for (auto& [repo, part] : index.m_partitions) {
            std::set<std::string> vocabulary;
            for (const auto& pt : pending[repo])
                for (const auto& [term, _] : pt.terms)
                    vocabulary.insert(term);
            part.m_terms.assign(vocabulary.begin(), vocabulary.end());
            std::unordered_map<std::string, std::uint32_t> ids;
            for (std::uint32_t id = 0; id < part.m_terms.size(); ++id)
                ids.emplace(part.m_terms[id], id);
            for (const auto& pt : pending[repo]) {
                std::vector<TermCount> terms;
                for (const auto& [term, c] : pt.terms)
                    terms.push_back({ids.at(term), c});
                std::sort(terms.begin(), terms.end(), [](const TermCount& a, const TermCount& b) { return a.term < b.term; });
                part.m_doc_terms.push_back(std::move(terms));
            }
            part.finalize_statistics();
        }
        return index;
    }
};

void save_index(const RetrievalIndex& index, const std::filesystem::path& dir, const nlohmann::json& extra_manifest)
{
    IndexReader::save(index, dir, extra_manifest);
}

RetrievalIndex load_index(const std::filesystem::path& dir)
{
    return IndexReader::load(dir);
}

} // namespace cmg
