#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "hypercl/error.hpp"
#include "hypercl/numeric.hpp"
#include "hypercl/random.hpp"

namespace hypercl {

/// Lowercased whitespace tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char ch : text) {
        if (std::isspace(ch)) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(static_cast<char>(std::tolower(ch)));
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

/// Signed feature hashing into `dim` buckets, L2-normalized. Empty text maps to e_0.
inline Vector hash_encode(std::string_view text, std::size_t dim, std::uint64_t seed) {
    if (dim < 2) throw DomainError("hash_encode: dim must be >= 2");
    Vector out(dim);
    const std::uint64_t sign_key = seed ^ 0xA5A5A5A5DEADBEEFULL;
    for (const auto& token : tokenize(text)) {
        const std::uint64_t bucket = stable_hash64(token, seed) % dim;
        const bool negative = (stable_hash64(token, sign_key) >> 63) != 0;
        out[bucket] += negative ? -1.0 : 1.0;
    }
    const double n = norm(out);
    if (n == 0.0) {
        // Empty text, or every bucket cancelled out.
        Vector e0(dim);
        e0[0] = 1.0;
        return e0;
    }
    return scaled(out, 1.0 / n);
}

/// Exact-string keyed map of precomputed embeddings, all of one dimension.
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    explicit EmbeddingStore(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool contains(const std::string& text) const { return entries_.count(text) != 0; }

    /// Throws on dimension mismatch or duplicate text.
    void insert(const std::string& text, Vector v) {
        if (dim_ == 0) dim_ = v.dim();
        if (v.dim() != dim_) {
            throw DimensionError("embedding for \"" + text + "\" has dim " + std::to_string(v.dim()) +
                                 ", store dim is " + std::to_string(dim_));
        }
        if (!v.all_finite()) throw FormatError("embedding for \"" + text + "\" is not finite");
        auto [it, inserted] = entries_.emplace(text, std::move(v));
        if (!inserted) throw FormatError("duplicate embedding text: \"" + text + "\"");
        order_.push_back(it->first);
    }

    const Vector& at(const std::string& text) const {
        auto it = entries_.find(text);
        if (it == entries_.end()) throw MissingEmbeddingError(text);
        return it->second;
    }

    /// Texts in insertion order.
    const std::vector<std::string>& texts() const noexcept { return order_; }

    friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
        return a.dim_ == b.dim_ && a.entries_ == b.entries_;
    }

private:
    std::size_t dim_ = 0;
    std::unordered_map<std::string, Vector> entries_;
    std::vector<std::string> order_;
};

inline void save_embeddings(const EmbeddingStore& store, std::ostream& os) {
    for (const auto& text : store.texts()) {
        const Vector& v = store.at(text);
        nlohmann::json row;
        row["text"] = text;
        auto& arr = row["embedding"] = nlohmann::json::array();
        for (double x : v) arr.push_back(static_cast<float>(x));
        os << row.dump() << '\n';
    }
}

inline void save_embeddings(const EmbeddingStore& store, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open for writing: " + path);
    save_embeddings(store, os);
}

/// Parse the embedding JSONL format. Floats are read as 32-bit and widened.
inline EmbeddingStore load_embeddings(std::istream& is, const std::string& source = "<stream>") {
    EmbeddingStore store;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = [&] { return source + ":" + std::to_string(lineno) + ": "; };
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(where() + "malformed JSON: " + e.what());
        }
        if (!row.is_object() || !row.contains("text") || !row["text"].is_string() ||
            !row.contains("embedding") || !row["embedding"].is_array() || row["embedding"].empty()) {
            throw FormatError(where() + "expected {\"text\": string, \"embedding\": [number, ...]}");
        }
        std::vector<double> values;
        values.reserve(row["embedding"].size());
        for (const auto& x : row["embedding"]) {
            if (!x.is_number()) throw FormatError(where() + "non-numeric embedding entry");
            values.push_back(static_cast<double>(x.get<float>()));
        }
        if (store.size() > 0 && values.size() != store.dim()) {
            throw FormatError(where() + "inconsistent dimension " + std::to_string(values.size()) +
                              " (expected " + std::to_string(store.dim()) + ")");
        }
        const auto text = row["text"].get<std::string>();
        if (store.contains(text)) throw FormatError(where() + "duplicate text \"" + text + "\"");
        try {
            store.insert(text, Vector(std::move(values)));
        } catch (const Error& e) {
            throw FormatError(where() + e.what());
        }
    }
    return store;
}

inline EmbeddingStore load_embeddings(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open embeddings file: " + path);
    return load_embeddings(is, path);
}

enum class EncoderKind { store, hashing };

/// Frozen embedding source f. Immutable after construction.
class EncoderProvider {
public:
    static EncoderProvider from_store(std::shared_ptr<const EmbeddingStore> store) {
        if (!store || store->dim() == 0) throw DomainError("encoder provider: empty store");
        EncoderProvider p;
        p.kind_ = EncoderKind::store;
        p.dim_ = store->dim();
        p.store_ = std::move(store);
        return p;
    }

    static EncoderProvider from_store(EmbeddingStore store) {
        return from_store(std::make_shared<const EmbeddingStore>(std::move(store)));
    }

    static EncoderProvider hashing(std::size_t dim, std::uint64_t seed) {
        if (dim < 2) throw DomainError("hashing provider: dim must be >= 2");
        EncoderProvider p;
        p.kind_ = EncoderKind::hashing;
        p.dim_ = dim;
        p.seed_ = seed;
        return p;
    }

    EncoderKind kind() const noexcept { return kind_; }
    std::size_t dim() const noexcept { return dim_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const EmbeddingStore* store() const noexcept { return store_.get(); }

    Vector embed(const std::string& text) const {
        if (kind_ == EncoderKind::hashing) return hash_encode(text, dim_, seed_);
        return store_->at(text);
    }

private:
    EncoderProvider() = default;

    EncoderKind kind_ = EncoderKind::hashing;
    std::size_t dim_ = 0;
    std::uint64_t seed_ = 0;
    std::shared_ptr<const EmbeddingStore> store_;
};

}  // namespace hypercl
