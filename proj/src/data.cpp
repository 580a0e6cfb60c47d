#include "data.hpp"
#include "rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace ptlab {

using json = nlohmann::json;

// ---- tokenizer ----

std::vector<int32_t> tokenizer::encode(std::string_view text) {
    std::vector<int32_t> out;
    out.reserve(text.size());
    for (unsigned char c : text) out.push_back((int32_t) c);
    return out;
}

const char * tokenizer::control_name(int32_t id) {
    switch (id) {
        case seq_start:   return "<|seq_start|>";
        case seq_end:     return "<|seq_end|>";
        case instr_start: return "<|instr_start|>";
        case instr_end:   return "<|instr_end|>";
        case resp_start:  return "<|resp_start|>";
        case resp_end:    return "<|resp_end|>";
        default:          return nullptr;
    }
}

std::string tokenizer::decode(const std::vector<int32_t> & tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int32_t id : tokens) {
        if (id >= 0 && id < 256) {
            out.push_back((char) (unsigned char) id);
        } else if (const char * name = control_name(id)) {
            out += name;
        } else {
            throw_data("decode: unknown token id " + std::to_string(id));
        }
    }
    return out;
}

// ---- chat rendering ----

void validate_chat(const std::vector<message> & messages, bool must_end_assistant) {
    if (messages.empty()) throw error(errc::argument, "chat: empty conversation");
    for (size_t i = 0; i < messages.size(); i++) {
        const std::string & role = messages[i].role;
        if (role != "user" && role != "assistant") {
            throw error(errc::argument, "chat: unknown role '" + role + "' at message " + std::to_string(i));
        }
        const char * expect = i % 2 == 0 ? "user" : "assistant";
        if (role != expect) {
            throw error(errc::argument, "chat: message " + std::to_string(i) + " must be from " + expect +
                        ", got " + role);
        }
    }
    if (must_end_assistant && messages.back().role != "assistant") {
        throw error(errc::argument, "chat: conversation must end with an assistant turn");
    }
}

rendered_chat render_chat(const std::vector<message> & messages) {
    validate_chat(messages, true);
    rendered_chat out;
    out.tokens.push_back(tokenizer::seq_start);
    out.mask.push_back(0);
    for (const message & msg : messages) {
        const bool assistant = msg.role == "assistant";
        const size_t begin = out.tokens.size();
        out.tokens.push_back(assistant ? tokenizer::resp_start : tokenizer::instr_start);
        out.mask.push_back(0);
        for (int32_t tok : tokenizer::encode(msg.content)) {
            out.tokens.push_back(tok);
            out.mask.push_back(assistant ? 1 : 0);
        }
        out.tokens.push_back(assistant ? tokenizer::resp_end : tokenizer::instr_end);
        out.mask.push_back(assistant ? 1 : 0);
        out.spans.emplace_back(begin, out.tokens.size());
    }
    return out;
}

rendered_example render_instruction(const instruction_record & rec, int64_t id) {
    rendered_chat rc = render_chat(rec.messages);
    rendered_example ex;
    ex.id = id;
    ex.tokens = std::move(rc.tokens);
    ex.mask = std::move(rc.mask);
    ex.weight = rec.weight;
    return ex;
}

// ---- JSONL IO ----

namespace {

json parse_line(const std::string & path, int64_t lineno, const std::string & line) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw_data(path + ":" + std::to_string(lineno) + ": malformed JSON");
    if (!j.is_object()) throw_data(path + ":" + std::to_string(lineno) + ": expected a JSON object");
    return j;
}

std::string where(const std::string & path, int64_t lineno) {
    return path + ":" + std::to_string(lineno) + ": ";
}

std::vector<message> parse_messages(const json & arr, const std::string & ctx) {
    if (!arr.is_array() || arr.empty()) throw_data(ctx + "messages must be a non-empty array");
    std::vector<message> out;
    out.reserve(arr.size());
    for (const json & m : arr) {
        if (!m.is_object() || !m.contains("role") || !m.contains("content") ||
            !m["role"].is_string() || !m["content"].is_string()) {
            throw_data(ctx + "each message needs string 'role' and 'content'");
        }
        out.push_back({m["role"].get<std::string>(), m["content"].get<std::string>()});
    }
    return out;
}

template <typename Fn>
void for_each_line(const std::string & path, Fn && fn) {
    std::ifstream f(path);
    if (!f) throw_data("cannot open " + path);
    std::string line;
    int64_t lineno = 0;
    while (std::getline(f, line)) {
        lineno++;
        if (line.empty()) continue;
        fn(lineno, line);
    }
}

} // namespace

std::vector<instruction_record> load_instructions(const std::string & path) {
    std::vector<instruction_record> out;
    for_each_line(path, [&](int64_t lineno, const std::string & line) {
        const json j = parse_line(path, lineno, line);
        const std::string ctx = where(path, lineno);
        instruction_record rec;
        if (!j.contains("messages")) throw_data(ctx + "missing 'messages'");
        rec.messages = parse_messages(j["messages"], ctx);
        try {
            validate_chat(rec.messages, true);
        } catch (const error & e) {
            throw_data(ctx + e.what());
        }
        if (j.contains("weight")) {
            if (!j["weight"].is_number()) throw_data(ctx + "'weight' must be a number");
            rec.weight = j["weight"].get<double>();
        }
        if (!(rec.weight > 0.0) || rec.weight > 1.0) {
            throw_data(ctx + "weight " + std::to_string(rec.weight) + " outside (0, 1]");
        }
        if (j.contains("category")) {
            if (!j["category"].is_string()) throw_data(ctx + "'category' must be a string");
            rec.category = j["category"].get<std::string>();
        }
        out.push_back(std::move(rec));
    });
    if (out.empty()) throw_data(path + ": no instruction records");
    return out;
}

std::vector<preference_record> load_preferences(const std::string & path) {
    std::vector<preference_record> out;
    for_each_line(path, [&](int64_t lineno, const std::string & line) {
        const json j = parse_line(path, lineno, line);
        const std::string ctx = where(path, lineno);
        preference_record rec;
        if (!j.contains("prompt")) throw_data(ctx + "missing 'prompt'");
        rec.prompt = parse_messages(j["prompt"], ctx);
        try {
            validate_chat(rec.prompt, false);
        } catch (const error & e) {
            throw_data(ctx + e.what());
        }
        if (rec.prompt.back().role != "user") throw_data(ctx + "prompt must end with a user turn");
        for (const char * key : {"chosen", "rejected"}) {
            if (!j.contains(key) || !j[key].is_string()) throw_data(ctx + "missing string '" + key + "'");
        }
        rec.chosen = j["chosen"].get<std::string>();
        rec.rejected = j["rejected"].get<std::string>();
        for (const char * key : {"score_chosen", "score_rejected"}) {
            if (!j.contains(key) || !j[key].is_number()) throw_data(ctx + "missing numeric '" + key + "'");
            const double v = j[key].get<double>();
            if (v < 0.0 || v > 10.0) throw_data(ctx + std::string(key) + " " + std::to_string(v) + " outside [0, 10]");
        }
        rec.score_chosen = j["score_chosen"].get<double>();
        rec.score_rejected = j["score_rejected"].get<double>();
        out.push_back(std::move(rec));
    });
    if (out.empty()) throw_data(path + ": no preference records");
    return out;
}

void write_preferences(const std::string & path, const std::vector<preference_record> & records) {
    std::ofstream f(path);
    if (!f) throw_data("cannot write " + path);
    for (const preference_record & rec : records) {
        json j;
        j["prompt"] = json::array();
        for (const message & m : rec.prompt) j["prompt"].push_back({{"role", m.role}, {"content", m.content}});
        j["chosen"] = rec.chosen;
        j["rejected"] = rec.rejected;
        j["score_chosen"] = rec.score_chosen;
        j["score_rejected"] = rec.score_rejected;
        f << j.dump() << "\n";
    }
    if (!f) throw_data("write failed for " + path);
}

// ---- packing ----

std::vector<packed_sequence> pack_examples(const std::vector<rendered_example> & examples, int64_t capacity) {
    if (capacity < 1) throw error(errc::argument, "pack: capacity must be positive");

    struct bin {
        std::vector<const rendered_example *> members;
        int64_t used = 0;
    };
    std::vector<bin> bins;
    for (const rendered_example & ex : examples) {
        const int64_t len = (int64_t) ex.tokens.size();
        if (len == 0) throw_data("pack: empty example " + std::to_string(ex.id));
        if (len > capacity) {
            throw_data("pack: example " + std::to_string(ex.id) + " has " + std::to_string(len) +
                       " tokens, exceeding capacity " + std::to_string(capacity));
        }
        bool placed = false;
        for (bin & b : bins) {
            if (b.used + len <= capacity) {
                b.members.push_back(&ex);
                b.used += len;
                placed = true;
                break;
            }
        }
        if (!placed) {
            bins.push_back({});
            bins.back().members.push_back(&ex);
            bins.back().used = len;
        }
    }

    std::vector<packed_sequence> out;
    out.reserve(bins.size());
    for (const bin & b : bins) {
        packed_sequence seq;
        seq.tokens.assign((size_t) capacity, 0);
        seq.targets.assign((size_t) capacity, 0);
        seq.target_mask.assign((size_t) capacity, 0);
        seq.segments.assign((size_t) capacity, 0);
        seq.weights.assign((size_t) capacity, 0.0);

        int64_t cursor = 0;
        int32_t seg = 0;
        for (const rendered_example * ex : b.members) {
            const int64_t len = (int64_t) ex->tokens.size();
            for (int64_t i = 0; i < len; i++) {
                const int64_t at = cursor + i;
                seq.tokens[(size_t) at] = ex->tokens[(size_t) i];
                seq.segments[(size_t) at] = seg;
                seq.weights[(size_t) at] = ex->weight;
                if (i + 1 < len) {
                    seq.targets[(size_t) at] = ex->tokens[(size_t) i + 1];
                    seq.target_mask[(size_t) at] = ex->mask[(size_t) i + 1];
                }
            }
            seq.example_ids.push_back(ex->id);
            cursor += len;
            seg++;
        }
        seq.n_padding = capacity - cursor;
        if (seq.n_padding > 0) {
            for (int64_t at = cursor; at < capacity; at++) seq.segments[(size_t) at] = seg;
            seq.example_ids.push_back(-1);
        }
        out.push_back(std::move(seq));
    }
    return out;
}

// ---- preference filtering ----

std::vector<preference_record> filter_preferences(const std::vector<preference_record> & in,
                                                  pref_filter_stats & stats) {
    stats = {};
    std::vector<preference_record> out;
    for (const preference_record & rec : in) {
        stats.read++;
        const double gap = rec.score_chosen - rec.score_rejected;
        if (gap == 0.0 || std::abs(gap) < 2.0) {
            stats.dropped++;
            continue;
        }
        preference_record kept = rec;
        if (gap < 0.0) {
            std::swap(kept.chosen, kept.rejected);
            std::swap(kept.score_chosen, kept.score_rejected);
            stats.swapped++;
        }
        out.push_back(std::move(kept));
        stats.kept++;
    }
    return out;
}

// ---- near-duplicate detection ----

void dedup_config::validate() const {
    if (shingle_words < 1) throw_config("dedup: shingle_words must be positive");
    if (n_hashes < 1 || bands < 1 || n_hashes % bands != 0) {
        throw_config("dedup: n_hashes must be a positive multiple of bands");
    }
    if (!(threshold > 0.0) || threshold > 1.0) throw_config("dedup: threshold must lie in (0, 1]");
}

namespace {

std::vector<std::string_view> split_words(const std::string & text) {
    std::vector<std::string_view> words;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace((unsigned char) text[i])) i++;
        const size_t start = i;
        while (i < text.size() && !std::isspace((unsigned char) text[i])) i++;
        if (i > start) words.emplace_back(text.data() + start, i - start);
    }
    return words;
}

// hash of shingle_words consecutive words; a short document becomes one shingle
std::vector<uint64_t> shingle_set(const std::string & text, int shingle_words) {
    const auto words = split_words(text);
    std::vector<uint64_t> out;
    auto hash_range = [&](size_t begin, size_t end) {
        uint64_t h = 1469598103934665603ull;
        for (size_t w = begin; w < end; w++) {
            for (char c : words[w]) {
                h ^= (unsigned char) c;
                h *= 1099511628211ull;
            }
            h ^= 0x1f; // word boundary
            h *= 1099511628211ull;
        }
        return h;
    };
    if (words.empty()) return out;
    if ((int) words.size() < shingle_words) {
        out.push_back(hash_range(0, words.size()));
    } else {
        out.reserve(words.size() - (size_t) shingle_words + 1);
        for (size_t i = 0; i + (size_t) shingle_words <= words.size(); i++) {
            out.push_back(hash_range(i, i + (size_t) shingle_words));
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double jaccard_sets(const std::vector<uint64_t> & a, const std::vector<uint64_t> & b) {
    if (a.empty() && b.empty()) return 1.0;
    if (a.empty() || b.empty()) return 0.0;
    size_t i = 0, j = 0, both = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) { both++; i++; j++; }
        else if (a[i] < b[j]) i++;
        else j++;
    }
    const size_t uni = a.size() + b.size() - both;
    return (double) both / (double) uni;
}

} // namespace

double jaccard_similarity(const std::string & a, const std::string & b, int shingle_words) {
    if (shingle_words < 1) throw error(errc::argument, "jaccard: shingle_words must be positive");
    return jaccard_sets(shingle_set(a, shingle_words), shingle_set(b, shingle_words));
}

std::vector<dedup_entry> dedup_documents(const std::vector<std::string> & docs, const dedup_config & cfg) {
    cfg.validate();
    const int64_t n = (int64_t) docs.size();
    std::vector<dedup_entry> entries((size_t) n);
    if (n == 0) return entries;

    std::vector<std::vector<uint64_t>> sets((size_t) n);
    for (int64_t d = 0; d < n; d++) sets[(size_t) d] = shingle_set(docs[(size_t) d], cfg.shingle_words);

    // one xor-key per permutation, drawn from the run's seed
    counter_rng keys(cfg.seed, stream_id("dedup.minhash"));
    std::vector<uint64_t> perm_keys((size_t) cfg.n_hashes);
    for (uint64_t & k : perm_keys) k = keys.next_u64();

    const uint64_t EMPTY = ~0ull;
    std::vector<std::vector<uint64_t>> sig((size_t) n);
    for (int64_t d = 0; d < n; d++) {
        auto & s = sig[(size_t) d];
        s.assign((size_t) cfg.n_hashes, EMPTY);
        for (int h = 0; h < cfg.n_hashes; h++) {
            for (uint64_t sh : sets[(size_t) d]) {
                const uint64_t v = rng_detail::mix64(sh ^ perm_keys[(size_t) h]);
                if (v < s[(size_t) h]) s[(size_t) h] = v;
            }
        }
    }

    // candidate pairs share at least one full band of the signature
    const int rows = cfg.n_hashes / cfg.bands;
    std::vector<std::pair<int64_t, int64_t>> candidates;
    for (int b = 0; b < cfg.bands; b++) {
        std::map<uint64_t, std::vector<int64_t>> buckets;
        for (int64_t d = 0; d < n; d++) {
            if (sets[(size_t) d].empty()) continue; // nothing to compare
            uint64_t h = 1469598103934665603ull ^ (uint64_t) b;
            for (int r = 0; r < rows; r++) {
                const uint64_t v = sig[(size_t) d][(size_t) (b * rows + r)];
                for (int byte = 0; byte < 8; byte++) {
                    h ^= (v >> (8 * byte)) & 0xff;
                    h *= 1099511628211ull;
                }
            }
            buckets[h].push_back(d);
        }
        for (auto & [key, members] : buckets) {
            for (size_t i = 0; i + 1 < members.size(); i++) {
                for (size_t j = i + 1; j < members.size(); j++) {
                    candidates.emplace_back(members[i], members[j]);
                }
            }
        }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    // union-find rooted at the smallest index so the first-seen copy survives
    std::vector<int64_t> parent((size_t) n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int64_t x) {
        while (parent[(size_t) x] != x) {
            parent[(size_t) x] = parent[(size_t) parent[(size_t) x]];
            x = parent[(size_t) x];
        }
        return x;
    };

    std::vector<double> merge_jaccard((size_t) n, 0.0);
    for (auto [i, j] : candidates) {
        const double jac = jaccard_sets(sets[(size_t) i], sets[(size_t) j]);
        if (jac < cfg.threshold) continue;
        int64_t ri = find(i), rj = find(j);
        if (ri == rj) continue;
        if (ri > rj) std::swap(ri, rj);
        parent[(size_t) rj] = ri;
        if (merge_jaccard[(size_t) rj] == 0.0) merge_jaccard[(size_t) rj] = jac;
    }

    for (int64_t d = 0; d < n; d++) {
        const int64_t root = find(d);
        if (root != d) {
            entries[(size_t) d].kept = false;
            entries[(size_t) d].duplicate_of = root;
            entries[(size_t) d].jaccard =
                merge_jaccard[(size_t) d] > 0.0 ? merge_jaccard[(size_t) d]
                                                : jaccard_sets(sets[(size_t) d], sets[(size_t) root]);
        }
    }
    return entries;
}

document_file load_documents(const std::string & path) {
    document_file out;
    for_each_line(path, [&](int64_t lineno, const std::string & line) {
        const json j = parse_line(path, lineno, line);
        if (!j.contains("text") || !j["text"].is_string()) {
            throw_data(where(path, lineno) + "missing string 'text'");
        }
        out.texts.push_back(j["text"].get<std::string>());
        out.lines.push_back(line);
    });
    return out;
}

} // namespace ptlab
