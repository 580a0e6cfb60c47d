#pragma once

#include "error.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ptlab {

// byte-level tokenizer: ids 0..255 are raw bytes, control tokens follow
struct tokenizer {
    enum control : int32_t {
        seq_start = 256,
        seq_end,
        instr_start,
        instr_end,
        resp_start,
        resp_end,
    };

    static constexpr int32_t n_control  = 6;
    static constexpr int32_t vocab_size = 256 + n_control;

    static std::vector<int32_t> encode(std::string_view text);
    static std::string decode(const std::vector<int32_t> & tokens);
    static const char * control_name(int32_t id);
};

struct message {
    std::string role; // "user" or "assistant"
    std::string content;
};

void validate_chat(const std::vector<message> & messages, bool must_end_assistant);

struct rendered_chat {
    std::vector<int32_t> tokens;
    std::vector<uint8_t> mask;                           // true on supervised target tokens
    std::vector<std::pair<size_t, size_t>> spans;        // [begin, end) token range per message

    std::pair<size_t, size_t> last_span() const {
        if (spans.empty()) throw error(errc::argument, "rendered chat has no messages");
        return spans.back();
    }
};

// [seq-start] then alternating [instr-start]content[instr-end] /
// [resp-start]content[resp-end]; assistant content plus its closing
// control token carry the loss mask
rendered_chat render_chat(const std::vector<message> & messages);

// ---- records ----

struct instruction_record {
    std::vector<message> messages;
    double weight = 1.0;
    std::string category;
};

struct preference_record {
    std::vector<message> prompt; // ends with a user turn
    std::string chosen;
    std::string rejected;
    double score_chosen   = 0.0;
    double score_rejected = 0.0;
};

std::vector<instruction_record> load_instructions(const std::string & path);
std::vector<preference_record> load_preferences(const std::string & path);
void write_preferences(const std::string & path, const std::vector<preference_record> & records);

// ---- packing ----

struct rendered_example {
    int64_t id = 0;
    std::vector<int32_t> tokens;
    std::vector<uint8_t> mask;
    double weight = 1.0;
};

struct packed_sequence {
    std::vector<int32_t> tokens;       // padded to capacity
    std::vector<int32_t> targets;      // next-token targets, 0 where unsupervised
    std::vector<uint8_t> target_mask;
    std::vector<int32_t> segments;     // non-decreasing; padding is its own final segment
    std::vector<double>  weights;      // per-position example weight
    std::vector<int64_t> example_ids;  // per segment, -1 for the padding segment
    int64_t n_padding = 0;
};

// greedy first-fit, never splitting or reordering within an example
std::vector<packed_sequence> pack_examples(const std::vector<rendered_example> & examples, int64_t capacity);

rendered_example render_instruction(const instruction_record & rec, int64_t id);

// ---- preference filtering ----

struct pref_filter_stats {
    int64_t read    = 0;
    int64_t kept    = 0;
    int64_t dropped = 0;
    int64_t swapped = 0; // swapped pairs are also counted in kept
};

// keeps pairs whose scores differ by at least 2 points, swapping chosen and
// rejected when the annotator scored them the wrong way around
std::vector<preference_record> filter_preferences(const std::vector<preference_record> & in,
                                                  pref_filter_stats & stats);

// ---- near-duplicate detection ----

struct dedup_config {
    int      shingle_words = 5;
    int      n_hashes      = 128;
    int      bands         = 32;
    double   threshold     = 0.8;
    uint64_t seed          = 0;

    void validate() const;
};

struct dedup_entry {
    bool    kept         = true;
    int64_t duplicate_of = -1;
    double  jaccard      = 0.0; // exact similarity that confirmed the merge
};

// MinHash-LSH candidate generation with exact-Jaccard confirmation; the
// first-seen document of each duplicate cluster is kept
std::vector<dedup_entry> dedup_documents(const std::vector<std::string> & docs, const dedup_config & cfg);

// exact shingle-set Jaccard similarity, the oracle the LSH path must agree with
double jaccard_similarity(const std::string & a, const std::string & b, int shingle_words);

struct document_file {
    std::vector<std::string> texts;
    std::vector<std::string> lines; // original JSONL lines, re-emitted verbatim on keep
};

document_file load_documents(const std::string & path);

} // namespace ptlab
