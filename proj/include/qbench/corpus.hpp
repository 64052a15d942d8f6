#pragma once

#include "qbench/llm_gateway.hpp"
#include "qbench/prompts.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace qbench {

// One candidate pretraining document. Provenance (repo, license, or URL) is
// input metadata; nothing here crawls or licenses anything.
struct CorpusFile {
  std::string path;
  std::string content;
  std::string provenance;
  std::string license;
  std::optional<int> score;   // usefulness 0..10; empty = unscored
  bool retained = false;      // retained implies score >= threshold
  bool needs_review = false;  // scoring failed or reply was unparseable
};

struct Chunk {
  int ordinal = 0;  // 0-based position in the chunk stream
  std::string text;
  int token_count = 0;
};

// Splits text into spans whose concatenation reproduces the input exactly.
// A span is an optional whitespace run plus either a word ([A-Za-z0-9_]+) or
// one other printable character; trailing whitespace sticks to the last span.
// This is the default token approximation; callers may substitute their own.
using Tokenizer = std::function<std::vector<std::string>(const std::string&)>;
std::vector<std::string> approximate_tokens(const std::string& text);

// Inserted between documents when the retained corpus is concatenated.
inline constexpr const char* kDocumentSeparator = "\n\n";

// Strict parse of a scoring reply: the trimmed text must be an integer in
// [0, 10]; anything else is unparseable.
std::optional<int> parse_usefulness_score(const std::string& reply);

// Asks the model for a 0..10 usefulness score per file, fanning out across
// `workers`. Results land in input order. Gateway failures (after the
// client's retries) and unparseable replies leave the file unscored with
// needs_review set; nothing throws for a bad reply.
void score_files(std::vector<CorpusFile>& files, LlmClient& client, const PromptLibrary& prompts,
                 const GenerationParams& params, int workers = 4);

struct FilterResult {
  int total = 0;
  int retained = 0;
  std::map<int, int> histogram;  // score -> file count; bins sum to total
};

// Marks retained = (score >= threshold). Throws DatasetError listing every
// unscored file if any remain. Idempotent for a fixed threshold.
FilterResult filter_corpus(std::vector<CorpusFile>& files, int threshold = 4);

// Manual-review pass: clears retained on every listed path. Returns how many
// files were dropped. The exclusion file format is one path per line; blank
// lines and lines starting with '#' are ignored.
int apply_exclusions(std::vector<CorpusFile>& files, const std::set<std::string>& excluded_paths);
std::set<std::string> load_exclusion_list(const std::filesystem::path& file);

// Concatenates retained files (sorted by provenance, then path) with
// kDocumentSeparator between documents. Chunking splits that stream greedily
// at span boundaries into chunks of <= max_tokens spans; concatenating the
// chunk texts reproduces the stream byte for byte. A tokenizer failure is
// reported as an error naming the offending file.
std::string concat_retained(const std::vector<CorpusFile>& files);
std::vector<Chunk> chunk_corpus(const std::vector<CorpusFile>& files, int max_tokens = 4096,
                                const Tokenizer& tokenizer = nullptr);

// Seeded disjoint, exhaustive partition; eval gets round(fraction * total)
// chunks. Original chunk order is preserved within each side.
struct ChunkSplit {
  std::vector<Chunk> train;
  std::vector<Chunk> eval;
};
ChunkSplit split_chunks(const std::vector<Chunk>& chunks, double eval_fraction,
                        std::uint64_t seed);

// Manifest: one JSON record per line with path, provenance, license, score,
// retained, needs_review. Content is not stored in the manifest; load reads
// each file relative to `root` (manifest directory when root is empty).
std::vector<CorpusFile> load_corpus_manifest(const std::filesystem::path& manifest,
                                             const std::filesystem::path& root = {});
void save_corpus_manifest(const std::vector<CorpusFile>& files,
                          const std::filesystem::path& manifest);

// Chunk records as JSON lines {ordinal, token_count, text}.
void write_chunks(const std::vector<Chunk>& chunks, const std::filesystem::path& file);
std::vector<Chunk> load_chunks(const std::filesystem::path& file);

}  // namespace qbench
