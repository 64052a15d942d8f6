#include "qbench/corpus.hpp"

#include "qbench/errors.hpp"
#include "qbench/thread_pool.hpp"
#include "qbench/util.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "nlohmann/json.hpp"

namespace qbench {

namespace {

using ojson = nlohmann::ordered_json;

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_'; }

bool is_space_char(unsigned char c) { return std::isspace(c) != 0; }

}  // namespace

std::vector<std::string> approximate_tokens(const std::string& text) {
  std::vector<std::string> spans;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    std::size_t start = i;
    while (i < n && is_space_char(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    if (i == n) {
      // Trailing whitespace attaches to the previous span so that the spans
      // always concatenate back to the input.
      if (spans.empty()) {
        spans.push_back(text.substr(start));
      } else {
        spans.back() += text.substr(start);
      }
      break;
    }
    if (is_word_char(static_cast<unsigned char>(text[i]))) {
      while (i < n && is_word_char(static_cast<unsigned char>(text[i]))) {
        ++i;
      }
    } else {
      ++i;  // one non-word, non-space character
    }
    spans.push_back(text.substr(start, i - start));
  }
  return spans;
}

std::optional<int> parse_usefulness_score(const std::string& reply) {
  const std::string text = util::trim(reply);
  if (text.empty() || text.size() > 2) {
    return std::nullopt;
  }
  for (char c : text) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      return std::nullopt;
    }
  }
  const int value = std::stoi(text);
  if (value < 0 || value > 10) {
    return std::nullopt;
  }
  return value;
}

void score_files(std::vector<CorpusFile>& files, LlmClient& client, const PromptLibrary& prompts,
                 const GenerationParams& params, int workers) {
  if (files.empty()) {
    return;
  }
  const PromptTemplate& tpl = prompts.get("corpus_scoring");
  auto score_one = [&](std::size_t i) {
    CorpusFile& file = files[i];
    std::string prompt =
        render_prompt(tpl, {{"path", file.path}, {"content", file.content}});
    try {
      std::string reply = client.complete(prompt, params);
      auto score = parse_usefulness_score(reply);
      if (score) {
        file.score = score;
        file.needs_review = false;
      } else {
        file.score.reset();
        file.needs_review = true;
      }
    } catch (const GatewayError&) {
      file.score.reset();
      file.needs_review = true;
    }
  };
  if (workers > 1) {
    ThreadPool pool(static_cast<std::size_t>(workers));
    for (std::size_t i = 0; i < files.size(); ++i) {
      pool.submit([&score_one, i] { score_one(i); });
    }
    pool.wait_idle();
  } else {
    for (std::size_t i = 0; i < files.size(); ++i) {
      score_one(i);
    }
  }
}

FilterResult filter_corpus(std::vector<CorpusFile>& files, int threshold) {
  std::vector<std::string> unscored;
  for (const auto& file : files) {
    if (!file.score) {
      unscored.push_back(file.path);
    }
  }
  if (!unscored.empty()) {
    throw DatasetError("cannot filter: " + std::to_string(unscored.size()) +
                       " unscored file(s): " + util::join(unscored, ", "));
  }
  FilterResult result;
  result.total = static_cast<int>(files.size());
  for (auto& file : files) {
    file.retained = *file.score >= threshold;
    if (file.retained) {
      ++result.retained;
    }
    ++result.histogram[*file.score];
  }
  return result;
}

int apply_exclusions(std::vector<CorpusFile>& files,
                     const std::set<std::string>& excluded_paths) {
  int dropped = 0;
  for (auto& file : files) {
    if (file.retained && excluded_paths.count(file.path)) {
      file.retained = false;
      ++dropped;
    }
  }
  return dropped;
}

std::set<std::string> load_exclusion_list(const std::filesystem::path& file) {
  std::set<std::string> paths;
  for (const auto& raw : util::split_lines(util::read_file(file))) {
    std::string line = util::trim(raw);
    if (line.empty() || line[0] == '#') {
      continue;
    }
    paths.insert(line);
  }
  return paths;
}

namespace {

std::vector<const CorpusFile*> retained_in_order(const std::vector<CorpusFile>& files) {
  std::vector<const CorpusFile*> retained;
  for (const auto& file : files) {
    if (file.retained) {
      retained.push_back(&file);
    }
  }
  std::sort(retained.begin(), retained.end(), [](const CorpusFile* a, const CorpusFile* b) {
    if (a->provenance != b->provenance) {
      return a->provenance < b->provenance;
    }
    return a->path < b->path;
  });
  return retained;
}

}  // namespace

std::string concat_retained(const std::vector<CorpusFile>& files) {
  std::string out;
  bool first = true;
  for (const CorpusFile* file : retained_in_order(files)) {
    if (!first) {
      out += kDocumentSeparator;
    }
    out += file->content;
    first = false;
  }
  return out;
}

std::vector<Chunk> chunk_corpus(const std::vector<CorpusFile>& files, int max_tokens,
                                const Tokenizer& tokenizer) {
  if (max_tokens < 1) {
    throw ConfigError("chunking requires max_tokens >= 1");
  }
  const Tokenizer& tok = tokenizer ? tokenizer : Tokenizer(approximate_tokens);

  std::vector<std::string> spans;
  bool first = true;
  for (const CorpusFile* file : retained_in_order(files)) {
    if (!first) {
      auto sep = tok(kDocumentSeparator);
      spans.insert(spans.end(), sep.begin(), sep.end());
    }
    std::vector<std::string> file_spans;
    try {
      file_spans = tok(file->content);
    } catch (const std::exception& e) {
      throw Error("token counting failed for file '" + file->path + "': " + e.what());
    }
    std::string reassembled;
    for (const auto& s : file_spans) {
      reassembled += s;
    }
    if (reassembled != file->content) {
      throw Error("tokenizer does not reproduce file '" + file->path +
                  "' exactly; chunk reconstruction would be lossy");
    }
    spans.insert(spans.end(), file_spans.begin(), file_spans.end());
    first = false;
  }

  std::vector<Chunk> chunks;
  std::size_t i = 0;
  while (i < spans.size()) {
    const std::size_t take = std::min(static_cast<std::size_t>(max_tokens), spans.size() - i);
    Chunk chunk;
    chunk.ordinal = static_cast<int>(chunks.size());
    chunk.token_count = static_cast<int>(take);
    for (std::size_t j = 0; j < take; ++j) {
      chunk.text += spans[i + j];
    }
    chunks.push_back(std::move(chunk));
    i += take;
  }
  return chunks;
}

ChunkSplit split_chunks(const std::vector<Chunk>& chunks, double eval_fraction,
                        std::uint64_t seed) {
  if (eval_fraction < 0.0 || eval_fraction >= 1.0) {
    throw ConfigError("eval_fraction must be in [0, 1)");
  }
  std::vector<std::size_t> indices(chunks.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    indices[i] = i;
  }
  std::mt19937_64 rng(seed);
  std::shuffle(indices.begin(), indices.end(), rng);
  const auto eval_count = static_cast<std::size_t>(
      std::lround(eval_fraction * static_cast<double>(chunks.size())));
  std::set<std::size_t> eval_set(indices.begin(),
                                 indices.begin() + static_cast<std::ptrdiff_t>(eval_count));
  ChunkSplit split;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    (eval_set.count(i) ? split.eval : split.train).push_back(chunks[i]);
  }
  return split;
}

std::vector<CorpusFile> load_corpus_manifest(const std::filesystem::path& manifest,
                                             const std::filesystem::path& root) {
  const std::filesystem::path base = root.empty() ? manifest.parent_path() : root;
  std::vector<CorpusFile> files;
  const auto lines = util::split_lines(util::read_file(manifest));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (util::trim(lines[i]).empty()) {
      continue;
    }
    ojson record;
    try {
      record = ojson::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw DatasetError("malformed manifest record at line " + std::to_string(i + 1) + ": " +
                         e.what());
    }
    CorpusFile file;
    if (!record.contains("path") || !record.at("path").is_string()) {
      throw DatasetError("malformed manifest record at line " + std::to_string(i + 1) +
                         ": missing string field 'path'");
    }
    file.path = record.at("path").get<std::string>();
    file.provenance = record.value("provenance", "");
    file.license = record.value("license", "");
    if (record.contains("score") && !record.at("score").is_null()) {
      file.score = record.at("score").get<int>();
    }
    file.retained = record.value("retained", false);
    file.needs_review = record.value("needs_review", false);
    file.content = util::read_file(base / file.path);
    files.push_back(std::move(file));
  }
  return files;
}

void save_corpus_manifest(const std::vector<CorpusFile>& files,
                          const std::filesystem::path& manifest) {
  std::string out;
  for (const auto& file : files) {
    ojson record;
    record["path"] = file.path;
    record["provenance"] = file.provenance;
    record["license"] = file.license;
    record["score"] = file.score ? ojson(*file.score) : ojson(nullptr);
    record["retained"] = file.retained;
    record["needs_review"] = file.needs_review;
    out += record.dump();
    out += '\n';
  }
  util::write_file_atomic(manifest, out);
}

void write_chunks(const std::vector<Chunk>& chunks, const std::filesystem::path& file) {
  std::string out;
  for (const auto& chunk : chunks) {
    ojson record;
    record["ordinal"] = chunk.ordinal;
    record["token_count"] = chunk.token_count;
    record["text"] = chunk.text;
    out += record.dump();
    out += '\n';
  }
  util::write_file_atomic(file, out);
}

std::vector<Chunk> load_chunks(const std::filesystem::path& file) {
  std::vector<Chunk> chunks;
  for (const auto& line : util::split_lines(util::read_file(file))) {
    if (util::trim(line).empty()) {
      continue;
    }
    ojson record = ojson::parse(line);
    Chunk chunk;
    chunk.ordinal = record.at("ordinal").get<int>();
    chunk.token_count = record.at("token_count").get<int>();
    chunk.text = record.at("text").get<std::string>();
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

}  // namespace qbench
