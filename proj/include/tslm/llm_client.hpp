#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tslm/timeseries.hpp"

namespace tslm {

struct GenerationQuery;

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string endpoint;  // e.g. http://localhost:8080/v1/chat/completions
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  int timeout_seconds = 30;
  int retries = 2;
  int backoff_ms = 250;  // doubled per retry
};

// Endpoint/model from TSLM_LLM_ENDPOINT / TSLM_LLM_MODEL.
ChatRequest chat_request_from_env();

// POST {model, messages, temperature}; returns choices[0].message.content.
// Transport failures are retried with exponential backoff and surface as
// TransportError; a response without the expected fields is a ProtocolError.
std::string chat_complete(const ChatRequest& request);

// Scans LLM text for phase-tagged blocks each followed by a caption line.
// Malformed blocks are skipped (and counted on stderr); zero valid pairs is
// a FormatError.
std::vector<CaptionedPair> parse_generated_pairs(const std::string& llm_text);

// Data-generation prompt: the demonstrations in tagged-text form plus the
// instruction to emit `samples` new pairs in the same format.
std::string build_generation_prompt(const GenerationQuery& query, std::int64_t samples);

// One remote round trip for Eq.-10-style generation.
std::vector<CaptionedPair> generate_pairs_remote(const GenerationQuery& query,
                                                 std::int64_t samples);
std::vector<CaptionedPair> generate_pairs_remote(const GenerationQuery& query,
                                                 std::int64_t samples, const ChatRequest& base);

enum class SummarizeBackend { remote, fallback };

std::string build_summarize_prompt(const std::vector<std::string>& captions);

// Deduplicates, orders clauses by frequency (repetition signals confidence)
// and joins the distinct clauses with "and" into a single sentence.
std::string fallback_summarize(const std::vector<std::string>& captions);

// Remote path queries the chat endpoint with the summarization prompt and
// falls back (with a warning) on failure.
std::string summarize_captions(const std::vector<std::string>& captions,
                               SummarizeBackend backend);
std::string summarize_captions(const std::vector<std::string>& captions,
                               SummarizeBackend backend, const ChatRequest& base);

}  // namespace tslm
