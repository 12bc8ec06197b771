#include "tslm/llm_client.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "tslm/datagen.hpp"
#include "tslm/error.hpp"
#include "tslm/textrep.hpp"

namespace tslm {

using nlohmann::json;

namespace {

// Splits "http://host:port/path" into client base and request path.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ParameterError("endpoint must include a scheme: " + endpoint);
  }
  auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

ChatRequest chat_request_from_env() {
  ChatRequest req;
  const char* endpoint = std::getenv("TSLM_LLM_ENDPOINT");
  const char* model = std::getenv("TSLM_LLM_MODEL");
  if (!endpoint || !*endpoint) {
    throw ParameterError("TSLM_LLM_ENDPOINT is not set; remote backend unavailable");
  }
  req.endpoint = endpoint;
  req.model = model && *model ? model : "default";
  return req;
}

std::string chat_complete(const ChatRequest& request) {
  const auto [base, path] = split_endpoint(request.endpoint);

  json body;
  body["model"] = request.model;
  body["temperature"] = request.temperature;
  body["messages"] = json::array();
  for (const auto& m : request.messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 0; attempt <= request.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(request.backoff_ms * (1 << (attempt - 1))));
    }
    httplib::Client client(base);
    client.set_connection_timeout(request.timeout_seconds, 0);
    client.set_read_timeout(request.timeout_seconds, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv("TSLM_LLM_API_KEY"); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    json reply = json::parse(res->body, nullptr, /*allow_exceptions=*/false);
    if (reply.is_discarded()) throw ProtocolError("response body is not JSON");
    if (!reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty()) {
      throw ProtocolError("response has no choices");
    }
    const auto& choice = reply["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content") ||
        !choice["message"]["content"].is_string()) {
      throw ProtocolError("response choice has no message content");
    }
    return choice["message"]["content"].get<std::string>();
  }
  throw TransportError("chat_complete failed after " + std::to_string(request.retries + 1) +
                       " attempts: " + last_error);
}

std::vector<CaptionedPair> parse_generated_pairs(const std::string& llm_text) {
  std::vector<CaptionedPair> pairs;
  std::size_t skipped = 0;
  std::size_t pos = 0;
  while (true) {
    const std::size_t start = llm_text.find("<start>", pos);
    if (start == std::string::npos) break;
    const std::size_t end_tag = llm_text.find("</end>", start);
    if (end_tag == std::string::npos) break;
    const std::size_t block_end = end_tag + 6;
    pos = block_end;

    // caption = next non-empty line after the block
    std::size_t line_start = llm_text.find('\n', block_end);
    std::string caption;
    while (line_start != std::string::npos) {
      std::size_t line_end = llm_text.find('\n', line_start + 1);
      std::string line = llm_text.substr(
          line_start + 1,
          (line_end == std::string::npos ? llm_text.size() : line_end) - line_start - 1);
      line = trim(line);
      if (!line.empty()) {
        if (line.rfind("<start>", 0) == 0) break;  // next block, no caption
        caption = line;
        break;
      }
      line_start = line_end;
    }

    try {
      const auto rounded = parse_phase_tagged(llm_text.substr(start, block_end - start));
      if (caption.empty()) throw FormatError("missing caption line");
      const std::size_t colon = caption.find(':');
      if (colon != std::string::npos && colon < 12) caption = trim(caption.substr(colon + 1));
      if (caption.empty()) throw FormatError("empty caption");
      CaptionedPair pair;
      for (std::int64_t v : rounded) pair.series.values.push_back(static_cast<double>(v));
      validate_series(pair.series, /*enforce_generated_length=*/true);
      pair.caption = caption;
      pair.source = PairSource::generated;
      pairs.push_back(std::move(pair));
    } catch (const Error& e) {
      ++skipped;
      std::cerr << "parse_generated_pairs: skipping block: " << e.what() << "\n";
    }
  }
  if (skipped > 0) {
    std::cerr << "parse_generated_pairs: skipped " << skipped << " malformed block(s)\n";
  }
  if (pairs.empty()) throw FormatError("parse_generated_pairs: no valid pairs in LLM output");
  return pairs;
}

std::string build_generation_prompt(const GenerationQuery& query, std::int64_t samples) {
  std::string prompt =
      "You are given example time series with descriptive captions. Each time series "
      "is written as integer values inside <start>, <middle> and <end> phase tags.\n\n";
  for (const auto& demo : query.demonstrations) {
    prompt += phase_tag(demo.series);
    prompt += "\nCaption: " + demo.caption + "\n\n";
  }
  prompt += "Generate " + std::to_string(samples) +
            " new time series-caption pairs in exactly the same format. Use lengths "
            "between 12 and 50 and values strictly between 0 and 100.";
  return prompt;
}

std::vector<CaptionedPair> generate_pairs_remote(const GenerationQuery& query,
                                                 std::int64_t samples) {
  return generate_pairs_remote(query, samples, chat_request_from_env());
}

std::vector<CaptionedPair> generate_pairs_remote(const GenerationQuery& query,
                                                 std::int64_t samples, const ChatRequest& base) {
  ChatRequest req = base;
  req.messages = {{"user", build_generation_prompt(query, samples)}};
  return parse_generated_pairs(chat_complete(req));
}

std::string build_summarize_prompt(const std::vector<std::string>& captions) {
  std::string prompt =
      "You are given these captions that describe multiple characteristics of a time series";
  for (const auto& c : captions) prompt += "\n" + c;
  prompt +=
      "\nPlease summarize these captions by highlighting the important aspects in a single "
      "sentence";
  return prompt;
}

std::string fallback_summarize(const std::vector<std::string>& captions) {
  if (captions.empty()) throw ParameterError("summarize: no captions");
  // first-seen order, counted; repeated clauses rank first
  std::vector<std::pair<std::string, int>> clauses;
  for (const auto& raw : captions) {
    std::string c = trim(raw);
    while (!c.empty() && c.back() == '.') c.pop_back();
    c = trim(c);
    if (c.empty()) continue;
    auto it = std::find_if(clauses.begin(), clauses.end(),
                           [&](const auto& p) { return p.first == c; });
    if (it == clauses.end()) {
      clauses.emplace_back(c, 1);
    } else {
      ++it->second;
    }
  }
  if (clauses.empty()) throw ParameterError("summarize: only empty captions");
  if (clauses.size() == 1 && captions.size() == 1) return captions.front();
  std::stable_sort(clauses.begin(), clauses.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::string out;
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (i) out += " and ";
    out += clauses[i].first;
  }
  return out;
}

std::string summarize_captions(const std::vector<std::string>& captions,
                               SummarizeBackend backend) {
  if (backend == SummarizeBackend::fallback) return fallback_summarize(captions);
  return summarize_captions(captions, backend, chat_request_from_env());
}

std::string summarize_captions(const std::vector<std::string>& captions,
                               SummarizeBackend backend, const ChatRequest& base) {
  if (captions.empty()) throw ParameterError("summarize: no captions");
  if (backend == SummarizeBackend::fallback) return fallback_summarize(captions);
  ChatRequest req = base;
  req.temperature = 0.3;  // summarization is a consistency task
  req.messages = {{"user", build_summarize_prompt(captions)}};
  try {
    return chat_complete(req);
  } catch (const Error& e) {
    std::cerr << "summarize_captions: remote failed (" << e.what() << "); using fallback\n";
    return fallback_summarize(captions);
  }
}

}  // namespace tslm
