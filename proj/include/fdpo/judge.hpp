#pragma once

// LLM-as-judge plumbing: prompt rendering, reply parsing, the hallucination
// threshold, and a transport-agnostic retrying client.

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "fdpo/core.hpp"
#include "fdpo/prompt_templates.hpp"
#include "fdpo/util.hpp"

namespace fdpo {

enum class PromptKind { BinaryJudge, ScoreJudge, CorruptorSystem, CorruptorUser };

inline std::string_view template_text(PromptKind kind) {
  switch (kind) {
    case PromptKind::BinaryJudge: return templates::kBinaryJudgeTemplate;
    case PromptKind::ScoreJudge: return templates::kScoreJudgeTemplate;
    case PromptKind::CorruptorSystem: return templates::kCorruptorSystemTemplate;
    case PromptKind::CorruptorUser: return templates::kCorruptorUserTemplate;
  }
  return {};
}

inline std::string_view template_file_name(PromptKind kind) {
  switch (kind) {
    case PromptKind::BinaryJudge: return "binary_judge.txt";
    case PromptKind::ScoreJudge: return "score_judge.txt";
    case PromptKind::CorruptorSystem: return "corruptor_system.txt";
    case PromptKind::CorruptorUser: return "corruptor_user.txt";
  }
  return {};
}

/// Substitutes {question} and {answer} in a single left-to-right pass, so
/// placeholder-looking text inside the inputs is never expanded again.
inline std::string substitute(std::string_view tmpl, std::string_view question, std::string_view answer) {
  static constexpr std::string_view kQ = "{question}";
  static constexpr std::string_view kA = "{answer}";
  std::string out;
  out.reserve(tmpl.size() + question.size() + answer.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl.substr(i, kQ.size()) == kQ) {
      out += question;
      i += kQ.size();
    } else if (tmpl.substr(i, kA.size()) == kA) {
      out += answer;
      i += kA.size();
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

inline std::string render_prompt(PromptKind kind, std::string_view question, std::string_view answer) {
  if (question.empty()) throw Error(Errc::EmptyField, "question is empty");
  if (answer.empty()) throw Error(Errc::EmptyField, "answer is empty");
  return substitute(template_text(kind), question, answer);
}

// ---------------------------------------------------------------------------
// Reply parsing. Both parsers take the LAST matching token so a reasoning
// preamble before the final answer is tolerated.
// ---------------------------------------------------------------------------

inline JudgeVerdict parse_binary(std::string_view raw) {
  static const std::regex token(R"(\[\[\s*([01])\s*\]\])");
  std::optional<int> last;
  for (std::cregex_iterator it(raw.data(), raw.data() + raw.size(), token), end; it != end; ++it)
    last = (*it)[1].str() == "1" ? 1 : 0;
  if (!last) throw Error(Errc::Unparseable, "no [[0]] or [[1]] token in judge reply");
  return JudgeVerdict::binary(*last);
}

inline JudgeVerdict parse_score(std::string_view raw) {
  static const std::regex token(R"(\[\[\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+))\s*\]\])");
  std::optional<std::string> last;
  for (std::cregex_iterator it(raw.data(), raw.data() + raw.size(), token), end; it != end; ++it)
    last = (*it)[1].str();
  if (!last) throw Error(Errc::Unparseable, "no [[score]] token in judge reply");
  const double v = std::stod(*last);
  if (!(v >= 0.0 && v <= 10.0)) throw Error(Errc::OutOfRange, "score " + *last + " outside [0,10]");
  return JudgeVerdict::score(v);
}

inline constexpr double kHallucinationThreshold = 5.0;

/// Scores strictly below 5 count as hallucinated.
inline bool is_hallucinated(double score) {
  if (!(score >= 0.0 && score <= 10.0)) throw Error(Errc::OutOfRange, "score outside [0,10]");
  return score < kHallucinationThreshold;
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

struct JudgeEndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "OPENAI_API_KEY";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double temperature = 0.0;
  std::size_t max_in_flight = 4;
  double backoff_initial_seconds = 1.0;

  void validate() const {
    if (!(timeout_seconds > 0.0)) throw Error(Errc::InvalidArgument, "judge timeout must be > 0");
    if (max_retries < 0) throw Error(Errc::InvalidArgument, "judge max_retries must be >= 0");
    if (max_in_flight < 1) throw Error(Errc::InvalidArgument, "judge max_in_flight must be >= 1");
    if (!(backoff_initial_seconds >= 0.0)) throw Error(Errc::InvalidArgument, "backoff must be >= 0");
  }
};

struct ChatMessage {
  std::string role;
  std::string content;
};

/// Request body of the chat-completion protocol.
inline nlohmann::json chat_request_body(const JudgeEndpointConfig& config, const std::vector<ChatMessage>& messages) {
  nlohmann::json body;
  body["model"] = config.model;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  body["temperature"] = config.temperature;
  return body;
}

/// Content of the first choice of a chat-completion response.
inline std::string chat_response_content(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Unparseable, std::string("chat response is not JSON: ") + e.what());
  }
  try {
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::Unparseable, "chat response has no choices[0].message.content");
  }
}

/// One attempt at a chat completion. Implementations throw Error with code
/// Timeout or HttpError on failure.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string complete(const JudgeEndpointConfig& config, const std::vector<ChatMessage>& messages) = 0;
};

/// Test transport replaying a fixed script of replies and failures.
class ScriptedTransport : public Transport {
 public:
  struct Step {
    std::optional<std::string> reply;  // nullopt = fail with `failure`
    Errc failure = Errc::Timeout;
    int status = 503;
  };

  explicit ScriptedTransport(std::vector<Step> steps) : steps_(std::move(steps)) {}

  static ScriptedTransport always(std::string reply) { return ScriptedTransport({Step{std::move(reply)}}, true); }

  std::string complete(const JudgeEndpointConfig&, const std::vector<ChatMessage>& messages) override {
    std::lock_guard lock(mu_);
    ++calls_;
    last_messages_ = messages;
    const Step& s = repeat_last_ ? steps_.front() : steps_.at(std::min(next_++, steps_.size() - 1));
    if (s.reply) return *s.reply;
    if (s.failure == Errc::HttpError) throw Error(Errc::HttpError, "status " + std::to_string(s.status));
    throw Error(s.failure, "scripted failure");
  }

  int calls() const { return calls_; }
  const std::vector<ChatMessage>& last_messages() const { return last_messages_; }

 private:
  ScriptedTransport(std::vector<Step> steps, bool repeat) : steps_(std::move(steps)), repeat_last_(repeat) {}

  std::vector<Step> steps_;
  bool repeat_last_ = false;
  std::size_t next_ = 0;
  int calls_ = 0;
  std::vector<ChatMessage> last_messages_;
  std::mutex mu_;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

inline bool is_retryable(const Error& e) {
  if (e.code() == Errc::Timeout) return true;
  if (e.code() != Errc::HttpError) return false;
  // Client errors other than rate limiting will not change on retry.
  const std::string msg = e.what();
  for (const char* s : {"status 400", "status 401", "status 403", "status 404", "status 422"})
    if (msg.find(s) != std::string::npos) return false;
  return true;
}

/// Sends one conversation, retrying transient failures with exponential
/// backoff: at most 1 + max_retries attempts.
inline std::string query_chat(const JudgeEndpointConfig& config, Transport& transport,
                              const std::vector<ChatMessage>& messages, const Sleeper& sleep = real_sleep) {
  config.validate();
  double delay = config.backoff_initial_seconds;
  std::string last_error;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      sleep(std::chrono::milliseconds(static_cast<long long>(delay * 1000.0)));
      delay *= 2.0;
    }
    try {
      return transport.complete(config, messages);
    } catch (const Error& e) {
      if (!is_retryable(e)) throw;
      last_error = e.what();
    }
  }
  throw Error(Errc::RetriesExhausted,
              std::to_string(config.max_retries + 1) + " attempts failed; last error: " + last_error);
}

inline std::string query_judge(const JudgeEndpointConfig& config, Transport& transport, const std::string& prompt,
                               const Sleeper& sleep = real_sleep) {
  return query_chat(config, transport, {ChatMessage{"user", prompt}}, sleep);
}

// ---------------------------------------------------------------------------
// Judges: something that turns (question, answer) into a raw reply.
// ---------------------------------------------------------------------------

class Judge {
 public:
  virtual ~Judge() = default;
  virtual std::string raw_reply(PromptKind kind, const std::string& question, const std::string& answer) = 0;
};

class LlmJudge : public Judge {
 public:
  LlmJudge(JudgeEndpointConfig config, Transport& transport, Sleeper sleep = real_sleep)
      : config_(std::move(config)), transport_(transport), sleep_(std::move(sleep)) {}

  std::string raw_reply(PromptKind kind, const std::string& question, const std::string& answer) override {
    return query_judge(config_, transport_, render_prompt(kind, question, answer), sleep_);
  }

 private:
  JudgeEndpointConfig config_;
  Transport& transport_;
  Sleeper sleep_;
};

inline std::string mock_key(std::string_view question, std::string_view answer) {
  return to_hex(hash_fields({question, answer}));
}

/// Offline judge: a fixture table from mock_key(question, answer) to a
/// scripted reply. Unknown pairs get a reply derived from the key's parity.
class MockJudge : public Judge {
 public:
  MockJudge() = default;
  explicit MockJudge(std::unordered_map<std::string, std::string> table) : table_(std::move(table)) {}

  static MockJudge from_json(const nlohmann::json& j) {
    std::unordered_map<std::string, std::string> table;
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!it->is_string()) throw Error(Errc::Schema, "mock judge table values must be strings");
      table.emplace(it.key(), it->get<std::string>());
    }
    return MockJudge(std::move(table));
  }

  std::string raw_reply(PromptKind kind, const std::string& question, const std::string& answer) override {
    if (question.empty() || answer.empty()) throw Error(Errc::EmptyField, "question/answer is empty");
    const std::string key = mock_key(question, answer);
    if (auto it = table_.find(key); it != table_.end()) return it->second;
    const auto h = hash_fields({question, answer});
    if (kind == PromptKind::ScoreJudge) return "[[" + std::to_string(h % 11) + "]]";
    return (h & 1) ? "[[1]]" : "[[0]]";
  }

 private:
  std::unordered_map<std::string, std::string> table_;
};

}  // namespace fdpo
