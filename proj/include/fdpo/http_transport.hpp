#pragma once

// Chat-completion transport over HTTP(S) using cpp-httplib.
//
// POSTs {model, messages, temperature} to <base_url>/chat/completions with a
// bearer token read from the environment variable named in the config.

#include <cstdlib>
#include <regex>
#include <string>

#include <httplib.h>

#include "fdpo/judge.hpp"

namespace fdpo {

struct ParsedUrl {
  std::string scheme_host_port;  // e.g. "https://api.openai.com"
  std::string path_prefix;       // e.g. "/v1", never with a trailing slash
};

inline ParsedUrl parse_base_url(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw Error(Errc::InvalidArgument, "bad judge base_url '" + url + "'");
  ParsedUrl out{m[1].str(), m[2].matched ? m[2].str() : ""};
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

class HttpTransport : public Transport {
 public:
  std::string complete(const JudgeEndpointConfig& config, const std::vector<ChatMessage>& messages) override {
    const auto url = parse_base_url(config.base_url);
    // One client per call keeps concurrent requests independent.
    httplib::Client client(url.scheme_host_port);
    const auto secs = static_cast<time_t>(config.timeout_seconds);
    const auto usecs = static_cast<time_t>((config.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!config.api_key_env.empty()) {
      if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key)
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const std::string body = chat_request_body(config, messages).dump();
    auto res = client.Post(url.path_prefix + "/chat/completions", headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
          err == httplib::Error::Write)
        throw Error(Errc::Timeout, "request to " + config.base_url + " timed out (" + httplib::to_string(err) + ")");
      throw Error(Errc::HttpError, "status 0: " + httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300)
      throw Error(Errc::HttpError, "status " + std::to_string(res->status));
    return chat_response_content(res->body);
  }
};

}  // namespace fdpo
