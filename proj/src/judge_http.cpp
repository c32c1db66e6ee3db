#ifdef GEOCDL_HTTPS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <cstdlib>
#include <json.hpp>
#include <regex>

#include "geocdl/eval.hpp"

namespace geocdl::eval {

HttpJudge::HttpJudge(JudgeEndpointConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.check();
  static const std::regex url(R"(^(https?)://[^/]+(/.*)?$)");
  if (!std::regex_match(cfg_.base_url, url)) throw EvalError("judge base URL must be http(s)://host[:port][/path]");
#ifndef GEOCDL_HTTPS
  if (cfg_.base_url.rfind("https://", 0) == 0) throw EvalError("this build has no TLS support; use an http:// endpoint");
#endif
}

std::string HttpJudge::complete(const std::string& prompt) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  std::regex_match(cfg_.base_url, m, url);
  const std::string origin = m[1].str();
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(origin);
  const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
  const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.credential_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  nlohmann::json body;
  body["model"] = cfg_.model;
  body["temperature"] = 0;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});

  auto res = client.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) throw JudgeUnreachable("judge request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw JudgeUnreachable("judge answered HTTP " + std::to_string(res->status));
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return res->body;
  }
}

}  // namespace geocdl::eval
