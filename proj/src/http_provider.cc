// Copyright 2026 The Divert Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "divert/http_provider.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "httplib.h"
#include "json.hpp"

namespace divert {

namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string base_path;
};

SplitUrl Split(const std::string& base_url) {
  std::size_t scheme_end = base_url.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  std::size_t path_start = base_url.find('/', host_start);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.scheme_host_port = base_url;
  } else {
    out.scheme_host_port = base_url.substr(0, path_start);
    out.base_path = base_url.substr(path_start);
  }
  while (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
  return out;
}

// Returns the response body, or an error string in `error`.
std::optional<std::string> Post(const HttpEndpoint& endpoint, const std::string& route,
                                const std::string& body, std::string* error) {
  SplitUrl url = Split(endpoint.base_url);
  httplib::Client client(url.scheme_host_port);
  client.set_connection_timeout(endpoint.timeout_seconds, 0);
  client.set_read_timeout(endpoint.timeout_seconds, 0);
  httplib::Headers headers;
  if (!endpoint.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + endpoint.api_key);
  }
  auto res = client.Post(url.base_path + route, headers, body, "application/json");
  if (!res) {
    *error = "transport error: " + httplib::to_string(res.error());
    return std::nullopt;
  }
  if (res->status != 200) {
    *error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
    return std::nullopt;
  }
  return res->body;
}

}  // namespace

std::string ApiKeyFromEnvironment() {
  const char* key = std::getenv(kApiKeyEnv);
  return key == nullptr ? "" : key;
}

HttpChatProvider::HttpChatProvider(HttpEndpoint endpoint)
    : endpoint_(std::move(endpoint)) {}

std::string HttpChatProvider::RequestBody(const ChatRequest& request) const {
  nlohmann::json messages = nlohmann::json::array();
  for (const ChatMessage& m : request.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  nlohmann::json body = {{"model", endpoint_.model},
                         {"messages", messages},
                         {"temperature", request.temperature},
                         {"seed", request.seed}};
  return body.dump();
}

AttemptResult ParseChatCompletionResponse(std::string_view body) {
  AttemptResult out;
  try {
    auto doc = nlohmann::json::parse(body);
    const auto& message = doc.at("choices").at(0).at("message");
    if (message.contains("content") && message["content"].is_string()) {
      out.content = message["content"].get<std::string>();
    }
    if (doc.contains("usage") && doc["usage"].is_object()) {
      const auto& usage = doc["usage"];
      out.tokens.prompt_tokens = usage.value("prompt_tokens", std::uint64_t{0});
      out.tokens.completion_tokens = usage.value("completion_tokens", std::uint64_t{0});
    }
    out.ok = true;
  } catch (const nlohmann::json::exception& e) {
    out.ok = false;
    out.error = std::string("malformed completion response: ") + e.what();
  }
  return out;
}

AttemptResult HttpChatProvider::Attempt(const ChatRequest& request, int) const {
  std::string error;
  auto body = Post(endpoint_, "/chat/completions", RequestBody(request), &error);
  if (!body) return {false, "", {}, error};
  return ParseChatCompletionResponse(*body);
}

HttpEmbedder::HttpEmbedder(HttpEndpoint endpoint, std::size_t dimension,
                           int max_retries)
    : endpoint_(std::move(endpoint)), dimension_(dimension), max_retries_(max_retries) {}

UnitVector HttpEmbedder::Embed(std::string_view text) const {
  UnitVector sentinel;
  sentinel.components.assign(dimension_, 0.0);
  sentinel.components[0] = 1.0;
  if (text.empty()) return sentinel;

  nlohmann::json request = {{"model", endpoint_.model}, {"input", std::string(text)}};
  const int budget = std::max(1, max_retries_);
  std::string error;
  for (int attempt = 1; attempt <= budget; ++attempt) {
    auto body = Post(endpoint_, "/embeddings", request.dump(), &error);
    if (!body) continue;
    try {
      auto doc = nlohmann::json::parse(*body);
      auto values = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
      if (values.size() != dimension_) {
        error = "embedding dimension " + std::to_string(values.size()) +
                " != configured " + std::to_string(dimension_);
        continue;
      }
      UnitVector out{std::move(values)};
      double norm = out.Norm();
      if (norm == 0.0 || !std::isfinite(norm)) return sentinel;
      for (double& c : out.components) c /= norm;
      return out;
    } catch (const nlohmann::json::exception& e) {
      error = std::string("malformed embeddings response: ") + e.what();
    }
  }
  throw ProviderError("embedding call failed after " + std::to_string(budget) +
                          " attempts: " + error,
                      budget, {});
}

}  // namespace divert
