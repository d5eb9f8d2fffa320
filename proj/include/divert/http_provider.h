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

// Clients for OpenAI-compatible HTTP endpoints:
//   POST {base_url}/chat/completions  {model, messages, temperature, seed}
//   POST {base_url}/embeddings        {model, input}

#ifndef DIVERT_HTTP_PROVIDER_H_
#define DIVERT_HTTP_PROVIDER_H_

#include <string>
#include <string_view>

#include "divert/providers.h"

namespace divert {

// Environment variable consulted for the bearer token.
inline constexpr char kApiKeyEnv[] = "DIVERT_API_KEY";

struct HttpEndpoint {
  std::string base_url;  // e.g. "http://localhost:8000/v1"
  std::string model;
  std::string api_key;  // empty -> no Authorization header
  int timeout_seconds = 60;
};

// Reads kApiKeyEnv; empty when unset.
std::string ApiKeyFromEnvironment();

class HttpChatProvider : public ChatProvider {
 public:
  explicit HttpChatProvider(HttpEndpoint endpoint);

  AttemptResult Attempt(const ChatRequest& request, int attempt) const override;

  // Request body for `request`; exposed for tests of the wire format.
  std::string RequestBody(const ChatRequest& request) const;

 private:
  HttpEndpoint endpoint_;
};

// Parses an OpenAI chat-completions response body.
AttemptResult ParseChatCompletionResponse(std::string_view body);

class HttpEmbedder : public Embedder {
 public:
  HttpEmbedder(HttpEndpoint endpoint, std::size_t dimension, int max_retries = 3);

  // Throws ProviderError after `max_retries` failed attempts.
  UnitVector Embed(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }

 private:
  HttpEndpoint endpoint_;
  std::size_t dimension_;
  int max_retries_;
};

}  // namespace divert

#endif  // DIVERT_HTTP_PROVIDER_H_
