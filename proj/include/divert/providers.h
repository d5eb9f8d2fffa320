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

// Chat-completion and embedding providers.
//
// A provider implements a single attempt; ChatComplete owns the retry loop so
// that every provider shares the same budget and token accounting rules:
//
//   * `max_retries` bounds the total number of attempts (3 means at most
//     three calls), with a floor of one attempt.
//   * tokens reported by failed attempts are still charged.

#ifndef DIVERT_PROVIDERS_H_
#define DIVERT_PROVIDERS_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "divert/core.h"

namespace divert {

enum class RoleTag { kAgent, kUser, kJunction, kCandidate, kJudge };

std::string_view RoleTagName(RoleTag tag);
RoleTag ParseRoleTag(std::string_view name);

// Ledger bucket charged for calls with `tag`. Judge calls happen post hoc and
// are not part of any trajectory ledger, so they map to null.
TokenUsage* LedgerBucket(TokenLedger& ledger, RoleTag tag);

struct ChatMessage {
  std::string role;  // "system", "user" or "assistant"
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_retries = 3;
  RoleTag role_tag = RoleTag::kAgent;
  // Sampling seed forwarded to the backend; mocks fold it into their draws.
  std::uint64_t seed = 0;
};

struct ChatResult {
  std::string content;
  TokenUsage tokens;
  int attempts = 1;
};

struct AttemptResult {
  bool ok = false;
  std::string content;
  TokenUsage tokens;
  std::string error;
};

class ProviderError : public Error {
 public:
  ProviderError(const std::string& message, int attempts, TokenUsage tokens)
      : Error(ErrorCode::kProviderError, message),
        attempts_(attempts),
        tokens_(tokens) {}

  int attempts() const { return attempts_; }
  // Tokens charged across all failed attempts.
  const TokenUsage& tokens() const { return tokens_; }

 private:
  int attempts_;
  TokenUsage tokens_;
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  // One attempt; `attempt` is 1-based. Must be safe to call concurrently.
  virtual AttemptResult Attempt(const ChatRequest& request, int attempt) const = 0;
};

// Throws kInvalidArgument for a malformed request and ProviderError once the
// attempt budget is exhausted.
ChatResult ChatComplete(const ChatProvider& provider, const ChatRequest& request);

struct UnitVector {
  std::vector<double> components;

  double Norm() const;
  bool operator==(const UnitVector&) const = default;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual UnitVector Embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
};

// Signed feature hashing of lowercased alphanumeric words, L2-normalized.
// Text without any word maps to the basis vector e1.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 64);

  UnitVector Embed(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }

 private:
  std::size_t dimension_;
};

// <a, b> for unit vectors; kInvalidArgument on dimension mismatch.
double CosineSimilarity(const UnitVector& a, const UnitVector& b);

// Cosine with explicit norms, for vectors that are not unit length (e.g.
// means of embeddings). Zero vectors compare as 0.
double CosineOfVectors(const std::vector<double>& a, const std::vector<double>& b);

std::vector<std::string> WhitespaceTokens(std::string_view text);
std::uint64_t WhitespaceTokenCount(std::string_view text);

// ---- Deterministic mock ----

// Produces the completion text for a request; `draw` is the deterministic
// random value for this (seed, request, attempt).
using Responder = std::function<std::string(const ChatRequest&, std::uint64_t draw)>;

// Picks bank[draw % size].
Responder BankResponder(std::vector<std::string> bank);

struct ChargingRule {
  enum class Kind { kWhitespace, kFixed };
  Kind kind = Kind::kWhitespace;
  TokenUsage fixed;  // used when kind == kFixed
};

struct MockScript {
  std::uint64_t seed = 42;
  std::map<RoleTag, Responder> responders;
  std::map<RoleTag, ChargingRule> charging;  // missing tag -> whitespace rule
  // Attempts 1..n fail for every call with this tag.
  std::map<RoleTag, int> failing_attempts;
};

class MockChatProvider : public ChatProvider {
 public:
  explicit MockChatProvider(MockScript script);

  AttemptResult Attempt(const ChatRequest& request, int attempt) const override;

  // The draw handed to the responder; exposed for tests.
  std::uint64_t DrawFor(const ChatRequest& request) const;

 private:
  TokenUsage Charge(RoleTag tag, const ChatRequest& request,
                    std::string_view completion) const;

  MockScript script_;
};

// Decorator that logs every attempt, for re-summing token usage.
class RecordingChatProvider : public ChatProvider {
 public:
  struct Entry {
    RoleTag role_tag;
    int attempt;
    bool ok;
    TokenUsage tokens;
  };

  explicit RecordingChatProvider(std::shared_ptr<const ChatProvider> inner)
      : inner_(std::move(inner)) {}

  AttemptResult Attempt(const ChatRequest& request, int attempt) const override;
  std::vector<Entry> entries() const;
  TokenUsage Total(RoleTag tag) const;

 private:
  std::shared_ptr<const ChatProvider> inner_;
  mutable std::mutex mu_;
  mutable std::vector<Entry> entries_;
};

}  // namespace divert

#endif  // DIVERT_PROVIDERS_H_
