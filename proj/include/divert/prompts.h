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

// Prompt templates and trajectory serialization. The template texts are also
// checked in under prompts/ and pinned by golden tests; bump
// kPromptTemplateVersion whenever one of them changes.

#ifndef DIVERT_PROMPTS_H_
#define DIVERT_PROMPTS_H_

#include <string>
#include <string_view>
#include <vector>

#include "divert/core.h"
#include "divert/envsim.h"
#include "divert/providers.h"

namespace divert {

inline constexpr std::string_view kPromptTemplateVersion = "v1";

// Placeholders: {user_instructions}, {formatted_trajectory}, {user_turns}.
extern const std::string_view kJunctionPromptTemplate;
extern const std::string_view kJunctionSystemPrompt;

// Placeholders: {step_index}, {reason}, {formatted_trajectory}.
extern const std::string_view kCandidatePromptTemplate;
// Placeholders: {user_instructions}, {purpose}.
extern const std::string_view kCandidateSystemTemplate;

extern const std::string_view kJudgeSystemPrompt;
// Placeholders: {purpose}, {message}.
extern const std::string_view kJudgeUserTemplate;

// Placeholders: {tools}.
extern const std::string_view kAgentSystemTemplate;
// Placeholders: {user_instructions}.
extern const std::string_view kUserSystemTemplate;
// Sent to the user simulator when it speaks first.
extern const std::string_view kUserKickoff;

inline constexpr std::string_view kDoneToken = "###DONE###";
inline constexpr std::string_view kToolDirective = "TOOL";
inline constexpr std::string_view kToolResultPrefix = "TOOL_RESULT";

// Replaces every "{key}" with its value. Unknown placeholders are left as is.
std::string RenderTemplate(
    std::string_view tmpl,
    const std::vector<std::pair<std::string_view, std::string>>& values);

// "Turn {index} ({role}): {content}", one line per message. Agent turns are
// rendered with role "assistant"; tool calls are appended inline.
std::string FormatTrajectoryForPrompt(const std::vector<Message>& messages);

// "[0, 2, 4]"
std::string FormatIndexList(const std::vector<std::size_t>& indices);

std::string RenderJunctionPrompt(std::string_view user_instructions,
                                 const std::vector<Message>& messages);
std::string RenderCandidatePrompt(std::size_t step_index, std::string_view reason,
                                  const std::vector<Message>& messages);
std::string RenderCandidateSystem(const Task& task);
std::string RenderJudgePrompt(std::string_view purpose, std::string_view message);

// The directive line an agent message carries for its tool call.
std::string ToolDirectiveLine(const ToolCall& call);

// Conversation as seen by the agent under test.
std::vector<ChatMessage> AgentView(const Task& task, const std::vector<Message>& messages);
// Conversation as seen by the user simulator; roles are mirrored and tool
// traffic is hidden.
std::vector<ChatMessage> UserView(const Task& task, const std::vector<Message>& messages);

}  // namespace divert

#endif  // DIVERT_PROMPTS_H_
