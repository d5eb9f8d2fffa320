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

#include "divert/prompts.h"

#include "json.hpp"

namespace divert {

const std::string_view kJunctionPromptTemplate =
    R"(You are an advanced assistant analyzing a conversation between a user and an AI agent.
Your goal is to identify the user turn that, if modified, will result in the biggest change in the agent's response while staying faithful to the user's intent and instruction in this conversation.

User Instructions:
{user_instructions}

Conversation Trajectory:
{formatted_trajectory}

Instructions:
1. Analyze the trajectory and identify the user turn that has the most potential to change the agent's response.
2. Ensure the modification aligns with the user's original intent and User Instructions.
3. Output the index of the chosen user turn (0-based) and a brief explanation.

The user turns (and the turns you can choose from) are at the following indices: {user_turns}

Output Format:
Reason: <reason>
Index: <chosen_index>
)";

const std::string_view kJunctionSystemPrompt =
    "You are an expert in counterfactual reasoning and dialogue pivot analysis.";

const std::string_view kCandidatePromptTemplate =
    R"(You are an advanced assistant tasked with generating a new user response in a conversation.
The goal is to challenge the agent by modifying the user turn at step {step_index},
while remaining faithful to the user's intent and maximizing downstream change in the agent’s response.

Reason for Change:
{reason}

Conversation Trajectory:
{formatted_trajectory}

Instructions:
1. Focus on the user turn at step {step_index}.
2. Generate a new user response that aligns with the user's intent but challenges the agent in a new way.
3. Ensure the response is coherent and fits naturally into the conversation.

Output:
Provide only the new user response text.
)";

const std::string_view kCandidateSystemTemplate =
    R"(You write messages for a simulated customer. The customer's backstory and instructions:
{user_instructions}

Task purpose: {purpose}
The new user response must keep pursuing this purpose.)";

const std::string_view kJudgeSystemPrompt =
    R"(You are an expert evaluator assessing whether a user's message preserves the intent of a given scenario purpose. Your task is to decide whether the user message is reasonably attempting to achieve the same core goal described in the purpose.

Focus only on core intent and goal direction, not wording, style, or timing. Treat messages as aligned if they pursue the same underlying objective, even if phrased differently. Do not judge quality or completeness. Mark NO only if the goal clearly changes, is contradicted, or becomes unrelated.

Respond with ONLY YES or NO, then give a brief explanation.)";

const std::string_view kJudgeUserTemplate =
    R"(Task Purpose: {purpose}
User Message: {message}
Does this user message attempt to satisfy the task purpose?)";

const std::string_view kAgentSystemTemplate =
    R"(You are a customer service agent for an online store. Help the customer with their orders and follow store policy.
To call a tool, write one line of the form:
TOOL <name> <json-args>
Available tools: {tools}
Tool results arrive as messages that start with TOOL_RESULT.)";

const std::string_view kUserSystemTemplate =
    R"(You are simulating a customer who is chatting with a customer service agent. Stay in character and follow these instructions:
{user_instructions}

Send one short message at a time. When all of your goals have been handled, reply with ###DONE###.)";

const std::string_view kUserKickoff = "(The agent is ready. Write your first message.)";

std::string RenderTemplate(
    std::string_view tmpl,
    const std::vector<std::pair<std::string_view, std::string>>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        std::string_view key = tmpl.substr(i + 1, close - i - 1);
        bool replaced = false;
        for (const auto& [name, value] : values) {
          if (name == key) {
            out += value;
            replaced = true;
            break;
          }
        }
        if (replaced) {
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

namespace {

std::string OneLine(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

std::string PromptRoleName(Role role) {
  return role == Role::kAgent ? "assistant" : std::string(RoleName(role));
}

std::string ToolTurnText(const Message& m) {
  std::string out = m.content;
  if (m.tool_result) out += ": " + *m.tool_result;
  return out;
}

std::string JoinTools(const std::vector<std::string>& tools) {
  std::string out;
  for (const auto& t : tools) {
    if (!out.empty()) out += ", ";
    out += t;
  }
  return out;
}

}  // namespace

std::string ToolDirectiveLine(const ToolCall& call) {
  return std::string(kToolDirective) + " " + call.name + " " +
         nlohmann::json(call.arguments).dump();
}

std::string FormatTrajectoryForPrompt(const std::vector<Message>& messages) {
  std::string out;
  for (const Message& m : messages) {
    std::string body;
    if (m.role == Role::kTool) {
      body = ToolTurnText(m);
    } else {
      body = m.content;
      if (m.tool_call) {
        if (!body.empty()) body += ' ';
        body += "[tool call: " + m.tool_call->name + " " +
                nlohmann::json(m.tool_call->arguments).dump() + "]";
      }
    }
    out += "Turn " + std::to_string(m.index) + " (" + PromptRoleName(m.role) +
           "): " + OneLine(body) + "\n";
  }
  return out;
}

std::string FormatIndexList(const std::vector<std::size_t>& indices) {
  std::string out = "[";
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(indices[i]);
  }
  return out + "]";
}

std::string RenderJunctionPrompt(std::string_view user_instructions,
                                 const std::vector<Message>& messages) {
  std::vector<std::size_t> user_turns;
  for (const Message& m : messages) {
    if (m.role == Role::kUser) user_turns.push_back(m.index);
  }
  return RenderTemplate(kJunctionPromptTemplate,
                        {{"user_instructions", std::string(user_instructions)},
                         {"formatted_trajectory", FormatTrajectoryForPrompt(messages)},
                         {"user_turns", FormatIndexList(user_turns)}});
}

std::string RenderCandidatePrompt(std::size_t step_index, std::string_view reason,
                                  const std::vector<Message>& messages) {
  return RenderTemplate(kCandidatePromptTemplate,
                        {{"step_index", std::to_string(step_index)},
                         {"reason", std::string(reason)},
                         {"formatted_trajectory", FormatTrajectoryForPrompt(messages)}});
}

std::string RenderCandidateSystem(const Task& task) {
  return RenderTemplate(kCandidateSystemTemplate,
                        {{"user_instructions", task.user_instructions},
                         {"purpose", task.purpose}});
}

std::string RenderJudgePrompt(std::string_view purpose, std::string_view message) {
  return RenderTemplate(kJudgeUserTemplate, {{"purpose", std::string(purpose)},
                                             {"message", std::string(message)}});
}

std::vector<ChatMessage> AgentView(const Task& task, const std::vector<Message>& messages) {
  std::vector<ChatMessage> out;
  out.push_back({"system", RenderTemplate(kAgentSystemTemplate,
                                          {{"tools", JoinTools(task.tool_names)}})});
  for (const Message& m : messages) {
    switch (m.role) {
      case Role::kUser:
        out.push_back({"user", m.content});
        break;
      case Role::kAgent: {
        std::string text = m.content;
        if (m.tool_call) {
          if (!text.empty()) text += '\n';
          text += ToolDirectiveLine(*m.tool_call);
        }
        out.push_back({"assistant", text});
        break;
      }
      case Role::kTool:
        out.push_back({"user", std::string(kToolResultPrefix) + " " + ToolTurnText(m)});
        break;
      case Role::kSystem:
        out.push_back({"system", m.content});
        break;
    }
  }
  return out;
}

std::vector<ChatMessage> UserView(const Task& task, const std::vector<Message>& messages) {
  std::vector<ChatMessage> out;
  out.push_back({"system", RenderTemplate(kUserSystemTemplate,
                                          {{"user_instructions", task.user_instructions}})});
  bool any_dialogue = false;
  for (const Message& m : messages) {
    if (m.role == Role::kUser) {
      out.push_back({"assistant", m.content});
      any_dialogue = true;
    } else if (m.role == Role::kAgent && !m.content.empty()) {
      out.push_back({"user", m.content});
      any_dialogue = true;
    }
  }
  if (!any_dialogue) out.push_back({"user", std::string(kUserKickoff)});
  return out;
}

}  // namespace divert
