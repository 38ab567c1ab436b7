#pragma once

// Judge and corruptor prompt templates. Byte-identical copies of the files in
// templates/; tests/judge_test.cpp checks that the two never drift apart.

#include <string_view>

namespace fdpo::templates {

inline constexpr std::string_view kScoreJudgeTemplate = R"tpl(System:
You are an evaluation model scoring how 
factually reasonable an assistant's 
answer is.

You are NOT a harsh critic.
Give credit for correct answers.

Evaluation Focus:
- Are there any clearly false claims?
- Does the answer rely on accepted facts?

Scoring:
10  = Completely correct
8–9 = Mostly correct
6–7 = Generally factual
4–5 = Noticeable problems
0–3 = Major errors / hallucinations

Output ONLY:
[[score]]

[User Question]
{question}

[Assistant Answer]
{answer})tpl";

inline constexpr std::string_view kBinaryJudgeTemplate = R"tpl(System:
You are an extremely strict factuality 
judge. Determine whether the assistant's 
response contains ANY of:

• factual errors
• hallucinations
• unsupported claims
• unverifiable statements
• fabricated details
• incorrect technical descriptions
• invented names/entities
• logical contradictions
• vague or misleading reasoning
• missing critical facts

IMPORTANT:
If vague, incomplete, unsupported, 
or unverifiable, classify as [[1]].

Definitions:
[[0]] = Fully factual and precise.
[[1]] = ANY issue.

Return ONLY:
[[0]] or [[1]]

User Question:
{question}

Assistant Response:
{answer})tpl";

inline constexpr std::string_view kCorruptorSystemTemplate = R"tpl(You are a factual corruption generator.

Rewrite a correct answer into a subtly 
incorrect version with 2–3 factual errors. 
Output must remain fluent, confident, 
and plausible.)tpl";

inline constexpr std::string_view kCorruptorUserTemplate = R"tpl(PROMPT:
{question}

CORRECT ANSWER:
{answer}

TASK:
Rewrite the answer so it becomes factually 
wrong,adding subtle hallucinations while 
sounding coherent.)tpl";

}  // namespace fdpo::templates
