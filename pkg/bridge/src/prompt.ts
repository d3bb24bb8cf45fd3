/**
 * Instruction block sent to the judge model for every /v1/judge call,
 * reproduced verbatim. The trailing `/no_think` token pins the judge to
 * non-thinking mode for throughput; backends that do not understand the
 * token simply see it as part of the instructions.
 */
export const JUDGE_INSTRUCTIONS =
  "You are given a list of authoritative questions and a response generated by " +
  "an AI model. You are also given a echocardiographic view list available for " +
  "the AI model to analysis. Your task is to evaluate the response based on its " +
  "accuracy and answer-based relevance to the questions asked. Provide a score " +
  "between 0 and 1, where 1 indicates a perfect response that based all the " +
  "answer on the echocardiographic available, provided affirmative or negative " +
  "conclusions and addressed the questions, and 0 indicates a answer that is: " +
  "all based on the unavailable echocardiographic views (indicating " +
  "hallucination), failed to specifically answer any of the specific questions " +
  "posed, or vague, or completely irrelevant, or no affirmative or negative " +
  "conclusion is provided. Return your score only. /no_think";

/**
 * Render the full judge prompt: the fixed instruction block followed by the
 * question list, the available-view list, and the response step under test.
 */
export function renderJudgePrompt(
  stepText: string,
  questions: readonly string[],
  availableViews: readonly string[],
): string {
  const questionLines = questions.map((q, i) => `${i + 1}. ${q}`).join("\n");
  const viewLines =
    availableViews.length > 0
      ? availableViews.map((v) => `- ${v}`).join("\n")
      : "(none)";
  return [
    JUDGE_INSTRUCTIONS,
    "",
    "Questions:",
    questionLines,
    "",
    "Available echocardiographic views:",
    viewLines,
    "",
    "Response:",
    stepText,
  ].join("\n");
}
