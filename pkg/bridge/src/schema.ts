import { z } from "zod";

/**
 * Request schemas for the verifier wire protocol. All three are strict:
 * unknown fields are rejected so that clients cannot smuggle out-of-band
 * context (for example captions) past the protocol boundary.
 */

export const judgeRequestSchema = z
  .object({
    step_text: z.string(),
    questions: z.array(z.string()).min(1),
    available_views: z.array(z.string()),
  })
  .strict();

export const similarityRequestSchema = z
  .object({
    text: z.string(),
    view_label: z.string(),
    video_uri: z.string(),
  })
  .strict();

export const embedRequestSchema = z
  .object({
    texts: z.array(z.string()),
  })
  .strict();

export type JudgeRequest = z.infer<typeof judgeRequestSchema>;
export type SimilarityRequest = z.infer<typeof similarityRequestSchema>;
export type EmbedRequest = z.infer<typeof embedRequestSchema>;

/** Flatten a zod error into a single human-readable line for a 400 body. */
export function describeIssues(error: z.ZodError): string {
  return error.issues
    .map((issue) => {
      const where = issue.path.length > 0 ? issue.path.join(".") : "body";
      return `${where}: ${issue.message}`;
    })
    .join("; ");
}
