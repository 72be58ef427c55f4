/**
 * Label expansion through an OpenAI-compatible chat-completions endpoint.
 *
 * Env: LMPATH_LLM_API_KEY (required), LMPATH_LLM_BASE_URL (default OpenAI),
 * LMPATH_LLM_MODEL (default gpt-4o-mini). Segmentation requests are refused;
 * pair this adapter with a segmentation one, or use the stub.
 */

import { ExpandRequest, Handlers, serve } from "./protocol";

const BASE_URL = process.env.LMPATH_LLM_BASE_URL ?? "https://api.openai.com/v1";
const MODEL = process.env.LMPATH_LLM_MODEL ?? "gpt-4o-mini";
const MAX_LABELS = 10;

function prompt(target: string): string {
  return (
    `You plan aerial search missions. Name the kinds of places, visible in ` +
    `overhead satellite imagery, where one would expect to find: ${target}. ` +
    `Answer with a comma-separated list of at most five short place labels ` +
    `and nothing else.`
  );
}

export function parseLabelList(content: string): string[] {
  return content
    .replace(/\n/g, ",")
    .split(",")
    .map((s) => s.trim().replace(/^[-*\d.)\s]+/, "").toLowerCase())
    .filter((s) => s.length > 0)
    .slice(0, MAX_LABELS);
}

async function expandViaLlm(req: ExpandRequest): Promise<string[]> {
  const apiKey = process.env.LMPATH_LLM_API_KEY;
  if (!apiKey) {
    throw new Error("LMPATH_LLM_API_KEY not set");
  }
  const resp = await fetch(`${BASE_URL}/chat/completions`, {
    method: "POST",
    headers: {
      "content-type": "application/json",
      authorization: `Bearer ${apiKey}`,
    },
    body: JSON.stringify({
      model: MODEL,
      temperature: 0,
      messages: [{ role: "user", content: prompt(req.target) }],
    }),
  });
  if (!resp.ok) {
    throw new Error(`LLM endpoint returned HTTP ${resp.status}`);
  }
  const doc = (await resp.json()) as {
    choices?: { message?: { content?: string } }[];
  };
  const content = doc.choices?.[0]?.message?.content ?? "";
  const labels = parseLabelList(content);
  if (labels.length === 0) {
    throw new Error("LLM returned no usable labels");
  }
  return labels;
}

export const llmHandlers: Handlers = {
  expand: expandViaLlm,
  segment: () => {
    throw new Error("segmentation not supported by the LLM adapter");
  },
};

if (require.main === module) {
  serve(llmHandlers).then(() => process.exit(0));
}
