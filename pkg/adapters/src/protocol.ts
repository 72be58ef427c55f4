/**
 * Line-delimited JSON protocol over stdin/stdout.
 *
 * Requests:
 *   {"id": n, "kind": "segment", "label": l, "width": w, "height": h, "image": base64 PNG}
 *   {"id": n, "kind": "expand", "target": t}
 * Responses (one per request, in request order):
 *   {"id": n, "mask": base64 of w*h bytes in {0,1}}
 *   {"id": n, "labels": [".."]}
 *   {"id": n, "error": ".."}            on a failed request
 *   {"id": null, "error": ".."}         on an unparseable line; the stream survives
 */

import * as readline from "node:readline";
import type { Readable, Writable } from "node:stream";

export interface SegmentRequest {
  id: number;
  kind: "segment";
  label: string;
  width: number;
  height: number;
  image: string;
}

export interface ExpandRequest {
  id: number;
  kind: "expand";
  target: string;
}

export interface Handlers {
  segment(req: SegmentRequest): Uint8Array | Promise<Uint8Array>;
  expand(req: ExpandRequest): string[] | Promise<string[]>;
}

export function encodeMask(mask: Uint8Array): string {
  return Buffer.from(mask).toString("base64");
}

function errorResponse(id: unknown, message: string): string {
  const echo = typeof id === "number" ? id : null;
  return JSON.stringify({ id: echo, error: message });
}

function isPositiveInt(v: unknown): v is number {
  return typeof v === "number" && Number.isInteger(v) && v > 0;
}

export async function handleLine(line: string, handlers: Handlers): Promise<string> {
  let req: Record<string, unknown>;
  try {
    req = JSON.parse(line);
  } catch {
    return errorResponse(null, "malformed JSON line");
  }
  if (typeof req !== "object" || req === null) {
    return errorResponse(null, "request must be a JSON object");
  }
  const id = req.id;
  if (typeof id !== "number") {
    return errorResponse(id, "missing numeric request id");
  }

  try {
    if (req.kind === "segment") {
      if (
        typeof req.label !== "string" ||
        !isPositiveInt(req.width) ||
        !isPositiveInt(req.height) ||
        typeof req.image !== "string"
      ) {
        return errorResponse(id, "segment request needs label, width, height, image");
      }
      const mask = await handlers.segment(req as unknown as SegmentRequest);
      const expected = (req.width as number) * (req.height as number);
      if (mask.length !== expected) {
        return errorResponse(id, `handler produced ${mask.length} bytes, expected ${expected}`);
      }
      return JSON.stringify({ id, mask: encodeMask(mask) });
    }
    if (req.kind === "expand") {
      if (typeof req.target !== "string" || req.target.trim() === "") {
        return errorResponse(id, "expand request needs a non-empty target");
      }
      const labels = await handlers.expand(req as unknown as ExpandRequest);
      if (labels.length === 0) {
        return errorResponse(id, "no labels produced");
      }
      return JSON.stringify({ id, labels });
    }
    return errorResponse(id, `unknown kind ${JSON.stringify(req.kind)}`);
  } catch (err) {
    return errorResponse(id, err instanceof Error ? err.message : String(err));
  }
}

/** Serve requests until EOF; strictly one response per request, in order. */
export async function serve(
  handlers: Handlers,
  input: Readable = process.stdin,
  output: Writable = process.stdout,
): Promise<void> {
  const rl = readline.createInterface({ input, crlfDelay: Infinity });
  for await (const line of rl) {
    if (line.trim() === "") {
      continue;
    }
    const response = await handleLine(line, handlers);
    output.write(response + "\n");
  }
}
