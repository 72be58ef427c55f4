/**
 * Stub adapter: protocol-conformant, model-free.
 *
 * Segmentation returns an all-zero mask of the requested size; label
 * expansion resolves from a small static table (falling back to the target
 * itself). Useful for protocol conformance tests and dry runs.
 */

import { Handlers, serve } from "./protocol";

const STATIC_LABELS: Record<string, string[]> = {
  car: ["parking lot", "road", "driveway"],
  truck: ["parking lot", "road", "loading dock"],
  boat: ["marina", "dock", "shoreline"],
  building: ["building"],
  person: ["sidewalk", "trail", "park"],
};

export const stubHandlers: Handlers = {
  segment: (req) => new Uint8Array(req.width * req.height),
  expand: (req) => {
    const key = req.target.trim().toLowerCase();
    return STATIC_LABELS[key] ?? [key];
  },
};

if (require.main === module) {
  serve(stubHandlers).then(() => process.exit(0));
}
