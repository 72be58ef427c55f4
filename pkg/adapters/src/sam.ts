/**
 * Segmentation through a hosted SAM-style text-prompt service.
 *
 * Env: LMPATH_SEG_URL (required) pointing at an endpoint that accepts
 * {label, width, height, image: base64 PNG} and answers {mask: base64 of
 * width*height bytes}; LMPATH_SEG_TOKEN optionally adds a bearer token.
 * Any mask byte > 0 is treated as foreground. Label expansion is refused.
 */

import { Handlers, SegmentRequest, serve } from "./protocol";

async function segmentViaService(req: SegmentRequest): Promise<Uint8Array> {
  const url = process.env.LMPATH_SEG_URL;
  if (!url) {
    throw new Error("LMPATH_SEG_URL not set");
  }
  const headers: Record<string, string> = { "content-type": "application/json" };
  const token = process.env.LMPATH_SEG_TOKEN;
  if (token) {
    headers.authorization = `Bearer ${token}`;
  }
  const resp = await fetch(url, {
    method: "POST",
    headers,
    body: JSON.stringify({
      label: req.label,
      width: req.width,
      height: req.height,
      image: req.image,
    }),
  });
  if (!resp.ok) {
    throw new Error(`segmentation endpoint returned HTTP ${resp.status}`);
  }
  const doc = (await resp.json()) as { mask?: string };
  if (typeof doc.mask !== "string") {
    throw new Error("segmentation endpoint response missing mask");
  }
  const raw = Buffer.from(doc.mask, "base64");
  if (raw.length !== req.width * req.height) {
    throw new Error(
      `segmentation endpoint mask has ${raw.length} bytes, expected ${req.width * req.height}`,
    );
  }
  return Uint8Array.from(raw, (b) => (b > 0 ? 1 : 0));
}

export const samHandlers: Handlers = {
  segment: segmentViaService,
  expand: () => {
    throw new Error("label expansion not supported by the segmentation adapter");
  },
};

if (require.main === module) {
  serve(samHandlers).then(() => process.exit(0));
}
