#!/usr/bin/env python3
"""Minimal protocol stub for exercising the subprocess backend client.

STUB_MODE=ok|short-mask|bad-id selects well-behaved or misbehaving variants.
"""

import base64
import json
import os
import sys

LABELS = {
    "car": ["parking lot", "road", "driveway"],
    "building": ["building"],
    "boat": ["marina", "dock", "shoreline"],
}


def main():
    mode = os.environ.get("STUB_MODE", "ok")
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            print(json.dumps({"id": None, "error": "malformed request"}), flush=True)
            continue
        rid = req.get("id")
        if mode == "bad-id":
            rid = -1
        kind = req.get("kind")
        if kind == "expand":
            tgt = str(req.get("target", "")).lower()
            labels = LABELS.get(tgt, [tgt] if tgt else [])
            print(json.dumps({"id": rid, "labels": labels}), flush=True)
        elif kind == "segment":
            w, h = int(req["width"]), int(req["height"])
            n = w * h - 3 if mode == "short-mask" else w * h
            mask = bytes(max(n, 0))
            print(json.dumps({"id": rid, "mask": base64.b64encode(mask).decode()}), flush=True)
        else:
            print(json.dumps({"id": rid, "error": f"unknown kind {kind!r}"}), flush=True)


if __name__ == "__main__":
    main()
