"""Label-expansion and segmentation backends.

Two segmentation backends are provided: a synthetic one that rasterizes
ground-truth scenario polygons (hermetic, used by all tests) and a subprocess
client speaking line-delimited JSON to an external adapter process. The
adapter protocol:

    request  {"id": n, "kind": "segment", "label": l, "width": w, "height": h,
              "image": base64 PNG}
          or {"id": n, "kind": "expand", "target": t}
    response {"id": n, "mask": base64 of w*h bytes in {0,1}}
          or {"id": n, "labels": [..]}
          or {"id": n, "error": "..."}

One request is in flight per worker; responses echo the request id in order.
"""

from __future__ import annotations

import base64
import io
import json
import queue
import shlex
import subprocess
import threading
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .errors import BackendError, InputError
from .geoplan import ring_mask
from .prior import LabelSet, WindowGrid
from .scenario import Scenario
from .tiles import TileMosaic
from .waypoints import Domain

MAX_LABELS = 10


class StaticLabelMap:
    """Label expansion from a user-editable ``labels.map`` text file.

    Format: one ``target: label1, label2, ...`` entry per line; ``#`` comments.
    """

    def __init__(self, entries: Mapping[str, Sequence[str]]):
        self._entries = {k.strip().lower(): tuple(v) for k, v in entries.items()}

    @classmethod
    def from_file(cls, path: str | Path) -> "StaticLabelMap":
        entries: dict[str, tuple[str, ...]] = {}
        for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise InputError(f"labels map line {ln}: expected 'target: a, b, c'")
            target, rest = line.split(":", 1)
            labels = tuple(l.strip() for l in rest.split(",") if l.strip())
            if not labels:
                raise InputError(f"labels map line {ln}: no labels for '{target.strip()}'")
            entries[target.strip().lower()] = labels
        return cls(entries)

    def expand(self, target: str) -> list[str] | None:
        got = self._entries.get(target.strip().lower())
        return list(got) if got is not None else None


def expand_labels(target: str, backend) -> LabelSet:
    """Expand a target object into context labels, caching per target.

    The backend must provide ``expand(target) -> list[str] | None``; ``None``
    means "no mapping available".
    """
    if not target or not target.strip():
        raise InputError("empty target")
    cache = getattr(backend, "_label_cache", None)
    if cache is None:
        cache = {}
        try:
            backend._label_cache = cache
        except AttributeError:
            pass
    key = target.strip().lower()
    if key not in cache:
        labels = backend.expand(target)
        if labels is None:
            raise BackendError(f"no label expansion available for '{target}'")
        if not labels:
            raise BackendError(f"label backend returned an empty set for '{target}'")
        deduped: list[str] = []
        seen: set[str] = set()
        for l in labels:
            lk = l.strip().lower()
            if lk and lk not in seen:
                seen.add(lk)
                deduped.append(l.strip())
        cache[key] = tuple(deduped[:MAX_LABELS])
    return LabelSet(target=target, labels=cache[key])


class SyntheticBackend:
    """Ground-truth segmentation from scenario polygons.

    Masks are rasterized from the labeled world-coordinate regions at the
    mosaic's pixel centers, so outputs are exact and deterministic.
    """

    def __init__(self, scenario: Scenario, domain: Domain):
        self._regions: dict[str, list] = {}
        for r in scenario.regions:
            self._regions.setdefault(r.label.lower(), []).append(r.polygon)
        self._xs = domain.xs
        self._ys = domain.ys

    def segment(
        self, image: np.ndarray, label: str, *, origin: tuple[int, int] = (0, 0)
    ) -> np.ndarray:
        h, w = image.shape[:2]
        c0, r0 = origin
        xs = self._xs[c0 : c0 + w]
        ys = self._ys[r0 : r0 + h]
        out = np.zeros((h, w), dtype=np.uint8)
        for ring in self._regions.get(label.lower(), []):
            out |= ring_mask(xs, ys, ring).astype(np.uint8)
        return out

    def clone(self) -> "SyntheticBackend":
        return self  # pure and thread-safe

    def close(self) -> None:
        pass


def _encode_png(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class SubprocessBackend:
    """Line-delimited JSON client for an external adapter process."""

    def __init__(self, cmd: str | Sequence[str]):
        self._cmd = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        if not self._cmd:
            raise InputError("empty backend command")
        try:
            self._proc = subprocess.Popen(
                self._cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise BackendError(f"cannot start backend {self._cmd!r}: {e}") from e
        self._next_id = 0
        self._lock = threading.Lock()

    def _roundtrip(self, request: dict) -> dict:
        with self._lock:  # one request in flight per connection
            rid = self._next_id
            self._next_id += 1
            request = {"id": rid, **request}
            try:
                self._proc.stdin.write(json.dumps(request) + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
            except (BrokenPipeError, OSError) as e:
                raise BackendError(f"backend pipe failure: {e}") from e
        if not line:
            raise BackendError("backend closed the stream")
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as e:
            raise BackendError(f"backend sent non-JSON response: {e}") from e
        if resp.get("error"):
            raise BackendError(f"backend error: {resp['error']}")
        if resp.get("id") != rid:
            raise BackendError(
                f"backend protocol violation: response id {resp.get('id')} != {rid}"
            )
        return resp

    def expand(self, target: str) -> list[str]:
        resp = self._roundtrip({"kind": "expand", "target": target})
        labels = resp.get("labels")
        if not isinstance(labels, list) or not all(isinstance(l, str) for l in labels):
            raise BackendError("backend protocol violation: bad labels payload")
        return labels

    def segment(
        self, image: np.ndarray, label: str, *, origin: tuple[int, int] = (0, 0)
    ) -> np.ndarray:
        h, w = image.shape[:2]
        resp = self._roundtrip(
            {
                "kind": "segment",
                "label": label,
                "width": w,
                "height": h,
                "image": _encode_png(image),
            }
        )
        raw = resp.get("mask")
        if not isinstance(raw, str):
            raise BackendError("backend protocol violation: missing mask")
        try:
            data = base64.b64decode(raw, validate=True)
        except Exception as e:
            raise BackendError(f"backend sent undecodable mask: {e}") from e
        if len(data) != w * h:
            raise BackendError(f"mask shape mismatch: {len(data)} bytes != {w}x{h}")
        mask = np.frombuffer(data, dtype=np.uint8).reshape(h, w)
        if mask.max(initial=0) > 1:
            raise BackendError("mask values must be in {0, 1}")
        return mask

    def clone(self) -> "SubprocessBackend":
        return SubprocessBackend(self._cmd)

    def close(self) -> None:
        if self._proc.stdin and not self._proc.stdin.closed:
            self._proc.stdin.close()
        self._proc.wait(timeout=10)


def segment_windows(
    mosaic: TileMosaic,
    grid: WindowGrid,
    labels: LabelSet,
    backend,
    *,
    workers: int = 1,
) -> dict[tuple[int, str], np.ndarray]:
    """Run the segmentation backend over every (window, label) pair.

    Workers each own one backend connection (``backend.clone()``); results are
    keyed by (window index, label) so aggregation is independent of completion
    order.
    """
    jobs = [
        (wi, label) for wi in range(len(grid.windows)) for label in labels.labels
    ]
    results: dict[tuple[int, str], np.ndarray] = {}

    def run_one(be, wi: int, label: str) -> np.ndarray:
        x, y, w, h = grid.windows[wi]
        window = mosaic.pixels[y : y + h, x : x + w]
        mask = np.asarray(be.segment(window, label, origin=(x, y)))
        if mask.shape != (h, w):
            raise BackendError(
                f"mask shape mismatch for window {wi}: {mask.shape} != {(h, w)}"
            )
        if mask.max(initial=0) > 1 or mask.min(initial=0) < 0:
            raise BackendError("mask values must be in {0, 1}")
        return mask.astype(np.uint8)

    if workers <= 1 or len(jobs) <= 1:
        for wi, label in jobs:
            results[(wi, label)] = run_one(backend, wi, label)
        return results

    pool = [backend] + [backend.clone() for _ in range(workers - 1)]
    q: queue.Queue = queue.Queue()
    for job in jobs:
        q.put(job)
    errors: list[Exception] = []
    lock = threading.Lock()

    def worker(be) -> None:
        while True:
            try:
                wi, label = q.get_nowait()
            except queue.Empty:
                return
            try:
                mask = run_one(be, wi, label)
                with lock:
                    results[(wi, label)] = mask
            except Exception as e:  # propagate first failure, drain queue
                with lock:
                    errors.append(e)
                return

    threads = [threading.Thread(target=worker, args=(be,)) for be in pool]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for be in pool[1:]:
        if be is not backend:
            be.close()
    if errors:
        raise errors[0]
    if len(results) != len(jobs):
        raise BackendError("segmentation aborted before completing all windows")
    return results


def run_protocol_conformance(cmd: str | Sequence[str], requests: int = 100, seed: int = 0) -> dict:
    """Drive an adapter through randomized requests, validating the protocol.

    Checks framing (one response per request, in order), id echo, mask length
    and value range, and recovery from a malformed line. Raises BackendError
    on any violation; returns simple counts on success.
    """
    rng = np.random.default_rng(seed)
    be = SubprocessBackend(cmd)
    stats = {"segment": 0, "expand": 0}
    try:
        for _ in range(requests):
            if rng.random() < 0.5:
                w = int(rng.integers(1, 48))
                h = int(rng.integers(1, 48))
                img = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
                mask = be.segment(img, "parking lot")
                if mask.shape != (h, w):
                    raise BackendError("conformance: mask shape mismatch")
                stats["segment"] += 1
            else:
                labels = be.expand(str(rng.choice(["car", "building", "boat"])))
                if not labels:
                    raise BackendError("conformance: empty label expansion")
                stats["expand"] += 1
        # malformed line: adapter must answer with an error and keep serving
        with be._lock:
            be._proc.stdin.write("this is not json\n")
            be._proc.stdin.flush()
            line = be._proc.stdout.readline()
        resp = json.loads(line)
        if "error" not in resp or resp.get("id") is not None:
            raise BackendError("conformance: malformed line not answered with a null-id error")
        if not be.expand("car"):
            raise BackendError("conformance: stream did not survive a malformed line")
    finally:
        be.close()
    return stats
