"""Line-oriented JSON request/response loop for foreign-runtime bridges.

One request per line on stdin, one response per line on stdout. A handle
opened with a reward config stays valid until closed; every response is
either ``{"ok": true, ...}`` or ``{"ok": false, "error": <kernel error
name>, "message": ...}`` so callers can rethrow typed errors.

Operations:
    {"op": "open", "config": {...}}                  -> {"ok": true, "handle": n}
    {"op": "score", "handle": n, "chain": <json string or object>, "gold": <label>}
    {"op": "validate", "chain": <json string or object>}
    {"op": "advantages", "rewards": [...], "epsilon": e}
    {"op": "close", "handle": n}
    {"op": "handles"}                                -> open-handle count
    {"op": "ping"}
"""

from __future__ import annotations

import json

from .chainformat import document_from_json_obj, parse_chain
from .errors import ClosedHandle, KernelError
from .grpo import group_advantages
from .rewards import RewardConfig, composite_reward
from .scm import Label, check_structural_validity


class HandleRegistry:
    def __init__(self):
        self._handles: dict[int, RewardConfig] = {}
        self._next = 1

    def open(self, config: dict) -> int:
        handle = self._next
        self._next += 1
        self._handles[handle] = RewardConfig.from_mapping(config or {})
        return handle

    def get(self, handle) -> RewardConfig:
        try:
            return self._handles[handle]
        except (KeyError, TypeError):
            raise ClosedHandle(f"handle {handle} is not open") from None

    def close(self, handle) -> None:
        if handle not in self._handles:
            raise ClosedHandle(f"handle {handle} is not open")
        del self._handles[handle]

    def count(self) -> int:
        return len(self._handles)


def _parse_request_chain(raw):
    if isinstance(raw, str):
        return parse_chain(raw, "json")
    return document_from_json_obj(raw)


def handle_request(registry: HandleRegistry, request: dict) -> dict:
    if not isinstance(request, dict):
        raise KernelError("request must be a JSON object")
    op = request.get("op")
    if op == "ping":
        return {"ok": True}
    if op == "open":
        return {"ok": True, "handle": registry.open(request.get("config", {}))}
    if op == "close":
        registry.close(request.get("handle"))
        return {"ok": True}
    if op == "handles":
        return {"ok": True, "result": registry.count()}
    if op == "score":
        cfg = registry.get(request.get("handle"))
        doc = _parse_request_chain(request["chain"])
        gold = Label.parse(request["gold"])
        return {"ok": True, "result": composite_reward(doc, gold, cfg).to_json_dict()}
    if op == "validate":
        doc = _parse_request_chain(request["chain"])
        return {"ok": True, "result": check_structural_validity(doc.chain).to_json_dict()}
    if op == "advantages":
        rewards = request.get("rewards")
        if not isinstance(rewards, list):
            raise KernelError("advantages needs a rewards array")
        epsilon = float(request.get("epsilon", 1e-8))
        return {"ok": True, "result": group_advantages(rewards, epsilon)}
    raise KernelError(f"unknown op {op!r}")


def serve(stdin, stdout) -> None:
    """Process requests until stdin closes. Never raises on a bad request."""
    registry = HandleRegistry()
    for line in stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
            response = handle_request(registry, request)
        except KernelError as exc:
            response = {"ok": False, "error": exc.code, "message": str(exc)}
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            response = {"ok": False, "error": type(exc).__name__, "message": str(exc)}
        stdout.write(json.dumps(response, ensure_ascii=False, separators=(",", ":")) + "\n")
        stdout.flush()
