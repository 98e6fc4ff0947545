"""Chat-completion gateway with record/replay cassettes and adapter routing.

Every LLM call is content-addressed: the request is serialized to a
canonical JSON form and hashed, and that digest keys the cassette.  Replay
mode never touches the network, which is what makes generation runs
reproducible byte for byte.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import requests

from .model import Phase, ToolId

DEFAULT_MAX_TOKENS = 1024
DEFAULT_TEMPERATURE = 0.0
STOP_SEQUENCES = ("#END",)
PLANNER_KEY = "planner"
API_KEY_ENV = "TABREASON_API_KEY"


class BackendError(Exception):
    """The server answered with a failure, or the transport broke."""

    def __init__(self, status: int, body: str) -> None:
        super().__init__(f"backend error {status}: {body[:200]}")
        self.status = status
        self.body = body


class Timeout(Exception):
    """The backend did not answer within the configured window."""


class CassetteMiss(KeyError):
    """Replay mode saw a request that was never recorded."""

    def __init__(self, digest: str) -> None:
        super().__init__(digest)
        self.digest = digest

    def __str__(self) -> str:
        return f"no cassette entry for digest {self.digest}"


class UnroutedTool(LookupError):
    """The routing table has no adapter for this tool in this phase."""

    def __init__(self, key: str, phase: Phase) -> None:
        super().__init__(f"no route for {key!r} in phase {phase.value}")
        self.key = key
        self.phase = phase


@dataclass(frozen=True, slots=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True, slots=True)
class ChatRequest:
    """One completion request, hashable by content."""

    adapter: str
    messages: tuple[Message, ...]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    stop: tuple[str, ...] = STOP_SEQUENCES

    @classmethod
    def for_prompt(
        cls,
        adapter: str,
        prompt: str,
        temperature: float = DEFAULT_TEMPERATURE,
        max_tokens: int = DEFAULT_MAX_TOKENS,
    ) -> "ChatRequest":
        return cls(
            adapter=adapter,
            messages=(Message("user", prompt),),
            temperature=temperature,
            max_tokens=max_tokens,
        )

    def canonical_json(self) -> str:
        payload = {
            "adapter": self.adapter,
            "messages": [
                {"content": m.content, "role": m.role} for m in self.messages
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "stop": list(self.stop),
        }
        return json.dumps(
            payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False
        )

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


@dataclass(frozen=True, slots=True)
class CallDigest:
    """What a completed call leaves behind in records and cassettes."""

    digest: str
    response: str
    meta: Mapping[str, str] = field(default_factory=dict)


class BackendMode(enum.Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


def _truncate_at_stop(text: str, stop: Iterable[str]) -> str:
    """Servers are asked to honor stop sequences; cut again just in case."""
    for marker in stop:
        at = text.find(marker)
        if at >= 0:
            text = text[:at]
    return text


class LiveClient:
    """Plain HTTP client for a chat-completions endpoint."""

    def __init__(
        self,
        base_url: str,
        api_key_env: str = API_KEY_ENV,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.session = session or requests.Session()

    def complete(self, request: ChatRequest) -> CallDigest:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": request.adapter,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stop": list(request.stop),
        }
        try:
            resp = self.session.post(
                self.base_url + "/v1/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout,
            )
        except requests.Timeout as exc:
            raise Timeout(str(exc)) from exc
        except requests.RequestException as exc:
            raise BackendError(0, str(exc)) from exc
        if resp.status_code != 200:
            raise BackendError(resp.status_code, resp.text)
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise BackendError(resp.status_code, f"malformed response: {resp.text[:200]}") from exc
        content = _truncate_at_stop(content, request.stop)
        return CallDigest(
            digest=request.digest,
            response=content,
            meta={"adapter": request.adapter, "mode": BackendMode.LIVE.value},
        )

    def close(self) -> None:
        self.session.close()


def read_cassette(path: Path) -> dict[str, CallDigest]:
    """Load a cassette file into a digest-keyed map. Last write wins."""
    entries: dict[str, CallDigest] = {}
    if not path.exists():
        return entries
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            entries[obj["digest"]] = CallDigest(
                digest=obj["digest"],
                response=obj["response"],
                meta=obj.get("meta", {}),
            )
    return entries


def _entry_line(digest: str, request: ChatRequest | None, response: str, meta: Mapping[str, str]) -> str:
    obj = {
        "digest": digest,
        "request": json.loads(request.canonical_json()) if request else None,
        "response": response,
        "meta": dict(meta),
    }
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class CassetteWriter:
    """Append-only cassette segment; one per worker, merged on close."""

    def __init__(self, path: Path) -> None:
        self.path = path
        self._fh = path.open("a", encoding="utf-8")
        self._lock = threading.Lock()

    def add(self, request: ChatRequest, call: CallDigest) -> None:
        line = _entry_line(call.digest, request, call.response, call.meta)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def merge_cassette_segments(target: Path, segments: Iterable[Path]) -> None:
    """Fold worker segments into the main cassette, sorted and deduplicated."""
    merged: dict[str, dict] = {}
    for path in [target, *segments]:
        if not path.exists():
            continue
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    obj = json.loads(line)
                    merged.setdefault(obj["digest"], obj)
    tmp = target.with_suffix(target.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for digest in sorted(merged):
            fh.write(
                json.dumps(
                    merged[digest], sort_keys=True, separators=(",", ":"), ensure_ascii=False
                )
                + "\n"
            )
    tmp.replace(target)
    for path in segments:
        if path.exists() and path != target:
            path.unlink()


class ReplayClient:
    """Serves completions from a cassette; the network does not exist."""

    def __init__(self, cassette: Path) -> None:
        self.path = cassette
        self._entries = read_cassette(cassette)

    def complete(self, request: ChatRequest) -> CallDigest:
        found = self._entries.get(request.digest)
        if found is None:
            raise CassetteMiss(request.digest)
        return found

    def close(self) -> None:
        pass


class RecordingClient:
    """Live client that persists every exchange to a cassette segment.

    Already-recorded digests are served from the primed cassette without a
    network call, so re-running a partially recorded run is cheap.
    """

    def __init__(self, live: LiveClient, writer: CassetteWriter, primed: dict[str, CallDigest] | None = None) -> None:
        self.live = live
        self.writer = writer
        self._known = dict(primed or {})

    def complete(self, request: ChatRequest) -> CallDigest:
        hit = self._known.get(request.digest)
        if hit is not None:
            return hit
        call = self.live.complete(request)
        call = CallDigest(call.digest, call.response, {**call.meta, "mode": BackendMode.RECORD.value})
        self.writer.add(request, call)
        self._known[request.digest] = call
        return call

    def close(self) -> None:
        self.writer.close()
        self.live.close()


class RoutingTable:
    """Phase-aware map from tool keys (or "planner") to adapter names."""

    def __init__(self, table: Mapping[Phase, Mapping[str, str]]) -> None:
        for phase, section in table.items():
            if phase is Phase.PE and any(k != "*" for k in section):
                raise ValueError(
                    "PE phase routes everything to the shared base model; "
                    "per-tool adapters are not allowed"
                )
        self._table = {phase: dict(section) for phase, section in table.items()}

    @classmethod
    def default(cls) -> "RoutingTable":
        return cls({phase: {"*": "base"} for phase in Phase})

    @classmethod
    def from_dict(cls, raw: Mapping[str, Mapping[str, str]]) -> "RoutingTable":
        table: dict[Phase, dict[str, str]] = {}
        for phase_token, section in raw.items():
            table[Phase(phase_token)] = dict(section)
        return cls(table)

    @classmethod
    def load(cls, path: Path) -> "RoutingTable":
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def as_dict(self) -> dict[str, dict[str, str]]:
        return {
            phase.value: dict(sorted(section.items()))
            for phase, section in sorted(self._table.items(), key=lambda kv: kv[0].value)
        }

    def route(self, key: str | ToolId, phase: Phase) -> str:
        if isinstance(key, ToolId):
            key = key.key
        section = self._table.get(phase)
        if section is None:
            raise UnroutedTool(key, phase)
        adapter = section.get(key, section.get("*"))
        if adapter is None:
            raise UnroutedTool(key, phase)
        return adapter
