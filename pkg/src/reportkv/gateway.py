"""Uniform access to multimodal chat providers, with record/replay cassettes.

Every request is identified by a fingerprint over (provider id, prompt text,
image digest, modality). In replay mode the gateway never touches the network;
a missing fingerprint is a :class:`CassetteMiss`.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from .errors import CassetteMiss, EmptyResponseError, GatewayError, ProviderConfigError, TransportError
from .prompts import RenderedPrompt

logger = logging.getLogger(__name__)

MODES = ("live", "record", "replay")


@dataclass(frozen=True)
class ModalityConfig:
    send_text: bool = True
    send_image: bool = False

    def __post_init__(self):
        if not (self.send_text or self.send_image):
            raise ValueError("a modality must send text, image, or both")

    @property
    def name(self) -> str:
        if self.send_text and self.send_image:
            return "both"
        return "text" if self.send_text else "image"

    @classmethod
    def parse(cls, name: str) -> "ModalityConfig":
        try:
            return {"text": cls(True, False), "image": cls(False, True), "both": cls(True, True)}[name]
        except KeyError:
            raise ValueError(f"unknown modality {name!r}; expected text, image or both") from None


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "mock"
    model: str = "synthetic"
    base_url: str | None = None
    api_key_env: str | None = None
    requests_per_minute: float = 30.0
    max_image_edge: int = 2048
    seed: int = 0
    timeout: float = 120.0
    rules: tuple = ()

    @property
    def provider_id(self) -> str:
        return f"{self.kind}:{self.model}"

    @classmethod
    def from_dict(cls, obj: dict) -> "ProviderConfig":
        known = {k: obj[k] for k in ("kind", "model", "base_url", "api_key_env", "requests_per_minute",
                                      "max_image_edge", "seed", "timeout") if k in obj}
        if known.get("kind", "mock") not in ("openai", "gemini", "mock"):
            raise ProviderConfigError(f"unknown provider kind {known['kind']!r}")
        return cls(**known, rules=tuple(obj.get("rules", ())))

    @classmethod
    def load(cls, path: str | Path) -> "ProviderConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class Request:
    prompt: RenderedPrompt
    image: bytes | None
    modality: ModalityConfig


def image_digest(image: bytes | None) -> str | None:
    return None if image is None else hashlib.sha256(image).hexdigest()


def fingerprint(provider_id: str, prompt_text: str, image: bytes | None, modality: ModalityConfig) -> str:
    payload = {
        "provider": provider_id,
        "prompt": prompt_text,
        "image": image_digest(image) if modality.send_image else None,
        "modality": modality.name,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")).hexdigest()


# --- cassettes --------------------------------------------------------------


class Cassette:
    """Fingerprint -> response store backed by a JSON-lines file."""

    def __init__(self, entries: dict[str, str] | None = None, path: str | Path | None = None):
        self.entries: dict[str, str] = dict(entries or {})
        self.path = Path(path) if path else None
        self._lock = threading.Lock()

    @classmethod
    def load(cls, *paths: str | Path) -> "Cassette":
        """Merge one or more cassette files (or directories of ``*.jsonl``)."""
        entries: dict[str, str] = {}
        files: list[Path] = []
        for p in map(Path, paths):
            files.extend(sorted(p.glob("*.jsonl")) if p.is_dir() else [p])
        for f in files:
            for n, line in enumerate(f.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                obj = json.loads(line)
                fp, resp = obj["fingerprint"], obj["response"]
                if entries.get(fp, resp) != resp:
                    raise GatewayError(f"{f}:{n}: conflicting responses for fingerprint {fp}")
                entries[fp] = resp
        return cls(entries, files[0] if len(files) == 1 else None)

    def get(self, fp: str) -> str | None:
        return self.entries.get(fp)

    def put(self, fp: str, response: str) -> None:
        with self._lock:
            self.entries[fp] = response

    def dumps(self) -> str:
        # Sorted so the file does not depend on call order.
        return "".join(json.dumps({"fingerprint": fp, "response": self.entries[fp]}, ensure_ascii=False) + "\n"
                       for fp in sorted(self.entries))

    def save(self, path: str | Path | None = None) -> Path:
        target = Path(path or self.path)
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_suffix(target.suffix + ".tmp")
        tmp.write_text(self.dumps(), encoding="utf-8")
        os.replace(tmp, target)
        return target

    def __len__(self) -> int:
        return len(self.entries)


# --- rate limiting ----------------------------------------------------------


class TokenBucket:
    def __init__(self, rate_per_minute: float, capacity: float | None = None,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.rate = rate_per_minute / 60.0
        self.capacity = capacity if capacity is not None else max(1.0, rate_per_minute / 60.0)
        self.tokens = self.capacity
        self.clock, self.sleep = clock, sleep
        self.stamp = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            while True:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
                self.stamp = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                self.sleep((1 - self.tokens) / self.rate)


# --- provider adapters ------------------------------------------------------


class Provider(Protocol):
    provider_id: str

    def send(self, request: Request) -> str: ...


class RetryableError(Exception):
    pass


def bound_image(image: bytes, max_edge: int) -> tuple[bytes, str]:
    """Re-encode as PNG when the long edge exceeds ``max_edge``; returns (bytes, mime)."""
    from PIL import Image

    with Image.open(io.BytesIO(image)) as im:
        mime = Image.MIME.get(im.format or "", "image/png")
        if max(im.size) <= max_edge:
            return image, mime
        scale = max_edge / max(im.size)
        resized = im.convert("RGB").resize((max(1, round(im.width * scale)), max(1, round(im.height * scale))))
        out = io.BytesIO()
        resized.save(out, format="PNG")
        return out.getvalue(), "image/png"


def _credential(config: ProviderConfig) -> str:
    if not config.api_key_env:
        raise ProviderConfigError(f"{config.kind} provider needs api_key_env (an environment variable name)")
    value = os.environ.get(config.api_key_env)
    if not value:
        raise ProviderConfigError(f"environment variable {config.api_key_env} is not set")
    return value


class _HttpProvider:
    default_base_url = ""

    def __init__(self, config: ProviderConfig, client=None):
        import httpx

        self.config = config
        self.provider_id = config.provider_id
        self._key = _credential(config)  # checked at startup, not at call time
        self.base_url = (config.base_url or self.default_base_url).rstrip("/")
        self.client = client or httpx.Client(timeout=config.timeout)

    def _image_part(self, request: Request):
        if not request.modality.send_image:
            return None
        if request.image is None:
            raise ValueError("image modality requested but no image supplied")
        data, mime = bound_image(request.image, self.config.max_image_edge)
        return base64.b64encode(data).decode("ascii"), mime

    def _post(self, url: str, payload: dict, headers: dict) -> dict:
        import httpx

        try:
            resp = self.client.post(url, json=payload, headers=headers)
        except httpx.TransportError as exc:
            raise RetryableError(f"{type(exc).__name__} contacting {self.provider_id}") from None
        if resp.status_code == 429 or resp.status_code >= 500:
            raise RetryableError(f"{self.provider_id} answered HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise TransportError(f"{self.provider_id} rejected the request with HTTP {resp.status_code}")
        return resp.json()


class OpenAICompatible(_HttpProvider):
    default_base_url = "https://api.openai.com/v1"

    def build_payload(self, request: Request) -> dict:
        content = [{"type": "text", "text": request.prompt.user}]
        image = self._image_part(request)
        if image:
            b64, mime = image
            content.append({"type": "image_url", "image_url": {"url": f"data:{mime};base64,{b64}"}})
        return {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.prompt.system},
                {"role": "user", "content": content},
            ],
            "temperature": 0,
            "seed": self.config.seed,
        }

    def send(self, request: Request) -> str:
        body = self._post(f"{self.base_url}/chat/completions", self.build_payload(request),
                          {"Authorization": f"Bearer {self._key}"})
        try:
            return body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError):
            return ""


class GeminiCompatible(_HttpProvider):
    default_base_url = "https://generativelanguage.googleapis.com/v1beta"

    def build_payload(self, request: Request) -> dict:
        parts = [{"text": request.prompt.user}]
        image = self._image_part(request)
        if image:
            b64, mime = image
            parts.append({"inline_data": {"mime_type": mime, "data": b64}})
        return {
            "systemInstruction": {"parts": [{"text": request.prompt.system}]},
            "contents": [{"role": "user", "parts": parts}],
            "generationConfig": {"temperature": 0, "seed": self.config.seed},
        }

    def send(self, request: Request) -> str:
        body = self._post(f"{self.base_url}/models/{self.config.model}:generateContent",
                          self.build_payload(request), {"x-goog-api-key": self._key})
        try:
            parts = body["candidates"][0]["content"]["parts"]
        except (KeyError, IndexError, TypeError):
            return ""
        return "".join(p.get("text", "") for p in parts)


class ScriptedMock:
    """Offline provider answering from substitution rules.

    Each rule is a dict with ``action`` and optional ``kind`` (prompt kind it
    applies to) and ``match`` (regex that must occur in the prompt). Actions:

    * ``echo``: return the prompt's data text in a fenced text block;
    * ``fixed``: return ``response`` verbatim;
    * ``scenarios``: return ``ids`` as a classification answer;
    * ``records``: match ``pattern`` line by line against the data text and
      turn each match (named groups ``key``, ``value``, optional ``unit``) into
      a record under ``scenario_id``.

    The first applicable rule wins.
    """

    def __init__(self, rules, model: str = "scripted"):
        self.rules = [dict(r) for r in rules]
        self.provider_id = f"mock:{model}"

    def send(self, request: Request) -> str:
        from .prompts import RawRecord, render_records, render_scenario_ids, render_text_block

        prompt = request.prompt
        for rule in self.rules:
            if rule.get("kind") not in (None, prompt.kind):
                continue
            if "match" in rule and not re.search(rule["match"], prompt.user):
                continue
            action = rule["action"]
            if action == "echo":
                return render_text_block(prompt.data)
            if action == "fixed":
                return rule["response"]
            if action == "scenarios":
                return render_scenario_ids(rule["ids"])
            if action == "records":
                pattern = re.compile(rule["pattern"])
                records = []
                for line in prompt.data.splitlines():
                    m = pattern.search(line)
                    if m:
                        groups = m.groupdict()
                        records.append(RawRecord(rule.get("scenario_id", groups.get("scenario_id") or ""),
                                                 groups["key"].strip(), groups["value"].strip(), groups.get("unit")))
                return render_records(records)
            raise ValueError(f"unknown mock action {action!r}")
        return ""


def make_provider(config: ProviderConfig, client=None) -> Provider:
    if config.kind == "openai":
        return OpenAICompatible(config, client)
    if config.kind == "gemini":
        return GeminiCompatible(config, client)
    if config.kind == "mock":
        return ScriptedMock(config.rules, config.model)
    raise ProviderConfigError(f"unknown provider kind {config.kind!r}")


# --- gateway ----------------------------------------------------------------


@dataclass
class Gateway:
    provider_id: str
    provider: Provider | None = None
    cassette: Cassette | None = None
    mode: str = "live"
    retries: int = 3
    backoff: float = 1.0
    limiter: TokenBucket | None = None
    sleep: Callable[[float], None] = time.sleep
    calls: int = field(default=0, init=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown gateway mode {self.mode!r}")
        if self.mode in ("record", "replay") and self.cassette is None:
            raise ProviderConfigError(f"{self.mode} mode needs a cassette")
        if self.mode in ("live", "record") and self.provider is None:
            raise ProviderConfigError(f"{self.mode} mode needs a provider")

    @classmethod
    def from_config(cls, config: ProviderConfig, mode: str = "replay", cassette: Cassette | None = None,
                    client=None) -> "Gateway":
        provider = None if mode == "replay" else make_provider(config, client)
        limiter = None if mode == "replay" or config.kind == "mock" else TokenBucket(config.requests_per_minute)
        return cls(config.provider_id, provider, cassette, mode, limiter=limiter)

    def complete(self, prompt: RenderedPrompt, image: bytes | None = None,
                 modality: ModalityConfig = ModalityConfig()) -> str:
        if modality.send_image and image is None:
            raise ValueError("image modality requested but no image supplied")
        if modality.send_text and not prompt.data.strip():
            raise ValueError("text modality requested but the prompt carries no OCR text")
        fp = fingerprint(self.provider_id, prompt.text, image, modality)
        if self.mode == "replay":
            response = self.cassette.get(fp)
            if response is None:
                raise CassetteMiss(fp)
        else:
            response = self._send_with_retries(Request(prompt, image if modality.send_image else None, modality))
            if self.mode == "record":
                self.cassette.put(fp, response)
        if not response.strip():
            raise EmptyResponseError(f"{self.provider_id} returned an empty response ({prompt.kind})")
        return response

    def _send_with_retries(self, request: Request) -> str:
        last = None
        for attempt in range(self.retries + 1):
            if self.limiter:
                self.limiter.acquire()
            try:
                self.calls += 1
                return self.provider.send(request)
            except RetryableError as exc:
                last = exc
                if attempt < self.retries:
                    delay = self.backoff * 2 ** attempt
                    logger.info("retrying %s in %.1fs: %s", request.prompt.kind, delay, exc)
                    self.sleep(delay)
        raise TransportError(f"giving up after {self.retries + 1} attempts: {last}")


def echo_mock() -> ScriptedMock:
    """Mock that returns any prompt's data text as a fenced block."""
    return ScriptedMock([{"action": "echo"}], model="echo")

