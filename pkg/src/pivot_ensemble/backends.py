"""Translation and completion backends.

Two implementations share one surface:

* :class:`MockBackend` (endpoint ``"mock:"``) is a deterministic tagging
  function, ``MOCK(src→tgt:text)``, used for offline runs and tests.
* :class:`HttpBackend` speaks JSON over HTTP::

      POST [{"text", "src_lang", "tgt_lang", "params"}, ...]  ->  [{"translation"}, ...]
      POST {"prompt", "params"}                               ->  {"completion"}

:func:`translate_cached` sits in front of either and consults the result
cache so no request is issued when its answer is already stored.
"""

from __future__ import annotations

import hashlib
import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Protocol, Sequence

import httpx

from .core import LanguageCode, lang
from .errors import BackendUnavailable, ConfigError, EmptyHypothesis, ProtocolError
from .storage import CacheKey, DiskCache, Operation, cache_get, cache_put

log = logging.getLogger(__name__)

MOCK_SCHEME = "mock:"

# Decoding defaults for stable, reproducible LLM responses.
DEFAULT_TEMPERATURE = 0.0
DEFAULT_TOP_P = 0.1


@dataclass(frozen=True)
class TranslateRequest:
    text: str
    source_lang: LanguageCode
    target_lang: LanguageCode

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("empty translation request")
        if self.source_lang == self.target_lang:
            raise ValueError("source and target language must differ")

    @classmethod
    def of(cls, text: str, source: str | LanguageCode, target: str | LanguageCode) -> TranslateRequest:
        return cls(text, lang(source), lang(target))


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str = MOCK_SCHEME
    auth_token_env: str | None = None
    timeout: int = 30_000  # ms
    max_batch: int = 32
    retry_limit: int = 3
    decode_params: Mapping[str, float] = field(
        default_factory=lambda: {"temperature": DEFAULT_TEMPERATURE, "top_p": DEFAULT_TOP_P}
    )
    max_in_flight: int = 8
    backoff_base: float = 0.5  # seconds
    canned: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.max_batch < 1:
            raise ConfigError("max_batch must be >= 1")
        if self.timeout <= 0:
            raise ConfigError("timeout must be > 0")
        if self.retry_limit < 0:
            raise ConfigError("retry_limit must be >= 0")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        temperature = float(self.decode_params.get("temperature", DEFAULT_TEMPERATURE))
        top_p = float(self.decode_params.get("top_p", DEFAULT_TOP_P))
        if temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not 0 < top_p <= 1:
            raise ConfigError("top_p must be in (0, 1]")
        object.__setattr__(self, "decode_params", {**self.decode_params, "temperature": temperature, "top_p": top_p})

    @property
    def is_mock(self) -> bool:
        return self.endpoint.startswith(MOCK_SCHEME)

    def with_decode(self, **params: float) -> BackendConfig:
        """Copy with overridden decode parameters (e.g. a sampling temperature)."""
        from dataclasses import replace

        return replace(self, decode_params={**self.decode_params, **params})

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> BackendConfig:
        known = {"endpoint", "auth_token_env", "timeout", "max_batch", "retry_limit", "decode_params",
                 "max_in_flight", "backoff_base", "canned"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown backend config keys: {sorted(unknown)}")
        return cls(**dict(d))

    def to_dict(self) -> dict[str, Any]:
        return {
            "endpoint": self.endpoint,
            "auth_token_env": self.auth_token_env,
            "timeout": self.timeout,
            "max_batch": self.max_batch,
            "retry_limit": self.retry_limit,
            "decode_params": dict(self.decode_params),
            "max_in_flight": self.max_in_flight,
            "backoff_base": self.backoff_base,
            "canned": dict(self.canned),
        }


class Backend(Protocol):
    config: BackendConfig

    @property
    def backend_id(self) -> str: ...

    def translate_batch(self, requests: Sequence[TranslateRequest]) -> list[str]: ...

    def complete_prompt(self, prompt: str) -> str: ...


def _check_batch(requests: Sequence[TranslateRequest]) -> None:
    if not requests:
        raise ValueError("translate_batch needs at least one request")
    pairs = {(r.source_lang, r.target_lang) for r in requests}
    if len(pairs) != 1:
        raise ValueError(f"a batch must share one language pair, got {len(pairs)}")


def _check_empty(translations: list[str]) -> list[str]:
    empty = [i for i, t in enumerate(translations) if not t.strip()]
    if empty:
        raise EmptyHypothesis(empty, translations)
    return translations


def mock_translation(text: str, source: LanguageCode, target: LanguageCode) -> str:
    return f"MOCK({source.code}→{target.code}:{text})"


class MockBackend:
    """Deterministic offline backend.

    Records every batch it serves (``batches``) and counts translated items
    (``calls``) so tests can assert on traffic. ``fail`` may be a predicate
    over a request; any match makes the whole batch fail with
    :class:`BackendUnavailable`, like a server error would.
    """

    def __init__(self, config: BackendConfig | None = None, fail: Callable[[TranslateRequest], bool] | None = None):
        self.config = config or BackendConfig()
        self.fail = fail
        self._lock = threading.Lock()
        self.calls = 0
        self.batches: list[tuple[tuple[str, str], int]] = []
        self.prompts: list[str] = []

    @property
    def backend_id(self) -> str:
        return self.config.endpoint

    def translate_batch(self, requests: Sequence[TranslateRequest]) -> list[str]:
        _check_batch(requests)
        with self._lock:
            self.batches.append(((requests[0].source_lang.code, requests[0].target_lang.code), len(requests)))
            self.calls += len(requests)
        if self.fail is not None and any(self.fail(r) for r in requests):
            raise BackendUnavailable(f"mock failure after {self.config.retry_limit} retries")
        return _check_empty([mock_translation(r.text, r.source_lang, r.target_lang) for r in requests])

    def complete_prompt(self, prompt: str) -> str:
        if not prompt:
            raise ValueError("empty prompt")
        with self._lock:
            self.prompts.append(prompt)
            self.calls += 1
        if prompt in self.config.canned:
            return self.config.canned[prompt]
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]
        return f"MOCK-COMPLETION({digest})"


_RETRYABLE_STATUS = {408, 425, 429, 500, 502, 503, 504}


class HttpBackend:
    """JSON-over-HTTP client with bounded concurrency and retry with backoff."""

    def __init__(self, config: BackendConfig, client: httpx.Client | None = None):
        self.config = config
        self._token = _resolve_token(config)
        self._client = client or httpx.Client(timeout=config.timeout / 1000.0)
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    @property
    def backend_id(self) -> str:
        return self.config.endpoint

    def close(self) -> None:
        self._client.close()

    def _post(self, body: Any) -> Any:
        headers = {"Content-Type": "application/json"}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        attempts = self.config.retry_limit + 1
        last_error = ""
        for attempt in range(attempts):
            if attempt:
                # exponential backoff with full jitter
                delay = self.config.backoff_base * (2 ** (attempt - 1))
                time.sleep(random.uniform(0, delay))
            try:
                with self._slots:
                    resp = self._client.post(self.config.endpoint, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                log.warning("request to %s failed (%s), attempt %d/%d", self.config.endpoint, last_error, attempt + 1, attempts)
                continue
            if resp.status_code in _RETRYABLE_STATUS:
                last_error = f"HTTP {resp.status_code}"
                log.warning("%s answered %d, attempt %d/%d", self.config.endpoint, resp.status_code, attempt + 1, attempts)
                continue
            if not 200 <= resp.status_code < 300:
                raise ProtocolError(f"HTTP {resp.status_code} from {self.config.endpoint}", resp.content)
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError("response body is not JSON", resp.content) from exc
        raise BackendUnavailable(f"{self.config.endpoint} unavailable after {attempts} attempts ({last_error})")

    def translate_batch(self, requests: Sequence[TranslateRequest]) -> list[str]:
        _check_batch(requests)
        params = dict(self.config.decode_params)
        body = [
            {"text": r.text, "src_lang": r.source_lang.code, "tgt_lang": r.target_lang.code, "params": params}
            for r in requests
        ]
        data = self._post(body)
        if not isinstance(data, list) or len(data) != len(requests):
            raise ProtocolError(f"expected a list of {len(requests)} results", repr(data))
        out = []
        for item in data:
            if not isinstance(item, dict) or not isinstance(item.get("translation"), str):
                raise ProtocolError("result item lacks a 'translation' string", repr(item))
            out.append(item["translation"])
        return _check_empty(out)

    def complete_prompt(self, prompt: str) -> str:
        if not prompt:
            raise ValueError("empty prompt")
        data = self._post({"prompt": prompt, "params": dict(self.config.decode_params)})
        if not isinstance(data, dict) or not isinstance(data.get("completion"), str):
            raise ProtocolError("response lacks a 'completion' string", repr(data))
        return data["completion"].rstrip("\n")

    def post_json(self, body: Any) -> Any:
        """Raw POST with the retry policy; used by the external QE client."""
        return self._post(body)


def _resolve_token(config: BackendConfig) -> str | None:
    if not config.auth_token_env:
        return None
    token = os.environ.get(config.auth_token_env)
    if not token:
        raise ConfigError(f"credential variable ${config.auth_token_env} is not set")
    return token


def open_backend(config: BackendConfig) -> MockBackend | HttpBackend:
    """Backend for ``config.endpoint``: ``mock:`` or an http(s) URL."""
    if config.is_mock:
        return MockBackend(config)
    if config.endpoint.startswith(("http://", "https://")):
        return HttpBackend(config)
    raise ConfigError(f"unsupported endpoint {config.endpoint!r}")


def translate_batch(requests: Sequence[TranslateRequest], config: BackendConfig) -> list[str]:
    return open_backend(config).translate_batch(requests)


def complete_prompt(prompt: str, config: BackendConfig) -> str:
    return open_backend(config).complete_prompt(prompt)


# -- caching front ------------------------------------------------------------


def translation_key(request: TranslateRequest, backend: Backend) -> CacheKey:
    payload = {
        "text": request.text,
        "src_lang": request.source_lang.code,
        "tgt_lang": request.target_lang.code,
        "params": dict(backend.config.decode_params),
    }
    return CacheKey.for_payload(Operation.TRANSLATE, payload, backend.backend_id)


def translate_cached(backend: Backend, requests: Sequence[TranslateRequest], cache: DiskCache | None) -> list[str]:
    """Translate a same-pair batch, serving hits from ``cache``.

    Misses go to the backend in chunks of ``max_batch``; results are written
    back before returning.
    """
    _check_batch(requests)
    results: list[str | None] = [None] * len(requests)
    keys = [translation_key(r, backend) for r in requests] if cache is not None else []
    missing: list[int] = []
    for i in range(len(requests)):
        hit = cache_get(cache, keys[i]) if cache is not None else None
        if isinstance(hit, str) and hit:
            results[i] = hit
        else:
            missing.append(i)
    step = backend.config.max_batch
    empty: list[int] = []
    for start in range(0, len(missing), step):
        chunk = missing[start : start + step]
        try:
            out = backend.translate_batch([requests[i] for i in chunk])
        except EmptyHypothesis as exc:
            out = exc.translations
        for i, text in zip(chunk, out):
            results[i] = text
            if not text.strip():
                empty.append(i)
            elif cache is not None:
                cache_put(cache, keys[i], text)
    if empty:
        # indices refer to ``requests``; the other items are usable
        raise EmptyHypothesis(empty, [t or "" for t in results])
    return results  # type: ignore[return-value]


def complete_cached(backend: Backend, prompt: str, cache: DiskCache | None) -> str:
    key = CacheKey.for_payload(
        Operation.COMPLETE, {"prompt": prompt, "params": dict(backend.config.decode_params)}, backend.backend_id
    )
    hit = cache_get(cache, key)
    if isinstance(hit, str) and hit:
        return hit
    out = backend.complete_prompt(prompt)
    if out:
        cache_put(cache, key, out)
    return out
