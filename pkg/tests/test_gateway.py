import base64
import io
import json

import httpx
import pytest
from PIL import Image

from reportkv.errors import CassetteMiss, EmptyResponseError, GatewayError, ProviderConfigError, TransportError
from reportkv.gateway import (Cassette, Gateway, GeminiCompatible, ModalityConfig, OpenAICompatible, ProviderConfig,
                              Request, ScriptedMock, TokenBucket, bound_image, echo_mock, fingerprint)
from reportkv.prompts import RenderedPrompt, build_precorrection_prompt

TEXT, IMAGE, BOTH = ModalityConfig.parse("text"), ModalityConfig.parse("image"), ModalityConfig.parse("both")
SECRET = "sk-test-0123456789abcdef"


def png(w=40, h=30):
    buf = io.BytesIO()
    Image.new("L", (w, h), 200).save(buf, format="PNG")
    return buf.getvalue()


def prompt(data="WBC 6.2"):
    return build_precorrection_prompt(data)


def test_modality_invariant():
    with pytest.raises(ValueError):
        ModalityConfig(False, False)
    assert [ModalityConfig.parse(n).name for n in ("image", "text", "both")] == ["image", "text", "both"]


def test_fingerprint_depends_on_modality_and_image():
    p = prompt().text
    assert fingerprint("mock:x", p, None, TEXT) != fingerprint("mock:x", p, png(), BOTH)
    assert fingerprint("mock:x", p, png(), TEXT) == fingerprint("mock:x", p, None, TEXT)
    assert fingerprint("mock:x", p, png(10, 10), IMAGE) != fingerprint("mock:x", p, png(), IMAGE)
    assert fingerprint("mock:x", p, None, TEXT) != fingerprint("mock:y", p, None, TEXT)


def test_record_then_replay(tmp_path):
    cassette = Cassette()
    live = Gateway("mock:echo", echo_mock(), cassette, "record")
    answer = live.complete(prompt(), None, TEXT)
    assert answer == "```text\nWBC 6.2\n```"
    path = cassette.save(tmp_path / "c.jsonl")
    replay = Gateway("mock:echo", None, Cassette.load(path), "replay")
    assert replay.complete(prompt(), None, TEXT) == answer
    with pytest.raises(CassetteMiss) as exc:
        replay.complete(prompt("other"), None, TEXT)
    assert exc.value.fingerprint in str(exc.value)


def test_cassette_file_sorted_and_conflicts(tmp_path):
    c = Cassette({"b": "2", "a": "1"})
    assert [json.loads(l)["fingerprint"] for l in c.dumps().splitlines()] == ["a", "b"]
    c.save(tmp_path / "one.jsonl")
    Cassette({"a": "other"}).save(tmp_path / "two.jsonl")
    with pytest.raises(GatewayError):
        Cassette.load(tmp_path)


def test_preconditions():
    gw = Gateway("mock:echo", echo_mock(), Cassette(), "record")
    with pytest.raises(ValueError):
        gw.complete(prompt(), None, IMAGE)
    empty = RenderedPrompt("classification", "sys", "user", "")
    with pytest.raises(ValueError):
        gw.complete(empty, None, TEXT)
    assert gw.complete(empty, png(), IMAGE) == "```text\n\n```"


def test_empty_response():
    gw = Gateway("mock:silent", ScriptedMock([{"action": "fixed", "response": "  "}]), mode="live")
    with pytest.raises(EmptyResponseError):
        gw.complete(prompt(), None, TEXT)


def test_mode_requirements():
    with pytest.raises(ProviderConfigError):
        Gateway("mock:x", None, None, "replay")
    with pytest.raises(ProviderConfigError):
        Gateway("mock:x", None, Cassette(), "record")


class Flaky:
    provider_id = "mock:flaky"

    def __init__(self, failures):
        self.failures, self.calls = failures, 0

    def send(self, request):
        from reportkv.gateway import RetryableError
        self.calls += 1
        if self.calls <= self.failures:
            raise RetryableError("HTTP 503")
        return "ok"


def test_retries_with_exponential_backoff():
    delays = []
    provider = Flaky(2)
    gw = Gateway("mock:flaky", provider, mode="live", sleep=delays.append)
    assert gw.complete(prompt(), None, TEXT) == "ok"
    assert delays == [1.0, 2.0]


def test_gives_up_after_bounded_retries():
    delays = []
    gw = Gateway("mock:flaky", Flaky(10), mode="live", sleep=delays.append)
    with pytest.raises(TransportError):
        gw.complete(prompt(), None, TEXT)
    assert delays == [1.0, 2.0, 4.0]


def test_token_bucket_blocks_when_empty():
    now = [0.0]
    waits = []

    def sleep(s):
        waits.append(s)
        now[0] += s

    bucket = TokenBucket(60, capacity=1, clock=lambda: now[0], sleep=sleep)
    bucket.acquire()
    bucket.acquire()
    assert waits and waits[0] == pytest.approx(1.0)


def test_missing_credential_fails_at_construction(monkeypatch):
    monkeypatch.delenv("RKV_TEST_KEY", raising=False)
    with pytest.raises(ProviderConfigError) as exc:
        Gateway.from_config(ProviderConfig(kind="openai", model="m", api_key_env="RKV_TEST_KEY"), mode="live")
    assert "RKV_TEST_KEY" in str(exc.value)


def capture_client(reply, status=200):
    seen = []

    def handler(request: httpx.Request):
        seen.append(request)
        return httpx.Response(status, json=reply)

    return httpx.Client(transport=httpx.MockTransport(handler)), seen


def test_openai_wire_shape(monkeypatch):
    monkeypatch.setenv("RKV_TEST_KEY", SECRET)
    client, seen = capture_client({"choices": [{"message": {"content": "```text\nhi\n```"}}]})
    cfg = ProviderConfig(kind="openai", model="gpt-x", base_url="https://llm.invalid/v1", api_key_env="RKV_TEST_KEY")
    gw = Gateway.from_config(cfg, "live", client=client)
    gw.limiter = None
    assert gw.complete(prompt(), png(), BOTH) == "```text\nhi\n```"
    req = seen[0]
    assert str(req.url) == "https://llm.invalid/v1/chat/completions"
    assert req.headers["authorization"] == f"Bearer {SECRET}"
    body = json.loads(req.content)
    user = body["messages"][1]["content"]
    assert [p["type"] for p in user] == ["text", "image_url"]
    assert user[1]["image_url"]["url"].startswith("data:image/png;base64,")
    assert body["temperature"] == 0 and body["seed"] == 0 and body["messages"][0]["role"] == "system"


def test_gemini_text_only_has_no_image_part(monkeypatch):
    monkeypatch.setenv("RKV_TEST_KEY", SECRET)
    client, seen = capture_client({"candidates": [{"content": {"parts": [{"text": "a"}, {"text": "b"}]}}]})
    provider = GeminiCompatible(ProviderConfig(kind="gemini", model="gem", api_key_env="RKV_TEST_KEY"), client)
    assert provider.send(Request(prompt(), png(), TEXT)) == "ab"
    body = json.loads(seen[0].content)
    assert body["contents"][0]["parts"] == [{"text": prompt().user}]
    assert seen[0].url.path.endswith("/models/gem:generateContent")
    assert seen[0].headers["x-goog-api-key"] == SECRET


def test_http_errors_never_leak_the_key(monkeypatch):
    monkeypatch.setenv("RKV_TEST_KEY", SECRET)
    client, _ = capture_client({"error": SECRET}, status=401)
    gw = Gateway.from_config(ProviderConfig(kind="openai", model="m", api_key_env="RKV_TEST_KEY"), "record",
                             Cassette(), client)
    with pytest.raises(TransportError) as exc:
        gw.complete(prompt(), None, TEXT)
    assert SECRET not in str(exc.value) and SECRET not in repr(exc.value.__cause__)
    assert SECRET not in gw.cassette.dumps()


def test_server_errors_are_retried(monkeypatch):
    monkeypatch.setenv("RKV_TEST_KEY", SECRET)
    client, seen = capture_client({}, status=503)
    gw = Gateway.from_config(ProviderConfig(kind="openai", model="m", api_key_env="RKV_TEST_KEY"), "live", client=client)
    gw.limiter, gw.sleep = None, lambda s: None
    with pytest.raises(TransportError):
        gw.complete(prompt(), None, TEXT)
    assert len(seen) == 4


def test_image_bounding():
    big = png(4000, 1000)
    data, mime = bound_image(big, 2048)
    with Image.open(io.BytesIO(data)) as im:
        assert im.size == (2048, 512)
    assert bound_image(png(), 2048) == (png(), "image/png")


def test_image_part_is_bounded(monkeypatch):
    monkeypatch.setenv("RKV_TEST_KEY", SECRET)
    p = OpenAICompatible(ProviderConfig(kind="openai", model="m", api_key_env="RKV_TEST_KEY", max_image_edge=100),
                         httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(500))))
    payload = p.build_payload(Request(prompt(), png(400, 200), IMAGE))
    b64 = payload["messages"][1]["content"][1]["image_url"]["url"].split(",", 1)[1]
    with Image.open(io.BytesIO(base64.b64decode(b64))) as im:
        assert max(im.size) == 100


def test_scripted_mock_rules():
    mock = ScriptedMock([
        {"kind": "classification", "action": "scenarios", "ids": ["cbc"]},
        {"kind": "extraction", "action": "records", "scenario_id": "cbc",
         "pattern": r"^(?P<key>[A-Za-z ]+?) (?P<value>[\d.]+) (?P<unit>\S+)$"},
    ])
    cls = RenderedPrompt("classification", "s", "u", "x")
    assert mock.send(Request(cls, None, TEXT)) == '```json\n{"scenario_ids": ["cbc"]}\n```'
    ext = RenderedPrompt("extraction", "s", "u", "WBC 6.2 10^9/L\nnoise\nHGB 135 g/L")
    out = mock.send(Request(ext, None, TEXT))
    assert '"WBC"' in out and '"HGB"' in out and "noise" not in out
