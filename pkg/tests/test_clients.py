import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from urbancast.exceptions import (
    DimensionError,
    EmptyResponseError,
    EndpointStatusError,
    InputError,
    TransportError,
)
from urbancast.retrieval import (
    PROMPT_TEMPLATE,
    CachedLanguageModelClient,
    ChatCompletionsClient,
    EndpointEmbedder,
    HashingTextEmbedder,
    MockLanguageModelClient,
    PrototypeSource,
    TaskSpec,
    build_prompt,
    clients_from_env,
    cosine_similarity,
    embed_text,
    infer_prototype,
)
from urbancast.retrieval.clients import tokenize

EXPECTED = ("To predict ride-share demand for a given target region described as follows: "
            "dense residential blocks.\n\nList the relevant urban features, buildings, land use "
            "or functions nearby the target region that may provide useful contextual "
            "information.")


def test_prompt_exact_text():
    task = TaskSpec("ride", "ride-share demand")
    assert build_prompt(task, "dense residential blocks") == EXPECTED
    assert build_prompt(task, "dense residential blocks") == EXPECTED
    assert PROMPT_TEMPLATE.format(task="ride-share demand",
                                  description="dense residential blocks") == EXPECTED


def test_prompt_rejects_empty_inputs():
    with pytest.raises(InputError):
        TaskSpec("ride", "")
    with pytest.raises(InputError):
        build_prompt(TaskSpec("ride", "x"), "")


# -- language models -------------------------------------------------------------

def test_mock_client_lookup_and_stripping():
    client = MockLanguageModelClient(
        {"ride-share demand": "  transit stops, dense housing, commercial corridors\n"})
    q = infer_prototype(client, build_prompt(TaskSpec("r", "ride-share demand"), "x"))
    assert q.text == "transit stops, dense housing, commercial corridors"
    assert q.source is PrototypeSource.CANNED_MOCK


def test_mock_client_uses_task_slot_not_description():
    client = MockLanguageModelClient({"crime": "A", "ride-share demand": "B"})
    prompt = build_prompt(TaskSpec("r", "ride-share demand"), "area with crime hotspots")
    assert client.complete(prompt) == "B"


def test_empty_response_is_distinct_and_retryable():
    client = MockLanguageModelClient({"t": "   "})
    with pytest.raises(EmptyResponseError) as info:
        infer_prototype(client, build_prompt(TaskSpec("t", "t"), "d"))
    assert info.value.retryable


class _Handler(BaseHTTPRequestHandler):
    calls = []

    def do_POST(self):  # noqa: N802
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        self.calls.append((self.path, body, self.headers.get("Authorization")))
        if self.server.status != 200:
            self.send_response(self.server.status)
            self.end_headers()
            self.wfile.write(b"nope")
            return
        if self.path == "/v1/chat/completions":
            reply = {"choices": [{"message": {"content": self.server.reply}}]}
        else:
            reply = {"data": [{"index": i, "embedding": [3.0, 4.0] if i == 0 else [0.0, 2.0]}
                              for i, _ in enumerate(body["input"])]}
        data = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    srv.status, srv.reply = 200, " parks and schools "
    _Handler.calls = []
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield srv
    srv.shutdown()
    srv.server_close()


def _url(srv):
    return f"http://127.0.0.1:{srv.server_address[1]}"


def test_chat_client_request_shape(server, monkeypatch):
    monkeypatch.setenv("URBANCAST_API_KEY", "sekret")
    client = ChatCompletionsClient(_url(server) + "/", model="m1")
    q = infer_prototype(client, "hello")
    assert q.text == "parks and schools"
    assert q.source is PrototypeSource.LANGUAGE_MODEL
    path, body, auth = _Handler.calls[0]
    assert path == "/v1/chat/completions"
    assert body == {"model": "m1", "messages": [{"role": "user", "content": "hello"}],
                    "temperature": 0}
    assert auth == "Bearer sekret"


@pytest.mark.parametrize("status,retryable", [(500, True), (429, True), (400, False)])
def test_chat_client_status_errors(server, status, retryable):
    server.status = status
    with pytest.raises(EndpointStatusError) as info:
        ChatCompletionsClient(_url(server), api_key="").complete("x")
    assert info.value.status == status and info.value.retryable is retryable


def test_chat_client_empty_content(server):
    server.reply = ""
    with pytest.raises(EmptyResponseError):
        ChatCompletionsClient(_url(server), api_key="").complete("x")


def test_unreachable_endpoint_is_transport_error():
    with pytest.raises(TransportError) as info:
        ChatCompletionsClient("http://127.0.0.1:9", api_key="", timeout=2).complete("x")
    assert info.value.retryable


def test_endpoint_embedder_normalizes(server):
    emb = EndpointEmbedder(_url(server), api_key="")
    out = emb.embed(["a", "b"])
    assert np.allclose(out, [[0.6, 0.8], [0.0, 1.0]], atol=1e-15)
    assert _Handler.calls[0][0] == "/v1/embeddings"
    assert _Handler.calls[0][1] == {"model": "default", "input": ["a", "b"]}
    with pytest.raises(DimensionError):
        EndpointEmbedder(_url(server), dim=3, api_key="").embed(["a"])


def test_cached_client_writes_jsonl_and_reuses(tmp_path):
    class Counting:
        n = 0

        def complete(self, prompt):
            self.n += 1
            return f"answer {len(prompt)}"

    inner = Counting()
    path = tmp_path / "cache.jsonl"
    cached = CachedLanguageModelClient(inner, path)
    assert cached.complete("abc") == cached.complete("abc") == "answer 3"
    assert inner.n == 1
    rows = [json.loads(x) for x in path.read_text().splitlines()]
    assert rows == [{"prompt_sha256": CachedLanguageModelClient.key("abc"),
                     "response_text": "answer 3"}]
    again = CachedLanguageModelClient(inner, path)
    assert again.complete("abc") == "answer 3" and inner.n == 1


def test_clients_from_env(monkeypatch):
    monkeypatch.delenv("URBANCAST_LLM_URL", raising=False)
    client, emb = clients_from_env({"a": "b"})
    assert isinstance(client, MockLanguageModelClient) and isinstance(emb, HashingTextEmbedder)
    monkeypatch.setenv("URBANCAST_LLM_URL", "http://example.invalid")
    client, _ = clients_from_env()
    assert isinstance(client, ChatCompletionsClient)


# -- embedders and cosine ----------------------------------------------------------

def test_tokenize():
    assert tokenize("Rail-Yard, 2 depots!") == ["rail", "yard", "2", "depots"]


def test_hashing_embedder_contract():
    emb = HashingTextEmbedder()
    a = embed_text(emb, "park")
    assert np.array_equal(a, embed_text(emb, "park"))
    assert abs(np.linalg.norm(a) - 1.0) <= 1e-9
    b = embed_text(emb, "industrial rail yard")
    assert abs(np.linalg.norm(b) - 1.0) <= 1e-9
    assert cosine_similarity(a, b) < 1.0
    # brute-force the hashing rule
    expect = np.zeros(256)
    for tok in ["industrial", "rail", "yard"]:
        expect[emb.bucket(tok)] += 1
    assert np.allclose(b, expect / np.linalg.norm(expect), atol=1e-15)


def test_embed_text_rejects_empty():
    with pytest.raises(InputError):
        embed_text(HashingTextEmbedder(), "")
    with pytest.raises(InputError):
        embed_text(HashingTextEmbedder(), "!!!")


@pytest.mark.parametrize("a,b,c", [((1, 0), (1, 0), 1.0), ((1, 0), (0, 1), 0.0),
                                   ((1, 1), (1, 0), np.sqrt(2) / 2)])
def test_cosine_examples(a, b, c):
    assert cosine_similarity(a, b) == pytest.approx(c, abs=1e-15)


def test_cosine_clamps_and_errors():
    v = np.array([0.1, 0.2, 0.7]) * 1e150
    assert cosine_similarity(v, v) <= 1.0
    with pytest.raises(InputError):
        cosine_similarity([0, 0], [1, 0])
    with pytest.raises(DimensionError):
        cosine_similarity([1, 0], [1, 0, 0])
