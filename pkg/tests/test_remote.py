import json
import math
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from icsel.remote import AlignmentError, RemoteScorer, RemoteScoringError


class FakeCompletions(BaseHTTPRequestHandler):
    """Completions-style endpoint echoing prompt logprobs, scriptable per test."""

    script = None  # list of ("fail", status) | ("ok", builder)
    requests_seen = []

    def log_message(self, *args):
        pass

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        FakeCompletions.requests_seen.append(body)
        action = (FakeCompletions.script.pop(0)
                  if FakeCompletions.script else ("ok", default_response))
        if action[0] == "fail":
            self.send_response(action[1])
            self.end_headers()
            self.wfile.write(b"boom")
            return
        payload = action[1](body["prompt"])
        blob = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(blob)))
        self.end_headers()
        self.wfile.write(blob)


def make_response(tokens, logprobs, offsets):
    return {
        "choices": [{
            "logprobs": {
                "tokens": tokens,
                "token_logprobs": logprobs,
                "text_offset": offsets,
            }
        }]
    }


def default_response(prompt):
    # one token per character, logprob -0.1 each
    tokens = list(prompt)
    return make_response(
        tokens, [-0.1] * len(tokens), list(range(len(prompt)))
    )


@pytest.fixture
def server():
    httpd = HTTPServer(("127.0.0.1", 0), FakeCompletions)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    FakeCompletions.script = []
    FakeCompletions.requests_seen = []
    yield f"http://127.0.0.1:{httpd.server_port}/v1/completions"
    httpd.shutdown()


@pytest.fixture
def scorer(server):
    return RemoteScorer(server, model="test-model", backoff=0.01)


def test_exponentiates_logprobs(server, scorer):
    def resp(prompt):
        # prompt "Q\n" + target "ab": tokens tile the target exactly
        return make_response(["Q\n", "a", "b"], [None, -0.105, -0.693], [0, 2, 3])

    FakeCompletions.script = [("ok", resp)]
    v = scorer.score("Q\n", "ab")
    np.testing.assert_allclose(
        v.probs, [math.exp(-0.105), math.exp(-0.693)], rtol=1e-12
    )


def test_request_body_contract(server, scorer):
    scorer.score("Q\n", "ab")
    body = FakeCompletions.requests_seen[-1]
    assert body["prompt"] == "Q\nab"
    assert body["max_new_tokens"] == 0
    assert body["echo"] is True
    assert body["logprobs"] is True
    assert body["model"] == "test-model"


def test_alignment_error_when_tokens_do_not_tile(server, scorer):
    def resp(prompt):
        # token straddles the prompt/target boundary
        return make_response(["Q\na", "b"], [-0.1, -0.2], [0, 3])

    FakeCompletions.script = [("ok", resp)]
    with pytest.raises(AlignmentError):
        scorer.score("Q\n", "ab")


def test_alignment_error_when_target_not_covered(server, scorer):
    def resp(prompt):
        return make_response(["Q\n", "a"], [None, -0.1], [0, 2])

    FakeCompletions.script = [("ok", resp)]
    with pytest.raises(AlignmentError):
        scorer.score("Q\n", "ab")


def test_transient_503_then_success(server, scorer):
    FakeCompletions.script = [("fail", 503)]
    v = scorer.score("Q\n", "ab")
    assert v.token_count == 2
    assert len(FakeCompletions.requests_seen) == 2


def test_gives_up_after_retries(server):
    sc = RemoteScorer(server, model="m", max_retries=2, backoff=0.01)
    FakeCompletions.script = [("fail", 503)] * 3
    with pytest.raises(RemoteScoringError, match="after 3 attempts"):
        sc.score("Q\n", "ab")


def test_client_error_fails_immediately(server, scorer):
    FakeCompletions.script = [("fail", 400)]
    with pytest.raises(RemoteScoringError, match="400"):
        scorer.score("Q\n", "ab")
    assert len(FakeCompletions.requests_seen) == 1


def test_missing_logprob_for_target_token(server, scorer):
    def resp(prompt):
        return make_response(["Q\n", "ab"], [None, None], [0, 2])

    FakeCompletions.script = [("ok", resp)]
    with pytest.raises(RemoteScoringError, match="missing logprob"):
        scorer.score("Q\n", "ab")


def test_auth_header_sent_when_token_set(server):
    import requests

    seen = {}

    class Capture(requests.Session):
        def post(self, *a, **kw):
            seen.update(kw["headers"])
            return super().post(*a, **kw)

    sc = RemoteScorer(server, model="m", auth_token="sekrit", backoff=0.01,
                      session=Capture())
    sc.score("Q\n", "ab")
    assert seen["Authorization"] == "Bearer sekrit"


def test_descriptor_identifies_endpoint_and_model(server):
    a = RemoteScorer(server, model="m1").descriptor
    b = RemoteScorer(server, model="m2").descriptor
    assert a.hash() != b.hash()
