import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from namebias.gazetteer import default_gazetteer


@pytest.fixture(scope="session")
def gaz():
    return default_gazetteer()


def stub_vector(text, dim=4):
    """Fixed vector the stub server returns for ``text``."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return [digest[i] / 255.0 + 0.25 for i in range(dim)]


class _EmbeddingHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def do_POST(self):
        state = self.server.state
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        with state["lock"]:
            state["calls"] += 1
            state["requests"].append({"body": body, "auth": self.headers.get("Authorization")})
            fail = state["fail_next"] > 0
            if fail:
                state["fail_next"] -= 1
        if fail:
            self._send(503, {"error": "injected"})
        elif "prompt" in body:
            # text-generation stub: echo whatever follows the prompt template
            self._send(200, {"text": body["prompt"].split("::::\n", 1)[-1]})
        else:
            self._send(200, {"embeddings": [stub_vector(t, state["dim"]) for t in body["input"]]})

    def _send(self, code, payload):
        data = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


@pytest.fixture
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _EmbeddingHandler)
    server.state = {"calls": 0, "fail_next": 0, "requests": [], "dim": 4, "lock": threading.Lock()}
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    server.url = f"http://127.0.0.1:{server.server_address[1]}/embed"
    yield server
    server.shutdown()
    server.server_close()


_acceptance_results = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        if report.when == "setup" and report.outcome == "passed":
            return
        _acceptance_results.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance_results:
        terminalreporter.write_line(f"{outcome.upper():8s} {name}")
