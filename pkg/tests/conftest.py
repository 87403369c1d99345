import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path

import pytest

from ehrstruct.terminology import AbbreviationTable, build_index, load_lexicon

DATA = resources.files("ehrstruct.data")
FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def lexicon_path():
    return str(DATA / "sample_lexicon.tsv")


@pytest.fixture(scope="session")
def abbrev_path():
    return str(DATA / "sample_abbreviations.tsv")


@pytest.fixture(scope="session")
def sample_entries(lexicon_path):
    entries, _ = load_lexicon(lexicon_path)
    return entries


@pytest.fixture(scope="session")
def sample_index(sample_entries):
    return build_index(sample_entries)


@pytest.fixture(scope="session")
def abbrev_table(abbrev_path):
    return AbbreviationTable.load(abbrev_path)


class _StubHandler(BaseHTTPRequestHandler):
    """Scriptable chat-completions endpoint for client tests.

    The server object carries `script` (a list of status codes; the last one
    repeats) and `reply` (a callable from prompt text to response text).
    """

    def do_POST(self):
        server = self.server
        with server.lock:
            server.request_count += 1
            server.in_flight += 1
            server.max_observed_in_flight = max(server.max_observed_in_flight, server.in_flight)
            idx = min(server.request_count - 1, len(server.script) - 1)
            status = server.script[idx]
        try:
            if server.delay:
                import time

                time.sleep(server.delay)
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length)) if length else {}
            prompt = body.get("messages", [{}])[0].get("content", "")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            if status == 200:
                payload = {"choices": [{"message": {"content": server.reply(prompt)}}]}
                self.wfile.write(json.dumps(payload).encode())
            else:
                self.wfile.write(b"{}")
        finally:
            with server.lock:
                server.in_flight -= 1

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    server.script = [200]
    server.reply = lambda prompt: "ok"
    server.delay = 0.0
    server.request_count = 0
    server.in_flight = 0
    server.max_observed_in_flight = 0
    server.lock = threading.Lock()
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    server.base_url = f"http://127.0.0.1:{server.server_address[1]}/v1"
    yield server
    server.shutdown()
    thread.join(timeout=5)
