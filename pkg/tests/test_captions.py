import json
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given

from compforge.captions import (HTTPGenClient, MockGenClient, build_prompt, caption_subgraph, describe,
                                filter_generated, generate_many, load_few_shot_bank, template_caption)
from compforge.errors import ConfigError, EmptyGraph
from compforge.model import SceneGraph, atom_count, canonically_equal
from compforge.pipeline import bundled

from .conftest import graph, scene_graphs


@pytest.fixture(scope="module")
def bank():
    return load_few_shot_bank(bundled("fixture", "few_shot.jsonl"))


class TestTemplate:
    def test_attributes_and_relationship(self):
        g = graph([(1, "boy", ["tall", "blue"]), (2, "grass", ["green"])], [(1, "on", 2)])
        assert template_caption(g) == "tall and blue boy on green grass"

    def test_single_object(self):
        assert template_caption(graph([(1, "dog", [])])) == "dog"

    def test_disconnected_object(self):
        assert template_caption(graph([(1, "dog", ["black"]), (2, "cat", [])])) == "black dog and a cat"

    def test_chain_and_new_clause(self):
        g = graph([(1, "dog", []), (2, "bed", []), (3, "lamp", []), (4, "cat", [])],
                  [(1, "on", 2), (2, "near", 3), (4, "under", 2)])
        assert template_caption(g) == "dog on bed near lamp and a cat under the bed"

    def test_ordinal_mention(self):
        g = graph([(1, "window", []), (2, "window", []), (3, "wall", [])], [(1, "next to", 2), (1, "on", 3)])
        assert template_caption(g) == "window next to window and the first window on wall"

    def test_empty(self):
        with pytest.raises(EmptyGraph):
            template_caption(SceneGraph())

    @given(scene_graphs())
    def test_filter_accepts_own_template(self, g):
        assert filter_generated(template_caption(g), g, strict=True)


class TestPrompt:
    def test_window_suffixes(self, bank):
        g = graph([(1, "window", ["open"]), (2, "window", []), (3, "wall", [])], [(1, "next to", 2), (2, "on", 3)])
        objects, relations = describe(g)
        assert objects == "open window1; window2; wall"
        assert relations == "window1 next to window2; window2 on wall"

    def test_relations_line_format(self):
        g = graph([(1, "bush", []), (2, "flower", []), (3, "bench", []), (4, "woman", [])],
                  [(1, "behind", 3), (3, "behind", 4)])
        assert describe(g) == ("bush; flower; bench; woman", "bush behind bench; bench behind woman")

    def test_single_object_has_empty_relations(self):
        g = graph([(1, "dog", ["black"])])
        prompt = build_prompt(g, {2: [(graph([(1, "cat", ["white"])]), "A white cat.")] * 5})
        assert prompt.relations_line == ""
        assert len(prompt.few_shot) == 5
        assert prompt.render().endswith("OBJECTS: black dog\nRELATIONS: \nCAPTION:")

    def test_missing_bank(self):
        with pytest.raises(ConfigError):
            build_prompt(graph([(1, "dog", ["black"])]), {})

    def test_distinct_graphs_distinct_prompts(self, bank):
        a = graph([(1, "dog", ["black"]), (2, "cat", [])], [(1, "on", 2)])
        b = graph([(1, "dog", []), (2, "cat", ["black"])], [(1, "on", 2)])
        assert build_prompt(a, bank).render() != build_prompt(b, bank).render()


class TestFilter:
    def test_missing_object(self):
        g = graph([(1, "bench", []), (2, "woman", [])], [(2, "near", 1)])
        assert not filter_generated("A woman standing in a park.", g)
        assert filter_generated("Two women near a bench.", g)

    def test_synonym_rejected(self):
        g = graph([(1, "couch", ["red"])])
        assert not filter_generated("A red sofa.", g)

    def test_strict_needs_attributes(self):
        g = graph([(1, "couch", ["red"])])
        assert filter_generated("A couch.", g)
        assert not filter_generated("A couch.", g, strict=True)


class TestEngines:
    def test_mock_client_round_trips(self, bank, lexicon):
        g = graph([(1, "dog", ["black"]), (2, "bed", ["white"]), (3, "lamp", [])], [(1, "on", 2), (3, "near", 2)])
        client = MockGenClient(lexicon)
        assert canonically_equal(client.decode(build_prompt(g, bank).render()), g)
        assert client.generate(build_prompt(g, bank).render()) == "Black dog on white bed and a lamp near the bed."

    def test_cutover(self, bank, lexicon):
        small = graph([(1, "dog", ["black"]), (2, "cat", [])])
        big = graph([(1, "dog", ["black"]), (2, "bed", ["white"])], [(1, "on", 2)])
        client = MockGenClient(lexicon)
        assert caption_subgraph(small, client, bank, cutover=5).engine == "template"
        out = caption_subgraph(big, client, bank, cutover=5)
        assert atom_count(big) == 5 and out.engine == "mock-template"
        assert out.text == "Black dog on white bed."
        assert caption_subgraph(big, None, bank).engine == "template"

    def test_fallback_when_object_dropped(self, bank):
        class Forgetful:
            name = "forgetful"

            def generate(self, prompt):
                return "A bed."

        big = graph([(1, "dog", ["black"]), (2, "bed", ["white"])], [(1, "on", 2)])
        out = caption_subgraph(big, Forgetful(), bank)
        assert out.engine == "template-fallback"
        assert out.text == "black dog on white bed"

    def test_generate_many_keeps_order(self):
        class Slow:
            name = "slow"

            def generate(self, prompt):
                time.sleep(0.01 * (5 - int(prompt)))
                return f"out{prompt}"

        assert generate_many(Slow(), [str(i) for i in range(5)], max_in_flight=3) == [f"out{i}" for i in range(5)]


class _Handler(BaseHTTPRequestHandler):
    seen = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        _Handler.seen.append((body, self.headers.get("Authorization")))
        payload = json.dumps({"text": f"  echo {body['prompt']} \n"}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture()
def server():
    httpd = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_port}/generate"
    httpd.shutdown()


def test_http_client(server, monkeypatch):
    monkeypatch.setenv("FORGE_GEN_ENDPOINT", server)
    monkeypatch.setenv("FORGE_GEN_API_KEY", "k")
    client = HTTPGenClient(max_tokens=12)
    assert client.generate("hi") == "echo hi"
    assert _Handler.seen[-1] == ({"prompt": "hi", "max_tokens": 12}, "Bearer k")
    assert "nondeterministic" in client.name


def test_http_client_needs_endpoint(monkeypatch):
    monkeypatch.delenv("FORGE_GEN_ENDPOINT", raising=False)
    with pytest.raises(ConfigError):
        HTTPGenClient()
