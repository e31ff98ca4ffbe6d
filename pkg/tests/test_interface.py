import json
import socket
import urllib.error
import urllib.request
from pathlib import Path

import numpy as np
import pytest

from lakeorg.cli import main
from lakeorg.lake import load_lake
from lakeorg.organization import load_org
from lakeorg.server import serve, serve_forever

from conftest import make_cloud_store


@pytest.fixture(scope="module")
def bench_env(tmp_path_factory):
    """Small end-to-end environment: embeddings file, generated bench, lake."""
    root = tmp_path_factory.mktemp("env")
    store, _ = make_cloud_store(n_tags=8, cloud=40, dim=12, seed=6)
    emb = root / "emb.txt"
    with emb.open("w") as fh:
        fh.write(f"{store.count} {store.dim}\n")
        for tok in store.tokens:
            vec = " ".join(repr(float(x)) for x in store.vector(tok))
            fh.write(f"{tok} {vec}\n")
    bench = root / "bench"
    rc = main(["gen-bench", "--embeddings", str(emb), "--out", str(bench),
               "--seed", "7", "--tags", "6", "--tables", "8",
               "--min-values", "5", "--max-values", "25", "--max-attrs", "4"])
    assert rc == 0
    lake_file = root / "lake.json"
    rc = main(["ingest", "--tables", str(bench), "--metadata",
               str(bench / "metadata.jsonl"), "--embeddings", str(emb),
               "--out", str(lake_file)])
    assert rc == 0
    return {"root": root, "emb": emb, "bench": bench, "lake": lake_file}


def test_pipeline_build_eval(bench_env):
    root = bench_env["root"]
    org_file = root / "org.json"
    rc = main(["build", "--lake", str(bench_env["lake"]), "--out", str(org_file),
               "--dimensions", "2", "--seed", "3", "--max-iters", "40",
               "--reps-fraction", "0.5"])
    assert rc == 0
    dim0 = org_file.with_suffix(".dim0.json")
    dim1 = org_file.with_suffix(".dim1.json")
    assert dim0.exists() and dim1.exists()
    rc = main(["eval", "--lake", str(bench_env["lake"]),
               "--org", str(dim0), "--org", str(dim1),
               "--out-prefix", str(root / "eval")])
    assert rc == 0
    summary = json.loads((root / "eval.summary.json").read_text())
    assert 0.0 <= summary["effectiveness"] <= 1.0
    assert summary["n_tables"] >= 1
    lines = (root / "eval.csv").read_text().strip().splitlines()
    assert lines[0] == "table_id,discovery_prob,success_prob"
    assert len(lines) == 1 + summary["n_tables"]


def test_build_exact_equals_fraction_one(bench_env, tmp_path):
    a = tmp_path / "exact.json"
    b = tmp_path / "frac1.json"
    base = ["--lake", str(bench_env["lake"]), "--seed", "5", "--max-iters", "25"]
    assert main(["build", *base, "--out", str(a), "--exact"]) == 0
    assert main(["build", *base, "--out", str(b), "--reps-fraction", "1.0"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_eval_theta_above_one_degenerates(bench_env, tmp_path):
    org_file = tmp_path / "o.json"
    assert main(["build", "--lake", str(bench_env["lake"]), "--out",
                 str(org_file), "--seed", "2", "--max-iters", "15",
                 "--exact"]) == 0
    assert main(["eval", "--lake", str(bench_env["lake"]), "--org", str(org_file),
                 "--theta", "1.01", "--out-prefix", str(tmp_path / "e")]) == 0
    rows = (tmp_path / "e.csv").read_text().strip().splitlines()[1:]
    for row in rows:
        _, disc, succ = row.split(",")
        assert abs(float(disc) - float(succ)) <= 1e-12


def test_cli_errors_exit_nonzero(tmp_path):
    assert main(["eval", "--lake", str(tmp_path / "none.json"),
                 "--org", str(tmp_path / "none2.json"),
                 "--out-prefix", str(tmp_path / "x")]) == 1
    assert main(["ingest", "--tables", str(tmp_path), "--metadata",
                 str(tmp_path / "missing.jsonl"), "--embeddings",
                 str(tmp_path / "missing.txt"), "--out",
                 str(tmp_path / "o.json")]) == 1


# ---------------------------------------------------------------- HTTP service

def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def get_json(port: int, path: str):
    try:
        with urllib.request.urlopen(f"http://127.0.0.1:{port}{path}") as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


@pytest.fixture(scope="module")
def service(bench_env, tmp_path_factory):
    root = bench_env["root"]
    org_file = root / "serve_org.json"
    assert main(["build", "--lake", str(bench_env["lake"]), "--out",
                 str(org_file), "--seed", "1", "--max-iters", "20",
                 "--exact"]) == 0
    lake = load_lake(bench_env["lake"])
    org = load_org(org_file, lake)
    static = tmp_path_factory.mktemp("static")
    (static / "index.html").write_text("<html><body>nav</body></html>")
    port = free_port()
    httpd = serve(org, lake, port, static_dir=static)
    serve_forever(httpd)
    yield {"port": port, "org": org, "lake": lake}
    httpd.shutdown()
    httpd.server_close()


def test_summary_endpoint(service):
    status, doc = get_json(service["port"], "/api/org/summary")
    assert status == 200
    assert doc["root"] == service["org"].root
    assert doc["n_states"] == len(service["org"].states)


def test_root_node_lists_children(service):
    org = service["org"]
    status, doc = get_json(service["port"], f"/api/node/{org.root}")
    assert status == 200
    assert [c["id"] for c in doc["children"]] == list(org.states[org.root].children)
    assert doc["level"] == 0


def test_leaf_node_links_table(service):
    org = service["org"]
    leaf = sorted(sid for sid, s in org.states.items() if s.is_leaf)[0]
    status, doc = get_json(service["port"], f"/api/node/{leaf}")
    assert status == 200
    assert doc["children"] == []
    assert doc["table_id"] in service["lake"].tables
    status, tdoc = get_json(service["port"], f"/api/table/{doc['table_id']}")
    assert status == 200
    assert any(a["id"] == doc["attribute_id"] for a in tdoc["attributes"])


def test_attribute_endpoint_sample_cap(service):
    lake = service["lake"]
    aid = lake.attr_order[0]
    status, doc = get_json(service["port"], f"/api/attribute/{aid}")
    assert status == 200
    assert len(doc["sample_values"]) <= 20
    assert doc["leaf_id"] in service["org"].states


def test_unknown_ids_404(service):
    for path in ("/api/node/ghost", "/api/table/ghost", "/api/attribute/ghost",
                 "/api/nonsense"):
        status, doc = get_json(service["port"], path)
        assert status == 404
        assert "error" in doc


def test_no_dangling_child_links(service):
    """Every id in any child summary is itself fetchable."""
    port = service["port"]
    org = service["org"]
    seen = set()
    stack = [org.root]
    while stack:
        sid = stack.pop()
        if sid in seen:
            continue
        seen.add(sid)
        status, doc = get_json(port, f"/api/node/{sid}")
        assert status == 200
        for child in doc["children"]:
            stack.append(child["id"])
    assert seen == set(org.states)


def test_static_index_served(service):
    with urllib.request.urlopen(
            f"http://127.0.0.1:{service['port']}/") as resp:
        assert resp.status == 200
        assert b"nav" in resp.read()


def test_lakeorg_port_env_override(monkeypatch):
    from lakeorg.cli import resolve_port
    monkeypatch.delenv("LAKEORG_PORT", raising=False)
    assert resolve_port(8765) == 8765
    monkeypatch.setenv("LAKEORG_PORT", "4321")
    assert resolve_port(8765) == 4321
