"""Read-only HTTP service for interactive navigation of a built organization."""

from __future__ import annotations

import json
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import unquote

from .lake import DataLake
from .navmodel import EvalReport
from .organization import Organization, labels


def node_view(org: Organization, lake: DataLake, sid: str,
              label_map: dict[str, str], level_map: dict[str, int]) -> dict:
    """NavNodeView payload: labels, ordered child summaries, parent links."""
    s = org.states[sid]
    view = {
        "id": s.id,
        "label": label_map[s.id],
        "kind": s.kind,
        "level": level_map[s.id],
        "n_attributes": len(s.attribute_ids),
        "parents": sorted(s.parents),
        "children": [
            {
                "id": c,
                "label": label_map[c],
                "kind": org.states[c].kind,
                "n_attributes": len(org.states[c].attribute_ids),
            }
            for c in s.children
        ],
    }
    if s.is_leaf:
        (aid,) = tuple(s.attribute_ids)
        view["attribute_id"] = aid
        view["table_id"] = lake.attributes[aid].table_id
    return view


class NavigationService:
    """Pure lookups over immutable artifacts; safe for concurrent readers."""

    SAMPLE_VALUES = 20

    def __init__(self, org: Organization, lake: DataLake,
                 report: EvalReport | None = None):
        self.org = org
        self.lake = lake
        self.report = report
        self.labels = labels(org, lake)
        self.levels = org.levels()

    def summary(self) -> dict:
        leaves = sum(1 for s in self.org.states.values() if s.is_leaf)
        doc = {
            "root": self.org.root,
            "gamma": self.org.gamma,
            "n_states": len(self.org.states),
            "n_leaves": leaves,
            "n_tables": len(self.lake.tables),
            "n_attributes": len(self.lake.attributes),
        }
        if self.report is not None:
            doc["effectiveness"] = self.report.effectiveness
            doc["mean_success"] = self.report.mean_success
        return doc

    def node(self, sid: str) -> dict | None:
        if sid not in self.org.states:
            return None
        return node_view(self.org, self.lake, sid, self.labels, self.levels)

    def table(self, tid: str) -> dict | None:
        t = self.lake.tables.get(tid)
        if t is None:
            return None
        return {
            "id": t.id,
            "name": t.name,
            "tags": sorted(t.tags),
            "attributes": [
                {"id": a, "name": self.lake.attributes[a].name}
                for a in t.attribute_ids
                if a in self.lake.attributes
            ],
        }

    def attribute(self, aid: str) -> dict | None:
        a = self.lake.attributes.get(aid)
        if a is None:
            return None
        leaf = self.org.attr_leaf().get(aid)
        return {
            "id": a.id,
            "name": a.name,
            "table_id": a.table_id,
            "table_name": self.lake.tables[a.table_id].name,
            "tags": sorted(a.tags),
            "leaf_id": leaf,
            "sample_values": sorted(a.values)[: self.SAMPLE_VALUES],
        }


def _make_handler(service: NavigationService, static_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send_json(self, doc: dict | None, status: int = 200) -> None:
            if doc is None:
                doc, status = {"error": "not found"}, 404
            body = json.dumps(doc).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _send_static(self, rel: str) -> None:
            if static_dir is None:
                self._send_json(None)
                return
            target = (static_dir / rel).resolve()
            if not str(target).startswith(str(static_dir.resolve())) or not target.is_file():
                self._send_json(None)
                return
            body = target.read_bytes()
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self) -> None:
            path = unquote(self.path.split("?", 1)[0])
            if path == "/api/org/summary":
                self._send_json(service.summary())
            elif path.startswith("/api/node/"):
                self._send_json(service.node(path[len("/api/node/"):]))
            elif path.startswith("/api/table/"):
                self._send_json(service.table(path[len("/api/table/"):]))
            elif path.startswith("/api/attribute/"):
                self._send_json(service.attribute(path[len("/api/attribute/"):]))
            elif path.startswith("/api/"):
                self._send_json(None)
            elif path == "/" or path == "/index.html":
                self._send_static("index.html")
            else:
                self._send_static(path.lstrip("/"))

    return Handler


def serve(org: Organization, lake: DataLake, port: int,
          report: EvalReport | None = None,
          static_dir: str | Path | None = None,
          host: str = "127.0.0.1") -> ThreadingHTTPServer:
    """Start the navigation service; caller owns shutdown."""
    service = NavigationService(org, lake, report)
    static = Path(static_dir) if static_dir else None
    handler = _make_handler(service, static)
    try:
        httpd = ThreadingHTTPServer((host, port), handler)
    except OSError as exc:
        raise OSError(f"cannot bind port {port}: {exc}") from exc
    return httpd


def serve_forever(httpd: ThreadingHTTPServer) -> threading.Thread:
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    return thread
