"""The wire-protocol request loop.

Newline-delimited JSON, UTF-8, one object per line. Requests:

    {"op": "hello"}
    {"op": "denoise", "id": <int>, "t": <int>, "points": [[x, y, z], ...]}

Responses preserve request order. Every malformed or failing line gets an
{"op": "error", ...} reply and the connection stays alive; blank lines
are skipped. The loop is single-threaded, so ordering holds by
construction.
"""

from __future__ import annotations

import json
import socket
import sys

import numpy as np

from .plugins import PluginError

SERVER_NAME = "denoiser-server/0.1"


def handle_line(line: str, plugin, T: int):
    """One request line -> one response line (or None for blank input)."""
    line = line.strip()
    if not line:
        return None
    try:
        req = json.loads(line)
    except json.JSONDecodeError:
        return {"op": "error", "id": None, "msg": "malformed json"}
    if not isinstance(req, dict):
        return {"op": "error", "id": None, "msg": "request must be a json object"}
    rid = req.get("id")
    op = req.get("op")
    if op == "hello":
        return {"op": "hello", "T": T, "name": SERVER_NAME}
    if op != "denoise":
        return {"op": "error", "id": rid, "msg": f"unknown op {op!r}"}
    try:
        t = req["t"]
        points = req["points"]
    except KeyError as e:
        return {"op": "error", "id": rid, "msg": f"missing field {e.args[0]!r}"}
    if not isinstance(t, int):
        return {"op": "error", "id": rid, "msg": "t must be an integer"}
    try:
        arr = np.asarray(points, dtype=np.float64)
    except (TypeError, ValueError):
        return {"op": "error", "id": rid, "msg": "points must be an array of [x,y,z]"}
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
        return {"op": "error", "id": rid, "msg": f"points must be (N,3), got {list(arr.shape)}"}
    if not np.all(np.isfinite(arr)):
        return {"op": "error", "id": rid, "msg": "points contain non-finite values"}
    try:
        eps = plugin(t, arr)
    except PluginError as e:
        return {"op": "error", "id": rid, "msg": str(e)}
    except Exception as e:  # a plugin bug must not kill the connection
        return {"op": "error", "id": rid, "msg": f"plugin failure: {e}"}
    return {"op": "denoise", "id": rid, "eps": np.asarray(eps).tolist()}


def serve_stream(rfile, wfile, plugin, T: int) -> None:
    for line in rfile:
        reply = handle_line(line, plugin, T)
        if reply is None:
            continue
        wfile.write(json.dumps(reply) + "\n")
        wfile.flush()


def serve_stdio(plugin, T: int) -> int:
    try:
        serve_stream(sys.stdin, sys.stdout, plugin, T)
    except (BrokenPipeError, OSError) as e:
        print(f"transport failure: {e}", file=sys.stderr)
        return 1
    return 0


def serve_tcp(host: str, port: int, plugin, T: int) -> int:
    try:
        with socket.create_server((host, port)) as srv:
            while True:
                conn, _ = srv.accept()
                with conn:
                    rfile = conn.makefile("r", encoding="utf-8", newline="\n")
                    wfile = conn.makefile("w", encoding="utf-8", newline="\n")
                    try:
                        serve_stream(rfile, wfile, plugin, T)
                    except (BrokenPipeError, ConnectionResetError):
                        continue
    except OSError as e:
        print(f"transport failure: {e}", file=sys.stderr)
        return 1
