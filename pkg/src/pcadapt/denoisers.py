"""Noise-prediction models: analytic denoisers and a wire-protocol client.

A denoiser maps a noised cloud x_t at timestep t to an estimate of the
injected standard-normal noise. Two analytic implementations are provided:

* EmpiricalPosteriorDenoiser — the exact posterior mean E[x0 | x_t] when
  the clean distribution is uniform over a finite set of source clouds,
  evaluated over the 3N-dimensional flattening. Order-sensitive by
  construction; downstream losses are permutation-invariant Chamfer, so
  this is acceptable as guidance and exact as a verification oracle.
* PointMixtureDenoiser — a per-point surrogate: each point is denoised
  against a Gaussian mixture centered on the pooled source points, so it
  accepts clouds of any size.

ExternalDenoiser speaks newline-delimited JSON (stdio or TCP) to a remote
model; see the protocol constants below.
"""

from __future__ import annotations

import json
import queue
import socket
import subprocess
import threading
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .cloud import as_points
from .errors import (
    AlphaZero,
    ProtocolError,
    RemoteFailure,
    ShapeMismatch,
    Timeout,
)
from .rng import stream
from .schedule import NoiseSchedule

LOG_WEIGHT_CUTOFF = 50.0  # drop mixture components below max - 50 (error < 2e-22)
MIXTURE_MAX_POOL = 8192

try:
    from ._kernels import mixture_posterior_kernel

    _HAVE_KERNELS = True
except ImportError:  # pragma: no cover - numba present in supported envs
    _HAVE_KERNELS = False


class Denoiser(Protocol):
    def denoise(self, x_t, t: int) -> np.ndarray: ...


@dataclass
class EmpiricalSource:
    """A finite set of diffusion-normalized source clouds sharing one N."""

    shapes: list

    def __post_init__(self):
        if len(self.shapes) < 1:
            raise ValueError("EmpiricalSource needs at least one shape")
        pts = [as_points(s) for s in self.shapes]
        n = pts[0].shape[0]
        for i, p in enumerate(pts):
            if p.shape[0] != n:
                raise ShapeMismatch(
                    f"shape {i} has {p.shape[0]} points, expected {n}"
                )
        self.stacked = np.stack(pts)  # (M, N, 3)
        self.flat = self.stacked.reshape(len(pts), -1)  # (M, 3N)

    @property
    def m(self) -> int:
        return self.stacked.shape[0]

    @property
    def n(self) -> int:
        return self.stacked.shape[1]

    def pooled_points(self, max_points: int = MIXTURE_MAX_POOL, seed: int = 0) -> np.ndarray:
        """Union of all source points, deterministically subsampled."""
        pool = self.stacked.reshape(-1, 3)
        if pool.shape[0] > max_points:
            idx = stream(seed, "mixture-pool").choice(pool.shape[0], size=max_points, replace=False)
            pool = pool[np.sort(idx)]
        return pool


def _check_sigma(sched: NoiseSchedule, t: int) -> tuple[float, float]:
    t = int(t)
    if sched.alpha[t] <= 0.0:
        raise AlphaZero(f"alpha_{t} = 0; denoising undefined at t = T")
    return float(sched.alpha[t]), float(sched.sigma[t])


def _eps_from_x0(x_t: np.ndarray, x0_hat: np.ndarray, a: float, s: float) -> np.ndarray:
    if s == 0.0:
        return np.zeros_like(x_t)
    return (x_t - a * x0_hat) / s


class EmpiricalPosteriorDenoiser:
    """Exact posterior-mean denoiser over a finite source set."""

    def __init__(self, source: EmpiricalSource, sched: NoiseSchedule):
        self.source = source
        self.sched = sched

    def denoise(self, x_t, t: int) -> np.ndarray:
        a, s = _check_sigma(self.sched, t)
        pts = as_points(x_t)
        if pts.shape[0] != self.source.n:
            raise ShapeMismatch(
                f"query has {pts.shape[0]} points, source shapes have {self.source.n}"
            )
        if s == 0.0:
            return np.zeros_like(pts)
        diff = pts.reshape(1, -1) - a * self.source.flat  # (M, 3N)
        logw = -(diff * diff).sum(axis=1) / (2.0 * s * s)
        logw -= logw.max()
        w = np.exp(logw)
        w[logw < -LOG_WEIGHT_CUTOFF] = 0.0
        w /= w.sum()
        x0_hat = np.tensordot(w, self.source.stacked, axes=(0, 0))
        return _eps_from_x0(pts, x0_hat, a, s)


class PointMixtureDenoiser:
    """Per-point posterior mean against the pooled source points."""

    def __init__(
        self,
        source: EmpiricalSource,
        sched: NoiseSchedule,
        max_pool: int = MIXTURE_MAX_POOL,
        seed: int = 0,
    ):
        self.sched = sched
        self.pool = source.pooled_points(max_pool, seed)

    def denoise(self, x_t, t: int) -> np.ndarray:
        a, s = _check_sigma(self.sched, t)
        pts = as_points(x_t)
        if s == 0.0:
            return np.zeros_like(pts)
        if _HAVE_KERNELS:
            x0_hat = mixture_posterior_kernel(pts, self.pool, a, s, LOG_WEIGHT_CUTOFF)
            return _eps_from_x0(pts, x0_hat, a, s)
        scaled = a * self.pool  # (P, 3)
        qq = (pts * pts).sum(axis=1)
        pp = (scaled * scaled).sum(axis=1)
        d2 = qq[:, None] + pp[None, :] - 2.0 * (pts @ scaled.T)
        logw = d2 * (-1.0 / (2.0 * s * s))
        logw -= logw.max(axis=1, keepdims=True)
        # dropped components also skip the exp, which dominates the cost
        w = np.zeros_like(logw)
        keep = logw >= -LOG_WEIGHT_CUTOFF
        w[keep] = np.exp(logw[keep])
        w /= w.sum(axis=1, keepdims=True)
        x0_hat = w @ self.pool
        return _eps_from_x0(pts, x0_hat, a, s)


# --- wire protocol client ----------------------------------------------------


class _StdioTransport:
    """Line transport over a child process's stdin/stdout."""

    def __init__(self, cmd: list):
        self.proc = subprocess.Popen(
            cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def send_line(self, line: str) -> None:
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, ValueError) as e:
            raise ProtocolError(f"server pipe closed: {e}") from e

    def recv_line(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise Timeout(f"no response within {timeout} s") from None
        if line is None:
            raise ProtocolError("server closed its output")
        return line

    def close(self):
        try:
            self.proc.stdin.close()
        except Exception:
            pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.rfile = self.sock.makefile("r", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        try:
            self.sock.sendall((line + "\n").encode("utf-8"))
        except OSError as e:
            raise ProtocolError(f"socket send failed: {e}") from e

    def recv_line(self, timeout: float) -> str:
        self.sock.settimeout(timeout)
        try:
            line = self.rfile.readline()
        except socket.timeout:
            raise Timeout(f"no response within {timeout} s") from None
        if not line:
            raise ProtocolError("server closed the connection")
        return line

    def close(self):
        try:
            self.rfile.close()
        finally:
            self.sock.close()


class ExternalDenoiser:
    """Client for the newline-delimited JSON denoiser protocol.

    One in-flight request per connection; calls are serialized with a lock
    so concurrent users see FIFO ordering.
    """

    def __init__(self, transport, expected_T: int, timeout: float = 30.0):
        self._transport = transport
        self._timeout = timeout
        self._lock = threading.Lock()
        self._next_id = 0
        self.remote_name = None
        self._handshake(expected_T)

    @classmethod
    def spawn(cls, cmd: list, expected_T: int, timeout: float = 30.0) -> "ExternalDenoiser":
        return cls(_StdioTransport(cmd), expected_T, timeout)

    @classmethod
    def connect_tcp(cls, host: str, port: int, expected_T: int, timeout: float = 30.0) -> "ExternalDenoiser":
        return cls(_TcpTransport(host, port, timeout), expected_T, timeout)

    def _round_trip(self, obj: dict) -> dict:
        self._transport.send_line(json.dumps(obj))
        line = self._transport.recv_line(self._timeout)
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"malformed response line: {line[:200]!r}") from e
        if not isinstance(reply, dict) or "op" not in reply:
            raise ProtocolError(f"response is not a protocol object: {line[:200]!r}")
        return reply

    def _handshake(self, expected_T: int) -> None:
        reply = self._round_trip({"op": "hello"})
        if reply.get("op") != "hello" or "T" not in reply:
            raise ProtocolError(f"bad hello response: {reply!r}")
        if int(reply["T"]) != int(expected_T):
            raise ProtocolError(
                f"remote schedule T={reply['T']} does not match local T={expected_T}"
            )
        self.remote_name = reply.get("name")

    def denoise(self, x_t, t: int) -> np.ndarray:
        pts = as_points(x_t)
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            reply = self._round_trip(
                {"op": "denoise", "id": rid, "t": int(t), "points": pts.tolist()}
            )
        if reply.get("op") == "error":
            raise RemoteFailure(str(reply.get("msg", "remote error")))
        if reply.get("op") != "denoise":
            raise ProtocolError(f"unexpected op {reply.get('op')!r}")
        if reply.get("id") != rid:
            raise ProtocolError(f"response id {reply.get('id')} != request id {rid}")
        eps = np.asarray(reply.get("eps"), dtype=np.float64)
        if eps.shape != pts.shape:
            raise ShapeMismatch(f"remote eps shape {eps.shape} != {pts.shape}")
        if not np.all(np.isfinite(eps)):
            raise ProtocolError("remote eps contains non-finite values")
        return eps

    def close(self):
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
