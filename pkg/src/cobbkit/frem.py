"""Forward pass of the dual-attention feature enhancement block.

Position attention mixes spatial positions using two auto-correlation maps
(input-input, output-output) and one cross-correlation map (input-output);
channel attention then mixes channels of the result. Both add back their
input scaled by a residual gain (``lam`` and ``gamma``), so zero gains give the
identity. A shared linear head turns each channel into an (x, y) landmark and
a spatial softmax turns each channel into a heatmap.

Features are ``(C, N)`` arrays with ``N = H * W``.

Every matrix product goes through :func:`contract`, which sums the elementwise
products in sorted order. That makes each sum independent of channel order, so
permuting the channels permutes the output bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields
from typing import BinaryIO

import numpy as np

MAGIC = b"FREM"
_HEADER = struct.Struct("<4sIII")


class ShapeError(ValueError):
    pass


def contract(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` with an order-independent summation of each dot product."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot contract {a.shape} with {b.shape}")
    prods = a[:, None, :] * b.T[None, :, :]  # (m, n, k)
    return np.sort(prods, axis=-1).sum(axis=-1)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row softmax with max subtraction; the normaliser is summed in sorted order."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sort(e, axis=-1).sum(axis=-1, keepdims=True)


def _check_features(x, name) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"{name} must be (C, N), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite values")
    return x


def attention_map(fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    """Position attention ``s[j, i] = softmax_i(fx[:, i] . fy[:, j])``, shape (N, N)."""
    fx = _check_features(fx, "fx")
    fy = _check_features(fy, "fy")
    if fx.shape != fy.shape:
        raise ShapeError(f"feature shapes differ: {fx.shape} vs {fy.shape}")
    return softmax_rows(contract(fy.T, fx))


def fuse_attention(au1, au2, cr, gains) -> np.ndarray:
    au1, au2, cr = (np.asarray(m, dtype=np.float64) for m in (au1, au2, cr))
    if not (au1.shape == au2.shape == cr.shape) or au1.ndim != 2 or au1.shape[0] != au1.shape[1]:
        raise ShapeError(f"attention maps must share a square shape: {au1.shape}, {au2.shape}, {cr.shape}")
    g = [float(x) for x in gains]
    if len(g) != 3:
        raise ValueError("need exactly three map gains")
    return g[0] * au1 + g[1] * au2 + g[2] * cr


def geometric_features(fo_hat, s_total, lam: float) -> np.ndarray:
    """``fg[:, j] = lam * sum_i s_total[j, i] * fo_hat[:, i] + fo_hat[:, j]``."""
    fo_hat = np.asarray(fo_hat, dtype=np.float64)
    s_total = np.asarray(s_total, dtype=np.float64)
    n = fo_hat.shape[1]
    if s_total.shape != (n, n):
        raise ShapeError(f"attention map {s_total.shape} does not match N={n}")
    return lam * contract(fo_hat, s_total.T) + fo_hat


def channel_attention(fg, g1_proj, g2_proj) -> np.ndarray:
    """Channel attention ``v[j, i] = softmax_i(g1[i, :] . g2[j, :])``, shape (C, C)."""
    fg = _check_features(fg, "fg")
    c = fg.shape[0]
    for name, p in (("g1_proj", g1_proj), ("g2_proj", g2_proj)):
        if np.shape(p) != (c, c):
            raise ShapeError(f"{name} must be ({c}, {c}), got {np.shape(p)}")
    g1 = contract(g1_proj, fg)
    g2 = contract(g2_proj, fg)
    return softmax_rows(contract(g2, g1.T))


def semantic_features(fg, v, gamma: float) -> np.ndarray:
    """``fs[j, :] = gamma * sum_i v[j, i] * fg[i, :] + fg[j, :]``."""
    fg = np.asarray(fg, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    c = fg.shape[0]
    if v.shape != (c, c):
        raise ShapeError(f"channel map {v.shape} does not match C={c}")
    return gamma * contract(v, fg) + fg


@dataclass
class FremParams:
    input_proj: np.ndarray   # (C, C)
    output_proj: np.ndarray  # (C, C)
    map_gains: np.ndarray    # (3,) for the au1, au2, cr maps
    lam: float
    g1_proj: np.ndarray      # (C, C)
    g2_proj: np.ndarray      # (C, C)
    gamma: float
    head_weight: np.ndarray  # (N, 2)
    head_bias: np.ndarray    # (2,)

    def __post_init__(self):
        for f in ("input_proj", "output_proj", "g1_proj", "g2_proj", "head_weight",
                  "head_bias", "map_gains"):
            setattr(self, f, np.asarray(getattr(self, f), dtype=np.float64))
        self.lam = float(self.lam)
        self.gamma = float(self.gamma)
        c = self.input_proj.shape[0]
        for f in ("input_proj", "output_proj", "g1_proj", "g2_proj"):
            if getattr(self, f).shape != (c, c):
                raise ShapeError(f"{f} must be ({c}, {c}), got {getattr(self, f).shape}")
        if self.map_gains.shape != (3,):
            raise ShapeError("map_gains must have 3 entries")
        if self.head_weight.ndim != 2 or self.head_weight.shape[1] != 2:
            raise ShapeError(f"head_weight must be (N, 2), got {self.head_weight.shape}")
        if self.head_bias.shape != (2,):
            raise ShapeError("head_bias must have 2 entries")

    @property
    def channels(self) -> int:
        return self.input_proj.shape[0]

    @property
    def positions(self) -> int:
        return self.head_weight.shape[0]

    @classmethod
    def initial(cls, channels: int, positions: int, seed: int = 0, noise: float = 0.01) -> "FremParams":
        """Near-identity projections, unit map gains, zero residual gains."""
        rng = np.random.default_rng(seed)
        eye = np.eye(channels)

        def proj():
            return eye + noise * rng.uniform(-1.0, 1.0, (channels, channels))

        return cls(
            input_proj=proj(), output_proj=proj(), map_gains=np.ones(3), lam=0.0,
            g1_proj=proj(), g2_proj=proj(), gamma=0.0,
            head_weight=rng.uniform(-1.0, 1.0, (positions, 2)) / positions,
            head_bias=np.zeros(2),
        )

    def permuted(self, perm) -> "FremParams":
        """The same block acting on channels reordered by ``perm``."""
        perm = np.asarray(perm)

        def pp(m):
            return m[np.ix_(perm, perm)]

        return FremParams(pp(self.input_proj), pp(self.output_proj), self.map_gains.copy(),
                          self.lam, pp(self.g1_proj), pp(self.g2_proj), self.gamma,
                          self.head_weight.copy(), self.head_bias.copy())

    def to_json(self) -> str:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return json.dumps(out)

    @classmethod
    def from_json(cls, text: str) -> "FremParams":
        return cls(**json.loads(text))


@dataclass
class FremOutput:
    landmarks: np.ndarray  # (C, 2)
    heatmaps: np.ndarray   # (C, H, W), each channel sums to 1
    features: np.ndarray   # final (C, N) features before the heads


def frem_forward(fi, fo, params: FremParams, height: int, width: int) -> FremOutput:
    fi = _check_features(np.reshape(fi, (np.shape(fi)[0], -1)), "fi")
    fo = _check_features(np.reshape(fo, (np.shape(fo)[0], -1)), "fo")
    if fi.shape != fo.shape:
        raise ShapeError(f"fi {fi.shape} and fo {fo.shape} differ")
    c, n = fi.shape
    if n != height * width:
        raise ShapeError(f"N={n} does not match {height}x{width}")
    if params.channels != c or params.positions != n:
        raise ShapeError(f"params are for C={params.channels}, N={params.positions}; got C={c}, N={n}")

    fi_hat = contract(params.input_proj, fi)
    fo_hat = contract(params.output_proj, fo)
    s_total = fuse_attention(
        attention_map(fi_hat, fi_hat),
        attention_map(fo_hat, fo_hat),
        attention_map(fi_hat, fo_hat),
        params.map_gains,
    )
    fg = geometric_features(fo_hat, s_total, params.lam)
    v = channel_attention(fg, params.g1_proj, params.g2_proj)
    fs = semantic_features(fg, v, params.gamma)

    landmarks = contract(fs, params.head_weight) + params.head_bias
    heatmaps = softmax_rows(fs).reshape(c, height, width)
    return FremOutput(landmarks, heatmaps, fs)


# ---------------------------------------------------------------------------
# binary container: "FREM", u32 C, H, W (little endian), then float64 LE values


def write_tensor(fh: BinaryIO, values: np.ndarray) -> None:
    arr = np.asarray(values, dtype="<f8")
    shape = arr.shape + (1,) * (3 - arr.ndim)
    if len(shape) != 3:
        raise ShapeError(f"container holds at most 3 dimensions, got {arr.shape}")
    fh.write(_HEADER.pack(MAGIC, *shape))
    fh.write(np.ascontiguousarray(arr).tobytes())


def read_tensor(fh: BinaryIO) -> np.ndarray:
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise EOFError("truncated FREM header")
    magic, c, h, w = _HEADER.unpack(head)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    count = c * h * w
    body = fh.read(8 * count)
    if len(body) != 8 * count:
        raise EOFError("truncated FREM payload")
    return np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(c, h, w)


def save_tensor(path, values: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, values)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)


def save_params(path, params: FremParams) -> None:
    """Params as consecutive records: four projections, head weight, head bias,
    then (gain_au1, gain_au2, gain_cr, lam, gamma)."""
    scalars = np.concatenate([params.map_gains, [params.lam, params.gamma]])
    with open(path, "wb") as fh:
        for arr in (params.input_proj, params.output_proj, params.g1_proj, params.g2_proj,
                    params.head_weight, params.head_bias, scalars):
            write_tensor(fh, arr)


def load_params(path) -> FremParams:
    with open(path, "rb") as fh:
        ip, op, g1, g2, hw, hb, sc = (read_tensor(fh) for _ in range(7))
    return FremParams(ip[:, :, 0], op[:, :, 0], sc[:3, 0, 0], sc[3, 0, 0], g1[:, :, 0],
                      g2[:, :, 0], sc[4, 0, 0], hw[:, :, 0], hb[:, 0, 0])
