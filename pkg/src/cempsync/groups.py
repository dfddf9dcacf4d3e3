"""Compact groups with bi-invariant metrics scaled to diameter 1.

Four groups are supported: Z2 (signs), the symmetric group S_N (one-line
permutation arrays), SO(2) (wrapped angles) and SO(3) (unit quaternions in
w, x, y, z order).  Every group works on *batches*: an element array has a
leading batch axis followed by the group's ``elem_shape``.  A single element
is just a batch-free array, so the same methods serve both cases.

:class:`GroupElement` is a thin typed wrapper for code that handles one
element at a time (I/O, examples, tests).  The message-passing engine never
touches it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

__all__ = [
    "Group", "Z2", "Perm", "SO2", "SO3", "make_group",
    "GroupElement", "GroupStats",
    "compose", "inverse", "distance", "haar_sample", "group_stats",
    "derangements", "wrap_angle", "quat_from_axis_angle", "quat_to_matrix",
    "matrix_to_quat",
]

SO3_NORM_TOL = 1e-12


def wrap_angle(theta):
    """Map angles into (-pi, pi].  Values already inside are returned bit-exact."""
    theta = np.asarray(theta, dtype=float)
    inside = (theta > -math.pi) & (theta <= math.pi)
    wrapped = math.pi - np.mod(math.pi - theta, 2 * math.pi)
    return np.where(inside, theta, wrapped)


def derangements(m: int) -> int:
    """Number of derangements of m objects (the nearest integer to m!/e for m >= 1)."""
    a, b = 1, 0  # D_0, D_1
    if m == 0:
        return 1
    for k in range(2, m + 1):
        a, b = b, (k - 1) * (a + b)
    return b


def _quat_mul(a, b):
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def _normalize(q):
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = 0.5 * np.asarray(angle, dtype=float)[..., None]
    return np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)


def quat_to_matrix(q):
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
        np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
        np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def matrix_to_quat(R):
    """Rotation matrix to unit quaternion (single 3x3 matrix, Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return _normalize(np.array(q))


@dataclass(frozen=True)
class GroupStats:
    """Haar-measure quantities that enter the uniform-corruption parameter conditions.

    ``p_max`` is the cdf of max(s*_ik, s*_jk) over a corrupted cycle (an upper
    bound for S_N), ``V`` dominates the variance function used by rule B, and
    ``q_ratio_ok(n, p)`` certifies the support / quantile condition.
    """

    tag: str
    q_star: float
    z: float
    p0: float
    p_max: Callable[[float], float]
    V: Callable[[float], float]
    q_ratio_ok: Callable[[int, float], bool]
    degenerate: bool = False
    p1: float = float("nan")
    p2: float = float("nan")


def _mixture_weights(q_star):
    denom = 1.0 - q_star ** 2
    return 2 * q_star * (1 - q_star) / denom, (1 - q_star) ** 2 / denom


class Group:
    """Base class.  Subclasses implement the batch operations."""

    tag = ""
    elem_shape: tuple = ()
    dtype = float
    diameter_pairs = ()

    def identity(self, size=None):
        raise NotImplementedError

    def compose(self, a, b):
        raise NotImplementedError

    def inverse(self, a):
        raise NotImplementedError

    def distance(self, a, b):
        return self.norm(self.compose(a, self.inverse(b)))

    def norm(self, a):
        """Distance from the identity."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def canonical(self, a):
        """Validate and canonicalize an element array (wrap, renormalize, check bijection)."""
        return np.asarray(a, dtype=self.dtype)

    def encode(self, a):
        raise NotImplementedError

    def decode(self, obj):
        return self.canonical(obj)

    def at_distance(self, rng, s):
        """Elements at distance ``s`` (array) from the identity along a uniform direction."""
        raise ValueError(f"{self.tag}: perturbations of prescribed size need a continuous group")

    def worst(self, rng, size):
        """Elements at distance exactly 1 from the identity."""
        raise NotImplementedError

    def stats(self, q_star: float) -> GroupStats:
        raise NotImplementedError

    @property
    def is_continuous(self):
        return False

    def batch_size(self, a):
        a = np.asarray(a)
        nd = a.ndim - len(self.elem_shape)
        return a.shape[0] if nd > 0 else None

    def __repr__(self):
        return type(self).__name__ + "()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self).__name__)


class Z2(Group):
    tag = "z2"
    dtype = np.int64

    def identity(self, size=None):
        return np.ones(size, dtype=np.int64) if size is not None else np.int64(1)

    def compose(self, a, b):
        return np.asarray(a) * np.asarray(b)

    def inverse(self, a):
        return np.asarray(a).copy()

    def distance(self, a, b):
        return np.abs(np.asarray(a) - np.asarray(b)) / 2.0

    def norm(self, a):
        return np.abs(np.asarray(a) - 1) / 2.0

    def sample(self, rng, size=None):
        return rng.integers(0, 2, size=size) * 2 - 1

    def canonical(self, a):
        a = np.asarray(a, dtype=np.int64)
        if not np.all(np.abs(a) == 1):
            raise ValueError("Z2 elements must be +1 or -1")
        return a

    def encode(self, a):
        return int(a)

    def worst(self, rng, size):
        return -np.ones(size, dtype=np.int64)

    def stats(self, q_star):
        if q_star >= 1:
            return _degenerate(self.tag, q_star, 0.5, 0.5)
        p1, p2 = _mixture_weights(q_star)

        def q_ratio_ok(n, p):
            # bad corruption levels sit at 1
            return 1.0 >= 1.0 / (n * p * p * (1 - q_star ** 2))

        return GroupStats(
            self.tag, q_star, 0.5, 0.5,
            p_max=lambda x: np.where(np.asarray(x) >= 1.0, 1.0, 0.0),
            V=lambda x: 6.0 * np.exp(-np.asarray(x, dtype=float)),
            q_ratio_ok=q_ratio_ok, p1=p1, p2=p2,
        )


@dataclass(frozen=True, eq=True, repr=True)
class Perm(Group):
    N: int = 2
    tag = "perm"
    dtype = np.int64

    def __post_init__(self):
        if int(self.N) < 2:
            raise ValueError(f"Perm requires N >= 2, got {self.N}")

    @property
    def elem_shape(self):
        return (self.N,)

    def identity(self, size=None):
        e = np.arange(self.N, dtype=np.int64)
        return np.tile(e, (size, 1)) if size is not None else e

    def compose(self, a, b):
        # (a o b)[x] = a[b[x]]
        a, b = np.broadcast_arrays(np.asarray(a), np.asarray(b))
        return np.take_along_axis(a, b, axis=-1)

    def inverse(self, a):
        return np.argsort(np.asarray(a), axis=-1, kind="stable")

    def distance(self, a, b):
        return 1.0 - np.mean(np.asarray(a) == np.asarray(b), axis=-1)

    def norm(self, a):
        return 1.0 - np.mean(np.asarray(a) == np.arange(self.N), axis=-1)

    def sample(self, rng, size=None):
        if size is None:
            return rng.permutation(self.N)
        return rng.permuted(np.tile(np.arange(self.N, dtype=np.int64), (size, 1)), axis=1)

    def canonical(self, a):
        a = np.asarray(a, dtype=np.int64)
        if a.shape[-1] != self.N or not np.all(np.sort(a, axis=-1) == np.arange(self.N)):
            raise ValueError(f"not a permutation of 0..{self.N - 1}: {a.tolist()}")
        return a

    def encode(self, a):
        return [int(v) for v in a]

    def worst(self, rng, size):
        # a random N-cycle fixes no point
        out = np.empty((size, self.N), dtype=np.int64)
        for r in range(size):
            order = rng.permutation(self.N)
            out[r, order] = np.roll(order, -1)
        return out

    def cdf_upper(self, x):
        """cdf of d(u, e) for Haar u, which bounds the cdf of max(s*_ik, s*_jk)."""
        N = self.N
        nf = math.factorial(N)
        table = np.cumsum([Fraction(math.comb(N, m) * derangements(m), nf) for m in range(N + 1)])
        table = np.array([float(v) for v in table])
        x = np.asarray(x, dtype=float)
        m = np.floor(np.clip(x, 0.0, 1.0) * N + 1e-9).astype(int)
        return np.where(x < 0, 0.0, table[np.clip(m, 0, N)])

    def haar_mean(self):
        N = self.N
        nf = math.factorial(N)
        z = sum(Fraction(m, N) * Fraction(math.comb(N, m) * derangements(m), nf) for m in range(N + 1))
        return float(z)

    def stats(self, q_star):
        N = self.N
        p0 = 1.0 / math.factorial(N)
        z = self.haar_mean()
        if q_star >= 1:
            return _degenerate(self.tag, q_star, z, p0)
        p1, p2 = _mixture_weights(q_star)

        def V(x):
            x = np.asarray(x, dtype=float)
            tail = math.e ** 2 / N ** 2 * np.exp(-2 * x / N) * x ** 2
            return np.where(x <= N, 1.0, tail)

        def q_ratio_ok(n, p):
            # smallest nonzero corruption level is 1/N
            return 1.0 / N >= 1.0 / (n * p * p * (1 - q_star ** 2))

        return GroupStats(self.tag, q_star, z, p0, p_max=self.cdf_upper, V=V,
                          q_ratio_ok=q_ratio_ok, p1=p1, p2=p2)

    def __hash__(self):
        return hash(("perm", self.N))


class SO2(Group):
    tag = "so2"

    @property
    def is_continuous(self):
        return True

    def identity(self, size=None):
        return np.zeros(size) if size is not None else np.float64(0.0)

    def compose(self, a, b):
        return wrap_angle(np.asarray(a) + np.asarray(b))

    def inverse(self, a):
        return wrap_angle(-np.asarray(a))

    def distance(self, a, b):
        return np.abs(wrap_angle(np.asarray(a) - np.asarray(b))) / math.pi

    def norm(self, a):
        return np.abs(wrap_angle(a)) / math.pi

    def sample(self, rng, size=None):
        return wrap_angle(rng.uniform(-math.pi, math.pi, size=size))

    def canonical(self, a):
        a = np.asarray(a, dtype=float)
        if not np.all(np.isfinite(a)):
            raise ValueError("SO2 angles must be finite")
        return wrap_angle(a)

    def encode(self, a):
        return float(a)

    def at_distance(self, rng, s):
        s = np.asarray(s, dtype=float)
        sign = rng.choice([-1.0, 1.0], size=s.shape)
        return wrap_angle(sign * s * math.pi)

    def worst(self, rng, size):
        return np.full(size, math.pi)

    def stats(self, q_star):
        if q_star >= 1:
            return _degenerate(self.tag, q_star, 0.5, 0.0)
        p1, p2 = _mixture_weights(q_star)

        def p_max(x):
            x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
            return p1 * x + p2 * x * x

        def V(x):
            x = np.asarray(x, dtype=float)
            return math.e ** 2 * np.maximum(1.0 / (4 * x), 3.0 / (8 * x * x))

        return GroupStats(self.tag, q_star, 0.5, 0.0, p_max=p_max, V=V,
                          q_ratio_ok=lambda n, p: True, p1=p1, p2=p2)


class SO3(Group):
    tag = "so3"
    elem_shape = (4,)

    @property
    def is_continuous(self):
        return True

    def identity(self, size=None):
        e = np.array([1.0, 0.0, 0.0, 0.0])
        return np.tile(e, (size, 1)) if size is not None else e

    def compose(self, a, b):
        return _normalize(_quat_mul(np.asarray(a, dtype=float), np.asarray(b, dtype=float)))

    def inverse(self, a):
        a = np.array(a, dtype=float)
        a[..., 1:] *= -1
        return a

    def norm(self, a):
        a = np.asarray(a, dtype=float)
        # atan2 keeps full precision near the identity where arccos does not
        theta = 2.0 * np.arctan2(np.linalg.norm(a[..., 1:], axis=-1), np.abs(a[..., 0]))
        return np.minimum(theta / math.pi, 1.0)

    def distance(self, a, b):
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        d = self.norm(_quat_mul(a, self.inverse(b)))
        # q and -q are the same rotation; identical inputs give exactly 0
        same = np.all(a == b, axis=-1) | np.all(a == -b, axis=-1)
        return np.where(same, 0.0, d)

    def sample(self, rng, size=None):
        shape = (4,) if size is None else (size, 4)
        return _normalize(rng.standard_normal(shape))

    def canonical(self, a):
        a = np.asarray(a, dtype=float)
        if a.shape[-1] != 4:
            raise ValueError("SO3 elements are quaternions [w, x, y, z]")
        nrm = np.linalg.norm(a, axis=-1, keepdims=True)
        if np.any(nrm == 0) or not np.all(np.isfinite(a)):
            raise ValueError("degenerate quaternion")
        return np.where(np.abs(nrm - 1.0) > SO3_NORM_TOL, a / nrm, a)

    def encode(self, a):
        return [float(v) for v in a]

    def _random_axes(self, rng, size):
        return _normalize(rng.standard_normal((size, 3)))

    def at_distance(self, rng, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return quat_from_axis_angle(self._random_axes(rng, s.shape[0]), s * math.pi)

    def worst(self, rng, size):
        return quat_from_axis_angle(self._random_axes(rng, size), np.full(size, math.pi))

    def stats(self, q_star):
        z = 0.5 + 2.0 / math.pi ** 2
        if q_star >= 1:
            return _degenerate(self.tag, q_star, z, 0.0)
        p1, p2 = _mixture_weights(q_star)

        def p_max(x):
            x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
            c = x - np.sin(math.pi * x) / math.pi
            return p1 * c + p2 * c * c

        def V(x):
            x = np.asarray(x, dtype=float)
            return np.maximum(14.0 / x ** 2, 120.0 / x ** 6)

        return GroupStats(self.tag, q_star, z, 0.0, p_max=p_max, V=V,
                          q_ratio_ok=lambda n, p: True, p1=p1, p2=p2)


def _degenerate(tag, q_star, z, p0):
    return GroupStats(tag, q_star, z, p0,
                      p_max=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                      V=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                      q_ratio_ok=lambda n, p: True, degenerate=True)


def make_group(tag: str, N: int | None = None) -> Group:
    tag = tag.lower()
    if tag == "z2":
        return Z2()
    if tag == "perm":
        if N is None:
            raise ValueError("perm group needs N")
        return Perm(int(N))
    if tag == "so2":
        return SO2()
    if tag == "so3":
        return SO3()
    raise ValueError(f"unknown group {tag!r}; expected z2, perm, so2 or so3")


@dataclass(frozen=True, eq=False)
class GroupElement:
    group: Group
    value: np.ndarray = field(repr=True)

    def __post_init__(self):
        v = self.group.canonical(self.value)
        v = np.array(v)
        v.setflags(write=False)
        object.__setattr__(self, "value", v)

    @classmethod
    def identity(cls, group: Group):
        return cls(group, group.identity())

    def __mul__(self, other):
        return compose(self, other)

    def inverse(self):
        return inverse(self)

    def __eq__(self, other):
        return (isinstance(other, GroupElement) and self.group == other.group
                and np.array_equal(self.value, other.value))

    def __hash__(self):
        return hash((self.group, self.value.tobytes()))

    def encode(self):
        return self.group.encode(self.value)


def _check_same(a: GroupElement, b: GroupElement):
    if a.group != b.group:
        raise TypeError(f"group mismatch: {a.group!r} vs {b.group!r}")


def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    _check_same(a, b)
    return GroupElement(a.group, a.group.compose(a.value, b.value))


def inverse(a: GroupElement) -> GroupElement:
    return GroupElement(a.group, a.group.inverse(a.value))


def distance(a: GroupElement, b: GroupElement) -> float:
    _check_same(a, b)
    return float(a.group.distance(a.value, b.value))


def haar_sample(group: Group, rng: np.random.Generator) -> GroupElement:
    return GroupElement(group, group.sample(rng))


def group_stats(group: Group, q_star: float) -> GroupStats:
    if not 0.0 <= q_star <= 1.0:
        raise ValueError(f"q_star must lie in [0, 1], got {q_star}")
    return group.stats(q_star)
