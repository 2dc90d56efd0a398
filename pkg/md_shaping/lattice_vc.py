"""
Lattices, closest-point search and Voronoi constellations.

A Voronoi constellation (VC) is the set of coding-lattice points
``kappa * Z^N + offset`` that fall inside the Voronoi region of a shaping
lattice ``Lambda_s``. Points are indexed through the Smith normal form of
the integer matrix relating the two lattices, so encoding and decoding are
closed form and never require the codebook to be stored.

Closest-point search is closed form for Z^N, D_N, E8 and the Barnes-Wall
lattice BW16. Lattices loaded from a generator matrix use a sphere decoder
on an LLL-reduced basis. Ties are resolved towards the lexicographically
smallest lattice point.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Optional

import numpy as np

from .constellation import MAX_DIMENSION, Constellation, normalize
from .exceptions import EnumerationTooLargeError, LatticeError

logger = logging.getLogger(__name__)

ZN = "Zn"
DN = "Dn"
E8 = "E8"
BW16 = "BW16"
GENERIC = "generic"

CLOSED_FORM = "closed-form"
SPHERE_DECODER = "sphere-decoder"

MAX_ENUMERATION_BITS = 20
INTEGRALITY_TOL = 1e-9
TIE_RTOL = 1e-12
LLL_DELTA = 0.75
OFFSET_PERTURBATION = 1e-3


def _round_half_down(y):
    """Coordinate-wise rounding; x.5 goes to x."""
    return np.ceil(np.asarray(y, dtype=float) - 0.5)


def _lex_less(a, b):
    diff = np.flatnonzero(a != b)
    return diff.size > 0 and a[diff[0]] < b[diff[0]]


def _pick_closest(y, candidates):
    """Closest of ``candidates`` (K, C, N) to ``y`` (K, N), ties lexicographic."""
    dist = np.sum((candidates - y[:, None, :]) ** 2, axis=-1)
    best = np.argmin(dist, axis=1)
    rows = np.arange(y.shape[0])
    chosen = candidates[rows, best].copy()
    d_min = dist[rows, best]
    tied = np.sum(dist <= d_min[:, None] * (1 + TIE_RTOL) + TIE_RTOL, axis=1) > 1
    for k in np.flatnonzero(tied):
        limit = d_min[k] * (1 + TIE_RTOL) + TIE_RTOL
        for c in np.flatnonzero(dist[k] <= limit):
            if _lex_less(candidates[k, c], chosen[k]):
                chosen[k] = candidates[k, c]
    return chosen


def _quantize_zn(y):
    return _round_half_down(y)


def _quantize_dn(y):
    f = _round_half_down(y)
    odd = np.mod(np.sum(f, axis=-1), 2.0) == 1.0
    if not np.any(odd):
        return f
    g = f[odd]
    err = y[odd] - g
    worst = np.argmax(np.abs(err), axis=-1)
    rows = np.arange(g.shape[0])
    step = np.where(err[rows, worst] > 0, 1.0, -1.0)
    g[rows, worst] += step
    f[odd] = g
    return f


def _quantize_e8(y):
    even = _quantize_dn(y)
    shifted = _quantize_dn(y - 0.5) + 0.5
    return _pick_closest(y, np.stack([even, shifted], axis=1))


def _rm14_codewords():
    """The 32 codewords of the first-order Reed-Muller code RM(1,4)."""
    bits = np.array([[(i >> j) & 1 for j in range(4)] for i in range(16)])
    words = []
    for a0, *a in product((0, 1), repeat=5):
        words.append((a0 + bits @ np.array(a)) % 2)
    return np.array(words, dtype=float)


_RM14 = _rm14_codewords()


def _quantize_bw16(y):
    # BW16 = union over c in RM(1,4) of c + 2 D16
    cands = np.stack(
        [c + 2.0 * _quantize_dn((y - c) / 2.0) for c in _RM14], axis=1
    )
    return _pick_closest(y, cands)


_QUANTIZERS = {
    ZN: _quantize_zn,
    DN: _quantize_dn,
    E8: _quantize_e8,
    BW16: _quantize_bw16,
}


def integer_row_basis(vectors):
    """Row-echelon integer basis of the lattice spanned by integer ``vectors``."""
    rows = [[int(round(v)) for v in r] for r in np.asarray(vectors)]
    n_rows, n_cols = len(rows), len(rows[0])
    r = 0
    for col in range(n_cols):
        if r == n_rows:
            break
        while True:
            nonzero = [i for i in range(r, n_rows) if rows[i][col] != 0]
            if not nonzero:
                break
            pivot = min(nonzero, key=lambda i: abs(rows[i][col]))
            rows[r], rows[pivot] = rows[pivot], rows[r]
            clean = True
            for i in range(r + 1, n_rows):
                if rows[i][col]:
                    q = rows[i][col] // rows[r][col]
                    rows[i] = [a - q * b for a, b in zip(rows[i], rows[r])]
                    clean = clean and rows[i][col] == 0
            if clean:
                break
        if rows[r][col] != 0:
            if rows[r][col] < 0:
                rows[r] = [-a for a in rows[r]]
            r += 1
    return np.array(rows[:r], dtype=float)


def _gram_schmidt(basis):
    n = basis.shape[0]
    ortho = np.zeros_like(basis)
    mu = np.zeros((n, n))
    for i in range(n):
        ortho[i] = basis[i]
        for j in range(i):
            norm = ortho[j] @ ortho[j]
            mu[i, j] = basis[i] @ ortho[j] / norm if norm > 0 else 0.0
            ortho[i] = ortho[i] - mu[i, j] * ortho[j]
    return ortho, mu


def lll_reduce(basis, delta=LLL_DELTA):
    """LLL-reduced copy of the row basis ``basis``."""
    b = np.array(basis, dtype=float)
    n = b.shape[0]
    ortho, mu = _gram_schmidt(b)
    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = np.rint(mu[k, j])
            if q != 0:
                b[k] -= q * b[j]
                ortho, mu = _gram_schmidt(b)
        lovasz = (delta - mu[k, k - 1] ** 2) * (ortho[k - 1] @ ortho[k - 1])
        if ortho[k] @ ortho[k] >= lovasz:
            k += 1
        else:
            b[[k - 1, k]] = b[[k, k - 1]]
            ortho, mu = _gram_schmidt(b)
            k = max(k - 1, 1)
    return b


class SphereDecoder:
    """Exact closest-point search for a lattice given by a generator matrix.

    Depth-first Schnorr-Euchner enumeration over the triangular factor of an
    LLL-reduced basis; the search radius shrinks to the best point found.
    """

    def __init__(self, generator):
        self.basis = lll_reduce(generator)
        q, r = np.linalg.qr(self.basis.T)
        signs = np.where(np.diag(r) < 0, -1.0, 1.0)
        self._q = q * signs
        self._r = r * signs[:, None]
        self.dimension = self.basis.shape[0]

    def closest(self, y):
        y = np.asarray(y, dtype=float)
        z = self._q.T @ y
        r = self._r
        n = self.dimension
        u = np.zeros(n)
        best = {"dist": math.inf, "point": None}

        def leaf(dist):
            point = u @ self.basis
            tol = TIE_RTOL * max(1.0, best["dist"]) if best["point"] is not None else 0.0
            if dist < best["dist"] - tol:
                best["dist"], best["point"] = dist, point
            elif abs(dist - best["dist"]) <= tol and _lex_less(point, best["point"]):
                best["point"] = point

        def search(level, partial):
            center = (z[level] - r[level, level + 1:] @ u[level + 1:]) / r[level, level]
            c0 = np.rint(center)
            direction = 1.0 if center >= c0 else -1.0
            k = 0
            while True:
                within = False
                for cand in ((c0,) if k == 0 else (c0 + direction * k, c0 - direction * k)):
                    dist = partial + (r[level, level] * (center - cand)) ** 2
                    if dist > best["dist"] * (1 + TIE_RTOL) + TIE_RTOL:
                        continue
                    within = True
                    u[level] = cand
                    if level == 0:
                        leaf(dist)
                    else:
                        search(level - 1, dist)
                if not within:
                    return
                k += 1

        search(n - 1, 0.0)
        return best["point"]


@dataclass(frozen=True, eq=False)
class Lattice:
    """A full-rank lattice with rows of ``generator`` as basis vectors.

    ``name`` is the family (Zn, Dn, E8, BW16 or generic); ``scale`` is the
    factor applied to the family's base lattice, which closed-form
    quantizers use as Q(y) = scale * Q_base(y / scale).
    """

    name: str
    dimension: int
    generator: np.ndarray
    quantizer: str = CLOSED_FORM
    scale: float = 1.0
    label: str = ""

    def __post_init__(self):
        g = np.array(self.generator, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] != self.dimension:
            raise LatticeError(
                f"generator must be {self.dimension}x{self.dimension}, got shape {g.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise LatticeError("generator contains non-finite entries")
        if np.linalg.matrix_rank(g) < self.dimension:
            raise LatticeError("rank-deficient generator")
        if self.quantizer == CLOSED_FORM and self.name not in _QUANTIZERS:
            raise LatticeError(f"no closed-form quantizer for {self.name!r}")
        if self.quantizer not in (CLOSED_FORM, SPHERE_DECODER):
            raise LatticeError(f"unknown quantizer {self.quantizer!r}")
        g.flags.writeable = False
        object.__setattr__(self, "generator", g)
        if not self.label:
            object.__setattr__(self, "label", self.name)

    @property
    def volume(self):
        return abs(float(np.linalg.det(self.generator)))

    @cached_property
    def _decoder(self):
        return SphereDecoder(self.generator)

    def __repr__(self):
        return f"Lattice({self.label}, N={self.dimension}, {self.quantizer})"


def zn(n):
    if not 1 <= n <= MAX_DIMENSION:
        raise LatticeError(f"dimension must lie in [1, {MAX_DIMENSION}], got {n}")
    return Lattice(ZN, n, np.eye(n), label=f"Z{n}")


def dn(n):
    """Checkerboard lattice: integer vectors with even coordinate sum."""
    if not 2 <= n <= MAX_DIMENSION:
        raise LatticeError(f"D_n needs 2 <= n <= {MAX_DIMENSION}, got {n}")
    g = np.zeros((n, n))
    g[0, :2] = (-1.0, -1.0)
    g[1, :2] = (1.0, -1.0)
    for k in range(2, n):
        g[k, k - 1] = -1.0
        g[k, k] = 1.0
    return Lattice(DN, n, g, label=f"D{n}")


def e8():
    g = np.zeros((8, 8))
    g[0, 0] = 2.0
    for k in range(1, 7):
        g[k, k - 1] = -1.0
        g[k, k] = 1.0
    g[7, :] = 0.5
    return Lattice(E8, 8, g, label="E8")


def bw16():
    """Barnes-Wall lattice in its integer form, determinant 2^12."""
    two_d16 = 2.0 * dn(16).generator
    g = lll_reduce(integer_row_basis(np.vstack([two_d16, _rm14_codewords()[1:]])))
    return Lattice(BW16, 16, g, label="BW16")


def generic_lattice(generator, label=GENERIC):
    g = np.atleast_2d(np.asarray(generator, dtype=float))
    return Lattice(GENERIC, g.shape[0], g, quantizer=SPHERE_DECODER, label=label)


def scaled(lattice, factor):
    if not factor > 0:
        raise LatticeError(f"scale factor must be positive, got {factor}")
    label = lattice.label if factor == 1 else f"{factor:g}{lattice.label}"
    return Lattice(
        lattice.name,
        lattice.dimension,
        lattice.generator * factor,
        quantizer=lattice.quantizer,
        scale=lattice.scale * factor,
        label=label,
    )


def lattice_by_name(name):
    """``z<n>``, ``d<n>``, ``e8`` or ``bw16`` (case-insensitive)."""
    key = name.strip().lower()
    if key == "e8":
        return e8()
    if key == "bw16":
        return bw16()
    if key[:1] in ("z", "d") and key[1:].isdigit():
        n = int(key[1:])
        return zn(n) if key[0] == "z" else dn(n)
    raise LatticeError(f"unknown lattice {name!r}")


def load_lattice(path):
    """Read a generator matrix: a line with N followed by N rows of N numbers."""
    path = Path(path)
    label = path.stem
    rows = []
    n = None
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if line.startswith("#"):
            if line[1:].strip().lower().startswith("name:"):
                label = line.split(":", 1)[1].strip() or label
            continue
        if not line:
            continue
        fields = line.split()
        try:
            values = [float(v) for v in fields]
        except ValueError:
            raise LatticeError(f"{path}:{line_no}: non-numeric entry") from None
        if n is None:
            if len(values) != 1 or values[0] != int(values[0]) or values[0] < 1:
                raise LatticeError(f"{path}:{line_no}: header must be the dimension N")
            n = int(values[0])
            continue
        if len(values) != n:
            raise LatticeError(f"{path}:{line_no}: expected {n} entries, got {len(values)}")
        rows.append(values)
    if n is None:
        raise LatticeError(f"{path}: empty lattice file")
    if len(rows) != n:
        raise LatticeError(f"{path}: expected {n} generator rows, got {len(rows)}")
    return generic_lattice(np.array(rows), label=label)


def nearest_point(lattice, y):
    """Closest lattice point to ``y`` (shape (N,) or (K, N))."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    batch = np.atleast_2d(y)
    if batch.shape[-1] != lattice.dimension:
        raise LatticeError(
            f"input has dimension {batch.shape[-1]}, lattice has {lattice.dimension}"
        )
    if lattice.quantizer == CLOSED_FORM:
        out = lattice.scale * _QUANTIZERS[lattice.name](batch / lattice.scale)
    else:
        out = np.array([lattice._decoder.closest(row) for row in batch])
    return out[0] if single else out


def smith_normal_form(matrix):
    """Integer U, D, V with U @ A @ V = D diagonal (D_ii | D_i+1,i+1).

    Returns ``(diag, v, v_inv)``; U is not needed for indexing.
    """
    a = [[int(round(x)) for x in row] for row in np.asarray(matrix)]
    n = len(a)
    v = [[int(i == j) for j in range(n)] for i in range(n)]
    v_inv = [[int(i == j) for j in range(n)] for i in range(n)]

    def swap_cols(i, j):
        for row in a:
            row[i], row[j] = row[j], row[i]
        for row in v:
            row[i], row[j] = row[j], row[i]
        v_inv[i], v_inv[j] = v_inv[j], v_inv[i]

    def add_col(src, dst, q):
        # column dst -= q * column src
        for row in a:
            row[dst] -= q * row[src]
        for row in v:
            row[dst] -= q * row[src]
        v_inv[src] = [x + q * y for x, y in zip(v_inv[src], v_inv[dst])]

    def negate_col(i):
        for row in a:
            row[i] = -row[i]
        for row in v:
            row[i] = -row[i]
        v_inv[i] = [-x for x in v_inv[i]]

    for t in range(n):
        while True:
            entries = [
                (abs(a[i][j]), i, j)
                for i in range(t, n)
                for j in range(t, n)
                if a[i][j] != 0
            ]
            if not entries:
                raise LatticeError("singular integer matrix")
            _, pi, pj = min(entries)
            a[t], a[pi] = a[pi], a[t]
            if pj != t:
                swap_cols(t, pj)
            pivot = a[t][t]
            done = True
            for i in range(t + 1, n):
                q = a[i][t] // pivot
                if q:
                    a[i] = [x - q * y for x, y in zip(a[i], a[t])]
                done = done and a[i][t] == 0
            for j in range(t + 1, n):
                q = a[t][j] // pivot
                if q:
                    add_col(t, j, q)
                done = done and a[t][j] == 0
            if not done:
                continue
            bad = [
                (i, j)
                for i in range(t + 1, n)
                for j in range(t + 1, n)
                if a[i][j] % pivot
            ]
            if not bad:
                break
            i, _ = bad[0]
            a[t] = [x + y for x, y in zip(a[t], a[i])]
        if a[t][t] < 0:
            negate_col(t)
    diag = np.array([a[i][i] for i in range(n)], dtype=np.int64)
    return diag, np.array(v, dtype=np.int64), np.array(v_inv, dtype=np.int64)


def _first_primes(count):
    primes = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes):
            primes.append(candidate)
        candidate += 1
    return np.array(primes, dtype=float)


def default_offset(base, coding_scale=1.0):
    """Half the all-ones vector; perturbed off the Voronoi facets unless cubic."""
    half = 0.5 * np.ones(base.dimension)
    if base.name != ZN:
        half = half + OFFSET_PERTURBATION * np.sqrt(_first_primes(base.dimension))
    return coding_scale * half


@dataclass(frozen=True, eq=False)
class VoronoiConstellation:
    """Codebook ``(kappa Z^N + offset) mod shaping`` with 2**bits points."""

    coding_scale: float
    shaping: Lattice
    offset: np.ndarray
    bits: int
    base_label: str = ""
    _diag: np.ndarray = field(init=False, repr=False)
    _v: np.ndarray = field(init=False, repr=False)
    _v_inv: np.ndarray = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.coding_scale > 0:
            raise LatticeError(f"coding scale must be positive, got {self.coding_scale}")
        if self.bits < 0:
            raise LatticeError(f"bits must be non-negative, got {self.bits}")
        offset = np.array(self.offset, dtype=float).reshape(-1)
        if offset.shape != (self.shaping.dimension,):
            raise LatticeError(
                f"offset must have {self.shaping.dimension} entries, got {offset.size}"
            )
        offset.flags.writeable = False
        object.__setattr__(self, "offset", offset)

        k = self.shaping.generator / self.coding_scale
        k_int = np.rint(k)
        if not np.allclose(k, k_int, rtol=0.0, atol=INTEGRALITY_TOL):
            raise LatticeError(
                f"{self.shaping.label} is not a sublattice of the coding lattice "
                f"{self.coding_scale:g}Z^{self.shaping.dimension}"
            )
        diag, v, v_inv = smith_normal_form(k_int)
        size = int(np.prod([int(d) for d in diag]))
        if size != 2**self.bits:
            raise LatticeError(
                f"shaping lattice holds {size} coding points, expected 2^{self.bits}"
            )
        weights = np.cumprod(np.concatenate([[1], diag[:-1]])).astype(np.int64)
        object.__setattr__(self, "_diag", diag)
        object.__setattr__(self, "_v", v)
        object.__setattr__(self, "_v_inv", v_inv)
        object.__setattr__(self, "_weights", weights)

    @classmethod
    def build(cls, base, bits, coding_scale=1.0, offset=None):
        """VC from ``base`` scaled so that it holds exactly 2**bits points."""
        n = base.dimension
        factor = (2.0**bits / base.volume) ** (1.0 / n)
        if abs(factor - round(factor)) < INTEGRALITY_TOL:
            factor = float(round(factor))
        shaping = scaled(base, coding_scale * factor)
        if offset is None:
            offset = default_offset(base, coding_scale)
        logger.debug("VC %s: bits=%d, shaping scale %.6g", base.label, bits, factor)
        return cls(coding_scale, shaping, offset, bits, base_label=base.label)

    @property
    def dimension(self):
        return self.shaping.dimension

    @property
    def size(self):
        return 2**self.bits

    @property
    def name(self):
        return f"VC-{self.base_label or self.shaping.label}-{self.bits}"

    def _coding_coordinates(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        digits = (idx[..., None] // self._weights) % self._diag
        return digits @ self._v_inv

    def encode(self, indices):
        idx = np.asarray(indices)
        if np.any(idx < 0) or np.any(idx >= self.size):
            raise LatticeError(f"index out of range [0, {self.size})")
        y = self.coding_scale * self._coding_coordinates(idx).astype(float) + self.offset
        return y - nearest_point(self.shaping, y)

    def decode(self, y):
        y = np.asarray(y, dtype=float)
        a = _round_half_down((y - self.offset) / self.coding_scale).astype(np.int64)
        digits = np.mod(a @ self._v, self._diag)
        return digits @ self._weights


def vc_encode(vc, index):
    """Codebook point for ``index`` in [0, 2**bits)."""
    if isinstance(index, (int, np.integer)):
        return vc.encode(np.array([index]))[0]
    return vc.encode(index)


def vc_decode(vc, y):
    """Index of the codebook point whose coding-lattice coset contains round(y)."""
    out = vc.decode(y)
    return int(out) if np.ndim(out) == 0 else out


def vc_enumerate(vc, name: Optional[str] = None):
    """All 2**bits points as a normalized, unlabeled ``Constellation``.

    The codebook is shifted to zero mean before normalization; boundary
    points of the shaping region all fall on the side the offset selects.
    """
    if vc.bits > MAX_ENUMERATION_BITS:
        raise EnumerationTooLargeError(
            f"enumeration too large: 2^{vc.bits} points (limit 2^{MAX_ENUMERATION_BITS})"
        )
    if vc.bits == 0:
        raise LatticeError("a constellation needs at least two points (bits >= 1)")
    points = vc.encode(np.arange(vc.size))
    points = points - points.mean(axis=0)
    return normalize(Constellation(points=points, name=name or vc.name))
