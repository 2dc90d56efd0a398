"""
M-ary N-dimensional constellations.

Energy convention: unit mean energy per 2D slot, i.e. after ``normalize``
the mean squared norm of the points equals N/2. Every SNR in the package
is defined per 2D slot against this reference.

File format (UTF-8 text, ``#`` starts a comment line)::

    N M
    labeled | unlabeled
    [<bits>] c1 c2 ... cN      (M records)

Files are read as unnormalized; ``load_constellation`` normalizes and
records the applied factor in ``Constellation.scale``.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .config import SHIPPED_CORPUS_DIR, corpus_root
from .exceptions import ConstellationError, ConstellationParseError

logger = logging.getLogger(__name__)

MAX_DIMENSION = 32
NORMALIZATION_RTOL = 1e-12

CORPUS_SUFFIXES = (".const", ".txt")

# Database formats of the summary report. Files are looked
# up by these names in the corpus directory; absent files are skipped.
RESERVED_FORMATS = (
    "hepta2-8",
    "DSQ2-8",
    "C4-64",
    "GS-AWGN-4D-64",
    "4D-64PRS",
    "GS-AWGN-2D-32",
    "C4-1024",
    "4D-OS1024",
    "NL-4D-1024",
)

QAM_NAMES = {
    1: "BPSK",
    2: "QPSK",
    3: "8QAM",
    4: "16QAM",
    5: "32QAM",
    6: "64QAM",
    7: "128QAM",
    8: "256QAM",
}

# Odd sizes whose geometry is shipped rather than generated.
SHIPPED_QAM_FILES = {3: "qam8.const", 5: "qam32.const"}


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True, eq=False)
class Constellation:
    """Equiprobable point set with optional bit labels.

    ``points`` has shape (M, N). ``labels`` holds M distinct bit strings
    of length log2(M) when present. ``scale`` is the cumulative factor
    applied by normalization since the geometry was read or generated.
    """

    points: np.ndarray
    labels: Optional[Tuple[str, ...]] = None
    name: str = ""
    scale: float = 1.0

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64, copy=True)
        if points.ndim != 2:
            raise ConstellationError(
                f"points must be a 2-D array (M, N), got shape {points.shape}"
            )
        size, dimension = points.shape
        if dimension < 2 or dimension % 2 or dimension > MAX_DIMENSION:
            raise ConstellationError(
                f"dimension must be even and in [2, {MAX_DIMENSION}], got {dimension}"
            )
        if size < 2:
            raise ConstellationError(f"need at least 2 points, got {size}")
        if not np.all(np.isfinite(points)):
            raise ConstellationError("points contain NaN or Inf coordinates")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

        if self.labels is not None:
            labels = tuple(str(label) for label in self.labels)
            _validate_labels(labels, size)
            object.__setattr__(self, "labels", labels)
        if not self.scale > 0:
            raise ConstellationError(f"scale must be positive, got {self.scale}")

    @property
    def dimension(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def is_labeled(self):
        return self.labels is not None

    @cached_property
    def label_bits(self):
        """(M, log2 M) uint8 array of label bits, or None."""
        if self.labels is None:
            return None
        bits = np.array([[int(ch) for ch in label] for label in self.labels])
        return bits.astype(np.uint8)

    def mean_energy_per_2d(self):
        return float(np.mean(np.sum(self.points**2, axis=1)) / (self.dimension / 2))

    def is_close(self, other, rtol=1e-12):
        """Same geometry and labels (names and scales are not compared)."""
        if not isinstance(other, Constellation):
            return False
        if self.points.shape != other.points.shape or self.labels != other.labels:
            return False
        return bool(np.allclose(self.points, other.points, rtol=rtol, atol=rtol))

    def __repr__(self):
        labeled = "labeled" if self.is_labeled else "unlabeled"
        return (
            f"Constellation(name={self.name!r}, N={self.dimension}, "
            f"M={self.size}, {labeled})"
        )


def _validate_labels(labels, size):
    if not _is_power_of_two(size):
        raise ConstellationError(
            f"labels require M to be a power of two, got M={size}"
        )
    if len(labels) != size:
        raise ConstellationError(f"expected {size} labels, got {len(labels)}")
    width = size.bit_length() - 1
    seen = set()
    for label in labels:
        if len(label) != width or set(label) - {"0", "1"}:
            raise ConstellationError(
                f"label {label!r} is not a {width}-bit binary string"
            )
        if label in seen:
            raise ConstellationError(f"duplicate label {label!r}")
        seen.add(label)


@dataclass(frozen=True)
class MomentSummary:
    """Per-2D-slot moments feeding the modulation-dependent NLI model."""

    mu2: float
    mu4: float
    excess_kurtosis: float
    cross_energy: Optional[float] = None

    @classmethod
    def gaussian(cls):
        """Circular Gaussian reference: E|x|^4 = 2 (E|x|^2)^2, so Phi = 0."""
        return cls(mu2=1.0, mu4=2.0, excess_kurtosis=0.0)


def spectral_efficiency(c):
    """Bits per 4D symbol, m = (4/N) log2 M."""
    return 4.0 / c.dimension * float(np.log2(c.size))


def is_normalized(c, rtol=NORMALIZATION_RTOL):
    return abs(c.mean_energy_per_2d() - 1.0) <= rtol


def normalize(c):
    """Scale ``c`` to unit mean energy per 2D slot; labels are untouched."""
    energy = c.mean_energy_per_2d()
    if energy == 0.0:
        raise ConstellationError("degenerate constellation")
    if abs(energy - 1.0) <= NORMALIZATION_RTOL:
        return c
    factor = 1.0 / np.sqrt(energy)
    return Constellation(
        points=c.points * factor,
        labels=c.labels,
        name=c.name,
        scale=c.scale * factor,
    )


def pam_gray(bits):
    """Gray-labeled PAM amplitude in {+-1, +-3, ...} for a bit sequence."""
    if len(bits) > 1:
        return (1 - 2 * bits[0]) * (2 ** len(bits[1:]) - pam_gray(bits[1:]))
    return 1 - 2 * bits[0]


def _int_bits(value, width):
    return [int(ch) for ch in np.binary_repr(value, width)]


def _rectangular_qam(bits_i, bits_q):
    """Gray product of two PAMs; label is the I bits followed by the Q bits."""
    points = []
    labels = []
    for i in range(2**bits_i):
        x = pam_gray(_int_bits(i, bits_i)) if bits_i else 0
        for q in range(2**bits_q):
            y = pam_gray(_int_bits(q, bits_q)) if bits_q else 0
            points.append((x, y))
            label = (np.binary_repr(i, bits_i) if bits_i else "") + (
                np.binary_repr(q, bits_q) if bits_q else ""
            )
            labels.append(label)
    return np.array(points, dtype=np.float64), labels


def _cross_qam(bits):
    """Cross QAM for odd ``bits`` >= 5.

    Starts from the Gray-labeled 2^((b+1)/2) x 2^((b-1)/2) rectangle and
    folds the outermost I columns onto the top and bottom rows.
    """
    bits_i = (bits + 1) // 2
    bits_q = (bits - 1) // 2
    points, labels = _rectangular_qam(bits_i, bits_q)
    amp_q = 2**bits_q - 1
    extension = 2 ** (bits_q - 1)
    folded = points.copy()
    outer = np.abs(points[:, 0]) > amp_q + extension
    x, y = points[outer, 0], points[outer, 1]
    folded[outer, 0] = np.sign(x) * (amp_q + 1 - np.abs(y))
    folded[outer, 1] = np.sign(y) * (np.abs(x) - extension)
    return folded, labels


def generate_qam(bits_per_2d):
    """Normalized, labeled 2D QAM with 2^bits_per_2d points.

    Even sizes are Gray square QAM; 8QAM and 32QAM come from the shipped
    corpus files, 128QAM is the folded cross.
    """
    if bits_per_2d not in QAM_NAMES:
        raise ConstellationError(
            f"unsupported QAM size: bits_per_2d={bits_per_2d} (expected 1..8)"
        )
    name = QAM_NAMES[bits_per_2d]
    if bits_per_2d in SHIPPED_QAM_FILES:
        shipped = load_constellation(SHIPPED_CORPUS_DIR / SHIPPED_QAM_FILES[bits_per_2d])
        return Constellation(
            points=shipped.points, labels=shipped.labels, name=name, scale=shipped.scale
        )
    if bits_per_2d == 1:
        points, labels = _rectangular_qam(1, 0)
    elif bits_per_2d % 2 == 0:
        points, labels = _rectangular_qam(bits_per_2d // 2, bits_per_2d // 2)
    else:
        points, labels = _cross_qam(bits_per_2d)
    return normalize(Constellation(points=points, labels=labels, name=name))


def cartesian_square(c2d):
    """Polarization-multiplexed 4D format from a 2D one (M^2 points)."""
    if c2d.dimension != 2:
        raise ConstellationError(
            f"cartesian_square needs a 2D constellation, got N={c2d.dimension}"
        )
    size = c2d.size
    first = np.repeat(c2d.points, size, axis=0)
    second = np.tile(c2d.points, (size, 1))
    labels = None
    if c2d.labels is not None:
        labels = [a + b for a in c2d.labels for b in c2d.labels]
    return Constellation(
        points=np.hstack([first, second]),
        labels=labels,
        name=f"PM-{c2d.name}" if c2d.name else "",
        scale=c2d.scale,
    )


def moments(c):
    """Exact per-2D-slot moments over the M equiprobable points.

    ``excess_kurtosis`` is computed slot by slot and averaged;
    ``cross_energy`` is only defined for N=4.
    """
    slots = c.points.reshape(c.size, c.dimension // 2, 2)
    energy = np.sum(slots**2, axis=2)  # (M, slots)
    mu2_slot = energy.mean(axis=0)
    mu4_slot = (energy**2).mean(axis=0)
    phi = float(np.mean(mu4_slot / mu2_slot**2 - 2.0))
    cross = None
    if c.dimension == 4:
        cross = float(np.mean(energy[:, 0] * energy[:, 1]))
    return MomentSummary(
        mu2=float(energy.mean()),
        mu4=float((energy**2).mean()),
        excess_kurtosis=phi,
        cross_energy=cross,
    )


def _content_lines(text):
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield line_no, line


def _comment_name(text):
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("#") and line[1:].strip().lower().startswith("name:"):
            return line[1:].strip()[5:].strip()
    return None


def parse_constellation(text, path=None):
    """Parse constellation file contents; returns an unnormalized value."""
    lines = list(_content_lines(text))
    if not lines:
        raise ConstellationParseError("empty file", path=path, line_no=1)

    header_no, header = lines[0]
    fields = header.split()
    try:
        if len(fields) != 2:
            raise ValueError
        dimension, size = int(fields[0]), int(fields[1])
    except ValueError:
        raise ConstellationParseError(
            f"malformed header {header!r}, expected 'N M'", path, header_no
        ) from None
    if dimension < 2 or dimension % 2 or dimension > MAX_DIMENSION or size < 2:
        raise ConstellationParseError(
            f"malformed header: N={dimension} must be even in [2, {MAX_DIMENSION}] "
            f"and M={size} >= 2",
            path,
            header_no,
        )

    if len(lines) < 2:
        raise ConstellationParseError(
            "missing 'labeled'/'unlabeled' line", path, header_no
        )
    mode_no, mode = lines[1]
    if mode not in ("labeled", "unlabeled"):
        raise ConstellationParseError(
            f"expected 'labeled' or 'unlabeled', found {mode!r}", path, mode_no
        )
    labeled = mode == "labeled"
    if labeled and not _is_power_of_two(size):
        raise ConstellationParseError(
            f"labeled file requires M to be a power of two, got M={size}",
            path,
            header_no,
        )
    width = size.bit_length() - 1

    records = lines[2:]
    if len(records) < size:
        last_no = records[-1][0] if records else mode_no
        raise ConstellationParseError(
            f"expected {size} points, found {len(records)}", path, last_no
        )
    if len(records) > size:
        raise ConstellationParseError(
            f"unexpected record beyond the {size} declared points",
            path,
            records[size][0],
        )

    points = np.empty((size, dimension), dtype=np.float64)
    labels = []
    first_seen: Dict[str, int] = {}
    for row, (line_no, line) in enumerate(records):
        tokens = line.split()
        if labeled:
            label, tokens = tokens[0], tokens[1:]
            if len(label) != width or set(label) - {"0", "1"}:
                raise ConstellationParseError(
                    f"label {label!r} is not a {width}-bit binary string",
                    path,
                    line_no,
                )
            if label in first_seen:
                raise ConstellationParseError(
                    f"duplicate label {label!r} (first seen on line {first_seen[label]})",
                    path,
                    line_no,
                )
            first_seen[label] = line_no
            labels.append(label)
        if len(tokens) != dimension:
            raise ConstellationParseError(
                f"expected {dimension} coordinates, found {len(tokens)}",
                path,
                line_no,
            )
        try:
            points[row] = [float(tok) for tok in tokens]
        except ValueError:
            raise ConstellationParseError(
                f"invalid coordinate in {line!r}", path, line_no
            ) from None
        if not np.all(np.isfinite(points[row])):
            raise ConstellationParseError(
                "coordinates must be finite", path, line_no
            )

    name = _comment_name(text)
    if name is None:
        name = Path(path).stem if path is not None else ""
    try:
        return Constellation(
            points=points, labels=labels if labeled else None, name=name
        )
    except ConstellationError as e:
        raise ConstellationParseError(str(e), path, header_no) from None


def load_constellation(path):
    """Read a constellation file and normalize it."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    c = parse_constellation(text, path=path)
    try:
        c = normalize(c)
    except ConstellationError as e:
        raise ConstellationParseError(str(e), path=path) from None
    logger.debug("Loaded %r from %s (scale %.6g)", c, path, c.scale)
    return c


def store_constellation(c, path):
    """Write ``c`` in the corpus text format with round-trip precision."""
    path = Path(path)
    lines = []
    if c.name:
        lines.append(f"# name: {c.name}")
    lines.append(f"{c.dimension} {c.size}")
    lines.append("labeled" if c.is_labeled else "unlabeled")
    for row, point in enumerate(c.points):
        coords = " ".join(f"{value:.17g}" for value in point)
        if c.is_labeled:
            lines.append(f"{c.labels[row]} {coords}")
        else:
            lines.append(coords)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def find_corpus_file(name, root=None):
    """Path of a corpus format by name, or None when absent."""
    root = Path(root) if root is not None else corpus_root()
    for suffix in CORPUS_SUFFIXES:
        candidate = root / f"{name}{suffix}"
        if candidate.exists():
            return candidate
    return None


def list_corpus(names: Sequence[str] = RESERVED_FORMATS, root=None):
    """Map each reserved format name to its file path (None if absent)."""
    found = {name: find_corpus_file(name, root) for name in names}
    missing = [name for name, path in found.items() if path is None]
    if missing:
        logger.info("Corpus formats not present: %s", ", ".join(missing))
    return found
