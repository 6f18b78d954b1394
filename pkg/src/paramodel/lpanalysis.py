"""Anisotropic dyadic partitions of unity and Littlewood-Paley transforms on the torus.

Conventions
-----------
* The domain is the unit torus ``[0, 1)^d`` sampled on a uniform lattice with
  ``N_i`` points per axis (powers of two).
* The forward DFT is unnormalized, the inverse carries ``1 / prod(N)``, and the
  frequency lattice is ``Z^d`` intersected with ``[-N_i/2, N_i/2)``.
* Fields carry a leading channel axis: ``samples.shape == (channels, *N)``.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import scipy.fft as sfft

from .grading import GradingError, ScalingVector, factorial
from . import kernels

PLATEAU_EPS = 0.05
WORKERS_ENV = "PARAMODEL_WORKERS"


def fft_workers() -> int:
    """Worker count for scipy.fft, overridable through ``PARAMODEL_WORKERS``."""
    value = os.environ.get(WORKERS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise GradingError(f"{WORKERS_ENV} must be an integer, got {value!r}")
    return 1


class LPError(ValueError):
    """Raised on invalid grids, scales or partition inputs."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic lattice on the unit torus with an anisotropic scaling."""

    N: Tuple[int, ...]
    s: ScalingVector

    def __post_init__(self):
        N = tuple(int(n) for n in self.N)
        s = self.s if isinstance(self.s, ScalingVector) else ScalingVector(tuple(self.s))
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "s", s)
        if len(N) != s.d:
            raise LPError(f"grid has {len(N)} axes but scaling has {s.d}")
        for n in N:
            if n < 8 or n & (n - 1):
                raise LPError(f"grid sizes must be powers of two >= 8, got {N}")

    @property
    def d(self) -> int:
        return len(self.N)

    @property
    def size(self) -> int:
        return math.prod(self.N)

    @cached_property
    def axis_freqs(self) -> Tuple[np.ndarray, ...]:
        """Integer frequencies per axis in FFT order."""
        return tuple(np.fft.fftfreq(n, 1.0 / n) for n in self.N)

    @cached_property
    def axis_points(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.arange(n) / n for n in self.N)

    def freq_mesh(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axis_freqs, indexing="ij"))

    def point(self, index: Sequence[int]) -> np.ndarray:
        return np.array([i / n for i, n in zip(index, self.N)], dtype=float)

    def to_json(self) -> dict:
        return {"N": list(self.N), "s": self.s.to_list()}

    @classmethod
    def from_json(cls, data: dict) -> "GridSpec":
        return cls(tuple(data["N"]), ScalingVector(tuple(data["s"])))


class GridField:
    """Multi-channel samples on a :class:`GridSpec` with a lazily cached spectrum.

    Parameters
    ----------
    spec : GridSpec
    samples : array of shape ``(channels, *spec.N)`` or ``spec.N`` for one channel.
    spectrum : optional precomputed forward DFT of ``samples``.
    """

    def __init__(self, spec: GridSpec, samples: np.ndarray, spectrum: Optional[np.ndarray] = None):
        samples = np.asarray(samples)
        if samples.shape == spec.N:
            samples = samples[None]
        if samples.shape[1:] != spec.N:
            raise LPError(f"samples of shape {samples.shape} do not fit grid {spec.N}")
        if not np.iscomplexobj(samples):
            samples = samples.astype(float, copy=False)
        samples = np.array(samples, copy=True)
        samples.setflags(write=False)
        self.spec = spec
        self.samples = samples
        self._spectrum = None
        if spectrum is not None:
            spectrum = np.array(spectrum, dtype=complex, copy=True)
            spectrum.setflags(write=False)
            self._spectrum = spectrum

    @classmethod
    def from_spectrum(cls, spec: GridSpec, spectrum: np.ndarray, real: bool = True) -> "GridField":
        spectrum = np.asarray(spectrum, dtype=complex)
        if spectrum.shape == spec.N:
            spectrum = spectrum[None]
        axes = tuple(range(1, spec.d + 1))
        samples = sfft.ifftn(spectrum, axes=axes, workers=fft_workers())
        if real:
            samples = samples.real
        return cls(spec, samples, spectrum if not real else None)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            axes = tuple(range(1, self.spec.d + 1))
            spectrum = sfft.fftn(self.samples, axes=axes, workers=fft_workers())
            spectrum.setflags(write=False)
            self._spectrum = spectrum
        return self._spectrum

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.samples)

    def channel(self, i: int) -> "GridField":
        return GridField(self.spec, self.samples[i : i + 1])

    def with_samples(self, samples: np.ndarray) -> "GridField":
        return GridField(self.spec, samples)

    def apply_multiplier(self, multiplier: np.ndarray) -> "GridField":
        """Inverse DFT of ``multiplier * spectrum`` (broadcast over channels)."""
        spectrum = self.spectrum * multiplier
        axes = tuple(range(1, self.spec.d + 1))
        out = sfft.ifftn(spectrum, axes=axes, workers=fft_workers())
        if self.is_real:
            out = out.real
        return GridField(self.spec, out)

    def sup(self) -> float:
        """Sample maximum of the per-point l1 norm over channels."""
        return float(np.max(np.sum(np.abs(self.samples), axis=0)))

    def __add__(self, other: "GridField") -> "GridField":
        _check_same(self, other)
        return GridField(self.spec, self.samples + other.samples)

    def __sub__(self, other: "GridField") -> "GridField":
        _check_same(self, other)
        return GridField(self.spec, self.samples - other.samples)

    def __mul__(self, c) -> "GridField":
        if isinstance(c, GridField):
            if c.spec != self.spec:
                raise LPError("fields live on different grids")
            return GridField(self.spec, self.samples * c.samples)
        return GridField(self.spec, self.samples * c)

    __rmul__ = __mul__

    def __neg__(self) -> "GridField":
        return GridField(self.spec, -self.samples)

    def __repr__(self):
        return f"GridField(N={self.spec.N}, s={self.spec.s.s}, channels={self.channels})"


def _check_same(a: GridField, b: GridField):
    if a.spec != b.spec:
        raise LPError("fields live on different grids")
    if a.channels != b.channels:
        raise LPError(f"channel mismatch: {a.channels} vs {b.channels}")


def constant_field(spec: GridSpec, value: float = 1.0, channels: int = 1) -> GridField:
    return GridField(spec, np.full((channels,) + spec.N, float(value)))


def field_from_function(spec: GridSpec, fn) -> GridField:
    """Sample ``fn(*coords)`` on the lattice (coordinates in ``[0, 1)``)."""
    mesh = np.meshgrid(*spec.axis_points, indexing="ij")
    return GridField(spec, np.asarray(fn(*mesh), dtype=float))


def smooth_step(tau: np.ndarray) -> np.ndarray:
    """C-infinity step: 1 for tau <= 0, 0 for tau >= 1, via ``exp(-1/u)``."""
    tau = np.asarray(tau, dtype=float)
    a = np.clip(1.0 - tau, 0.0, 1.0)
    b = np.clip(tau, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        ea = np.where(a > 0, np.exp(-1.0 / np.where(a > 0, a, 1.0)), 0.0)
        eb = np.where(b > 0, np.exp(-1.0 / np.where(b > 0, b, 1.0)), 0.0)
    return ea / (ea + eb)


def plateau_1d(t: np.ndarray, s_i: int, eps: float = PLATEAU_EPS) -> np.ndarray:
    """One-dimensional factor of the base multiplier.

    Equal to 1 for ``|t| <= 1 + eps`` and 0 for ``|t| >= (1 - eps) 2^s_i``.
    """
    lo = 1.0 + eps
    hi = (1.0 - eps) * 2.0**s_i
    if hi <= lo:
        raise LPError(f"plateau margin eps={eps} leaves no transition band for s_i={s_i}")
    return smooth_step((np.abs(np.asarray(t, dtype=float)) - lo) / (hi - lo))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[-half_i, half_i]`` centred at the origin."""

    half: Tuple[float, ...]

    def contains(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return np.all(np.abs(xi) <= np.asarray(self.half), axis=-1)


class DyadicPartition:
    """Sampled multipliers ``phi_j`` for ``j = -1 .. J_max`` on a grid's frequency lattice.

    ``phi[j + 1]`` holds ``phi_j``. Low-pass multipliers ``phi_{-1}(2^{-js} xi)``
    are stored as ``low[j + 1]`` for ``j = -1 .. J_max + 1`` (``low[0]`` is the
    empty sum, identically zero), so that ``phi_j = low[j + 2] - low[j + 1]``
    telescopes exactly in construction.
    """

    def __init__(self, spec: GridSpec, eps: float = PLATEAU_EPS):
        self.spec = spec
        self.eps = eps
        s = spec.s
        # largest j with box 2^{(j+1)s}[-1,1]^d inside the Nyquist box
        J = min(int(math.floor(math.log2(n / 2) / si)) - 1 for n, si in zip(spec.N, s.s))
        if J < 0:
            raise LPError(f"grid {spec.N} is too small to resolve the first annulus for s={s.s}")
        self.J_max = J
        low = [np.zeros(spec.N)]
        for j in range(0, J + 2):
            low.append(self.low_multiplier_at(spec.freq_mesh(), j))
        phi = [low[1]]
        for j in range(0, J + 1):
            phi.append(low[j + 2] - low[j + 1])
        self.low = np.stack(low)
        self.phi = np.stack(phi)
        self.low.setflags(write=False)
        self.phi.setflags(write=False)
        self._plateau_cache: Dict[Tuple[str, int, int], float] = {}

    # continuous evaluation ---------------------------------------------------
    def base_at(self, xi: Sequence[np.ndarray]) -> np.ndarray:
        """``phi_{-1}`` at frequencies given as a tuple of coordinate arrays."""
        out = None
        for x_i, s_i in zip(xi, self.spec.s.s):
            f = plateau_1d(x_i, s_i, self.eps)
            out = f if out is None else out * f
        return out

    def low_multiplier_at(self, xi: Sequence[np.ndarray], j: int) -> np.ndarray:
        """Multiplier of ``S_j``: ``phi_{-1}(2^{-js} xi)``; zero for ``j = -1``."""
        if j < 0:
            return np.zeros(np.broadcast(*xi).shape)
        scaled = [np.asarray(x_i, dtype=float) * 2.0 ** (-j * s_i) for x_i, s_i in zip(xi, self.spec.s.s)]
        return self.base_at(scaled)

    def block_multiplier_at(self, xi: Sequence[np.ndarray], j: int) -> np.ndarray:
        """``phi_j`` at arbitrary frequencies."""
        if j == -1:
            return self.low_multiplier_at(xi, 0)
        return self.low_multiplier_at(xi, j + 1) - self.low_multiplier_at(xi, j)

    # lattice accessors ---------------------------------------------------------
    def block(self, j: int) -> np.ndarray:
        self._check_scale(j, -1, self.J_max)
        return self.phi[j + 1]

    def low_pass(self, j: int) -> np.ndarray:
        """Lattice multiplier of ``S_j`` for ``-1 <= j <= J_max + 1``."""
        self._check_scale(j, -1, self.J_max + 1)
        return self.low[j + 1]

    def plateau_residual(self, kind: str, j: int, samples_per_axis: int = 33) -> float:
        """Max deviation of ``phi_j`` from 0 (``"single"``) or of the low-pass from 1 (``"low"``) on ``2^{js}[-1, 1]^d``.

        Results are memoised per argument tuple; concurrent callers at worst
        compute the same value twice.
        """
        key = (kind, j, samples_per_axis)
        cached = self._plateau_cache.get(key)
        if cached is not None:
            return cached
        axes = [np.linspace(-1.0, 1.0, samples_per_axis) * 2.0 ** (j * si) for si in self.spec.s.s]
        mesh = np.meshgrid(*axes, indexing="ij")
        if kind == "single":
            value = float(np.max(np.abs(self.block_multiplier_at(mesh, j))))
        else:
            value = float(np.max(np.abs(self.low_multiplier_at(mesh, j) - 1.0)))
        self._plateau_cache[key] = value
        return value

    def box(self, j: int) -> Box:
        """``B_j = 2^{(j+1)s} [-1, 1]^d``; ``B_{-2}`` is empty (half-widths -1)."""
        if j <= -2:
            return Box(tuple(-1.0 for _ in self.spec.s.s))
        return Box(tuple(2.0 ** ((j + 1) * si) for si in self.spec.s.s))

    def band_box(self) -> Box:
        """Band-limitation contract: spectra must lie inside ``B_{J_max - 1}``."""
        return self.box(self.J_max - 1)

    def _check_scale(self, j: int, lo: int, hi: int):
        if not (lo <= j <= hi):
            raise LPError(f"scale {j} outside [{lo}, {hi}]")

    @property
    def scales(self) -> range:
        return range(-1, self.J_max + 1)

    def owner(self, m: Sequence[int]) -> Optional[int]:
        """The unique block with ``phi_j(m) = 1`` at lattice frequency ``m``, if any."""
        xi = tuple(np.array([float(v)]) for v in m)
        for j in self.scales:
            if self.block_multiplier_at(xi, j)[0] == 1.0:
                return j
        return None

    def margin(self) -> int:
        """Geometric margin for products ``S_{j-1} a * Delta_j c``.

        The product spectrum avoids ``B_{j-1-margin}`` because each coordinate
        of a point outside the plateau of ``phi_j`` exceeds ``(1+eps)2^{js_i}``
        while the low-pass factor stays below ``(1-eps)2^{js_i}``; it stays
        inside ``B_{j+1+margin}`` by the sum of the two outer radii.
        """
        eps = self.eps
        inner = max(int(math.ceil(math.log2(1.0 / (2.0 * eps)) / si)) for si in self.spec.s.s)
        outer = 0
        while any((1 - eps) * (2.0 ** (-si) + 1.0) > 2.0 ** (outer * si) for si in self.spec.s.s):
            outer += 1
        return max(inner, outer)


def build_partition(spec: GridSpec, eps: float = PLATEAU_EPS) -> DyadicPartition:
    return DyadicPartition(spec, eps)


def lp_block(f: GridField, j: int, P: DyadicPartition) -> GridField:
    """``Delta_j f``."""
    _check_partition(f, P)
    return f.apply_multiplier(P.block(j))


def lp_low(f: GridField, j: int, P: DyadicPartition) -> GridField:
    """``S_j f = sum_{-1 <= i < j} Delta_i f``."""
    _check_partition(f, P)
    return f.apply_multiplier(P.low_pass(j))


def _check_partition(f: GridField, P: DyadicPartition):
    if f.spec != P.spec:
        raise LPError("field and partition live on different grids")


def derivative_symbol(spec: GridSpec, k: Sequence[int]) -> np.ndarray:
    """Lattice samples of ``(2 pi i xi)^k``."""
    if len(k) != spec.d:
        raise LPError(f"multi-index {tuple(k)} does not match dimension {spec.d}")
    out = np.ones(spec.N, dtype=complex)
    for axis, (ki, freqs) in enumerate(zip(k, spec.axis_freqs)):
        if ki:
            shape = [1] * spec.d
            shape[axis] = -1
            out = out * ((2j * np.pi * freqs) ** ki).reshape(shape)
    return out


def spectral_derivative(f: GridField, k: Sequence[int]) -> GridField:
    """``partial^k f`` via the multiplier ``(2 pi i xi)^k``."""
    if not any(k):
        return f
    return f.apply_multiplier(derivative_symbol(f.spec, k))


def is_band_limited(f: GridField, P: DyadicPartition, tol: float = 0.0) -> bool:
    """True if the spectrum vanishes (up to ``tol`` relative) outside ``B_{J_max-1}``."""
    spec = np.abs(f.spectrum)
    peak = spec.max()
    if peak == 0:
        return True
    inside = P.band_box().contains(np.stack(f.spec.freq_mesh(), axis=-1))
    return bool(np.max(spec[:, ~inside], initial=0.0) <= tol * peak)


@dataclass(frozen=True)
class MomentResult:
    value: float
    residual: float


def kernel_moment(P: DyadicPartition, kind: str, k: Sequence[int], l: Sequence[int], j: int = 0,
                  samples_per_axis: int = 33) -> MomentResult:
    """``int partial^k Psi(u) u^l du`` for ``Psi = Psi^j`` or ``Psi^{<j}``.

    The moment equals, up to sign and ``(2 pi i)`` factors, derivative data of
    ``(2 pi i xi)^k m(xi)`` at the origin; it is exact once the multiplier
    ``m`` is verified to be constant near zero. The plateau is checked on a
    ``samples_per_axis``-point grid of the box ``2^{js}[-1, 1]^d``.
    """
    if kind not in ("single", "low"):
        raise LPError(f"kind must be 'single' or 'low', got {kind!r}")
    d = P.spec.d
    if len(k) != d or len(l) != d:
        raise LPError("multi-index dimension mismatch")
    if kind == "single" and j < 0:
        raise LPError("single-block moments need j >= 0")
    if kind == "low" and j < 0:
        raise LPError("low-pass moments need j >= 0")
    residual = P.plateau_residual(kind, j, samples_per_axis)
    if residual > 1e-12:
        raise LPError(f"multiplier is not flat near the origin (residual {residual:.3e})")
    if kind == "single":
        return MomentResult(0.0, residual)
    value = float(factorial(k)) if tuple(k) == tuple(l) else 0.0
    return MomentResult(value, residual)


def check_spectral_annulus(f: GridField, j: int, margin: int, P: DyadicPartition) -> float:
    """Relative spectral mass outside the annulus ``B_{j+1+margin} minus B_{j-1-margin}``."""
    if j < 0:
        raise LPError("annulus check needs j >= 0")
    spec = np.abs(f.spectrum)
    peak = float(spec.max())
    if peak == 0.0:
        return 0.0
    xi = np.stack(f.spec.freq_mesh(), axis=-1)
    outer = P.box(j + 1 + margin).contains(xi)
    inner = P.box(j - 1 - margin).contains(xi)
    outside = ~outer | inner
    return float(np.max(spec[:, outside], initial=0.0) / peak)


def evaluate_at(f: GridField, points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolation of every channel at off-grid points.

    Returns an array of shape ``(channels, n_points)``; exact for band-limited
    fields (the Nyquist row, if populated, is taken at frequency ``-N/2``).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != f.spec.d:
        raise LPError("point dimension mismatch")
    scale = 1.0 / f.spec.size
    out = []
    for c in range(f.channels):
        vals = kernels.trig_eval(np.ascontiguousarray(f.spectrum[c]), f.spec.axis_freqs, points) * scale
        out.append(vals.real if f.is_real else vals)
    return np.array(out)


# binary field IO ---------------------------------------------------------------

FIELD_FORMAT = "paramodel-field/1"


def write_field(path_or_buffer, f: GridField) -> None:
    """Write a JSON header line followed by little-endian float64 samples (row-major)."""
    if not f.is_real:
        raise LPError("only real fields can be serialized")
    header = {
        "format": FIELD_FORMAT,
        "d": f.spec.d,
        "N": list(f.spec.N),
        "s": f.spec.s.to_list(),
        "channels": f.channels,
        "dtype": "<f8",
        "layout": "row-major",
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    payload += np.ascontiguousarray(f.samples, dtype="<f8").tobytes(order="C")
    if isinstance(path_or_buffer, (str, os.PathLike)):
        with open(path_or_buffer, "wb") as fh:
            fh.write(payload)
    else:
        path_or_buffer.write(payload)


def read_field(path_or_buffer) -> GridField:
    if isinstance(path_or_buffer, (str, os.PathLike)):
        with open(path_or_buffer, "rb") as fh:
            data = fh.read()
    else:
        data = path_or_buffer.read()
    newline = data.index(b"\n")
    header = json.loads(data[:newline].decode("utf-8"))
    if header.get("format") != FIELD_FORMAT:
        raise LPError(f"unrecognized field format {header.get('format')!r}")
    spec = GridSpec(tuple(header["N"]), ScalingVector(tuple(header["s"])))
    shape = (int(header["channels"]),) + spec.N
    samples = np.frombuffer(data[newline + 1 :], dtype="<f8")
    if samples.size != math.prod(shape):
        raise LPError("field payload size does not match header")
    return GridField(spec, samples.reshape(shape).astype(float))


def lattice_indices(spec: GridSpec, points: np.ndarray, tol: float = 1e-9) -> Optional[np.ndarray]:
    """Flat lattice indices of ``points`` (taken mod 1) if all lie on the grid, else None."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    N = np.asarray(spec.N, dtype=float)
    scaled = points * N
    nearest = np.round(scaled)
    if np.any(np.abs(scaled - nearest) > tol):
        return None
    idx = np.mod(nearest.astype(np.int64), np.asarray(spec.N, dtype=np.int64))
    return np.ravel_multi_index(tuple(idx.T), spec.N)


def sample_at(f: GridField, points: np.ndarray) -> np.ndarray:
    """Values of every channel at ``points``, shape ``(channels, n_points)``.

    Lattice points are read directly; anything else goes through
    trigonometric interpolation.
    """
    flat = lattice_indices(f.spec, points)
    if flat is not None:
        return f.samples.reshape(f.channels, -1)[:, flat]
    return evaluate_at(f, points)
