"""Bony and structure paraproducts, sharp remainders and the structure condition.

A structure paraproduct ``P(F, Gamma^alpha)`` is assembled from the separable
kernel of the model: polynomial terms integrate to zero against ``Psi^j`` for
``j >= 0`` and are dropped, every separated term ``a(u) c(v)`` becomes a
Bony-type sum ``sum_j S_{j-1}(F^e a) Delta_j c``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .grading import as_fraction, factorial, multiindex_weight
from .lpanalysis import (
    DyadicPartition,
    GridField,
    check_spectral_annulus,
    derivative_symbol,
    lp_block,
    lp_low,
)
from .models import ModelError, ModelInstance, ModelledField, PolyTerm


class ParaproductError(ValueError):
    """Raised on inconsistent inputs to paraproduct routines."""


@dataclass
class ParaproductTermLog:
    """Per-scale contributions of a paraproduct.

    ``terms[i]`` is the contribution at scale ``scales[i]`` (a GridField with
    the same channels as the result); ``sups`` and ``leakage`` hold its sample
    sup-norm and relative spectral leakage at ``margin``.
    """

    scales: List[int] = field(default_factory=list)
    terms: List[GridField] = field(default_factory=list)
    sups: List[float] = field(default_factory=list)
    leakage: List[float] = field(default_factory=list)
    margin: int = 0
    labels: List[str] = field(default_factory=list)

    def total(self, like: GridField) -> GridField:
        out = np.zeros_like(like.samples)
        for t in self.terms:
            out = out + t.samples
        return GridField(like.spec, out)

    def to_csv(self, path_or_buffer=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "j", "sup", "leakage", "margin"])
        for lab, j, sup, leak in zip(self.labels, self.scales, self.sups, self.leakage):
            w.writerow([lab, j, repr(sup), repr(leak), self.margin])
        text = buf.getvalue()
        if path_or_buffer is not None:
            if isinstance(path_or_buffer, str):
                with open(path_or_buffer, "w", encoding="utf-8") as fh:
                    fh.write(text)
            else:
                path_or_buffer.write(text)
        return text


def _same_grid(*fields: GridField):
    spec = fields[0].spec
    for f in fields[1:]:
        if f.spec != spec:
            raise ParaproductError("fields live on different grids")


def _para_sum(f: GridField, g: GridField, P: DyadicPartition, log: Optional[ParaproductTermLog],
              label: str = "") -> GridField:
    """``sum_{j=1}^{J_max} S_{j-1} f * Delta_j g`` for scalar ``g`` and multi-channel ``f``."""
    out = np.zeros(f.samples.shape)
    margin = P.margin()
    for j in range(1, P.J_max + 1):
        term = lp_low(f, j - 1, P).samples * lp_block(g, j, P).samples
        out += term
        if log is not None:
            tf = GridField(f.spec, term)
            log.scales.append(j)
            log.terms.append(tf)
            log.sups.append(tf.sup())
            log.leakage.append(check_spectral_annulus(tf, j, margin, P))
            log.labels.append(label)
            log.margin = margin
    return GridField(f.spec, out)


def bony_para(f: GridField, g: GridField, P: DyadicPartition, log: Optional[ParaproductTermLog] = None) -> GridField:
    """``f < g = sum_{j=1}^{J_max} S_{j-1} f * Delta_j g``."""
    _same_grid(f, g, GridField(P.spec, np.zeros(P.spec.N)))
    if g.channels != 1:
        raise ParaproductError("the high-frequency factor must be scalar")
    return _para_sum(f, g, P, log, "bony")


def structure_para(F: ModelledField, model: ModelInstance, alpha, P: DyadicPartition,
                   log: Optional[ParaproductTermLog] = None) -> GridField:
    """``P(F, Gamma^alpha)`` with one channel per symbol of sector ``alpha``."""
    a = as_fraction(alpha)
    space = model.space
    if F.space != space:
        raise ParaproductError("modelled field and model use different model spaces")
    model.check_field_spec(F.spec)
    if F.spec != P.spec:
        raise ParaproductError("field and partition live on different grids")
    targets = space.sectors.get(a)
    if targets is None:
        raise ParaproductError(f"{a} is not a homogeneity of the model")
    out = np.zeros((len(targets),) + F.spec.N)
    for ti, tgt in enumerate(targets):
        for src, term in model.kernel.sep_terms(tgt):
            if space.homogeneity[src] <= a:
                raise ModelError(f"separated term ({tgt}, {src}) does not lower homogeneity")
            low = F.component(src)
            if term.a is not None:
                low = low * term.a
            out[ti] += term.coef * _para_sum(low, term.c, P, log, f"{tgt}<-{src}").samples[0]
    return GridField(F.spec, out)


def sharp_remainder(F: ModelledField, model: ModelInstance, gamma, P: DyadicPartition) -> Dict[Fraction, GridField]:
    """``F^{sharp, alpha} = F^alpha - P(F, Gamma^alpha)`` for every sector below gamma."""
    g = as_fraction(gamma)
    out = {}
    for a in model.space.homogeneities:
        if a < g:
            out[a] = F.sector(a) - structure_para(F, model, a, P)
    return out


# brute-force oracle -------------------------------------------------------------------


def _window_offsets(N: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Offsets ``a / N`` for ``a = -N/2 .. N/2`` per axis with half weights at both ends."""
    grids, weights = [], []
    for n in N:
        a = np.arange(-n // 2, n // 2 + 1)
        w = np.ones(a.size)
        w[0] = w[-1] = 0.5
        grids.append(a)
        weights.append(w)
    mesh = np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, len(N))
    wmesh = np.prod(np.stack(np.meshgrid(*weights, indexing="ij"), axis=-1).reshape(-1, len(N)), axis=1)
    return mesh, wmesh


def real_space_kernel(P: DyadicPartition, multiplier: np.ndarray) -> np.ndarray:
    """Periodic lattice kernel ``K`` with ``(1/|N|) sum_u K(x-u) f(u) = (m f)(x)``."""
    return np.real(np.fft.ifftn(multiplier)) * P.spec.size


def structure_para_bruteforce(F: ModelledField, model: ModelInstance, alpha, P: DyadicPartition) -> GridField:
    """Direct double quadrature of ``sum_j int int Psi^{<j-1}_{x-u} Psi^j_{x-v} Gamma^alpha_{vu} F_u``.

    Each of ``u`` and ``v`` ranges over a window of lattice points centred at
    ``x`` with half weights on the boundary, so the unwrapped displacement
    ``v - u`` enters the model. Intended for small grids (cost grows like
    ``|N|^3``).
    """
    a = as_fraction(alpha)
    spec = F.spec
    space = model.space
    rows = space.sector_slice(a)
    offs, w = _window_offsets(spec.N)
    N = np.asarray(spec.N)
    nw = offs.shape[0]
    ku_all = []
    kv_all = []
    for j in range(1, P.J_max + 1):
        K_low = real_space_kernel(P, P.low_pass(j - 1))
        K_hi = real_space_kernel(P, P.block(j))
        # kernels evaluated at x - u = -offset
        idx = tuple(((-offs) % N).T)
        ku_all.append(K_low[idx] * w / spec.size)
        kv_all.append(K_hi[idx] * w / spec.size)
    Ku = np.array(ku_all)
    Kv = np.array(kv_all)
    out = np.zeros((len(rows), spec.size))
    xs = np.stack(np.meshgrid(*[np.arange(n) for n in spec.N], indexing="ij"), axis=-1).reshape(-1, spec.d)
    flat = F.field.samples.reshape(space.dim, -1)
    for p, xi in enumerate(xs):
        u = (xi + offs) / N
        Fu = flat[:, np.ravel_multi_index(tuple(((xi + offs) % N).T), spec.N)]  # (D, nw)
        uu = np.repeat(u, nw, axis=0)
        vv = np.tile(u, (nw, 1))
        mats = model.gamma_batch(uu, vv)[:, rows, :]  # (nw*nw, R, D)
        G = np.einsum("prd,pd->pr", mats, np.repeat(Fu.T, nw, axis=0)).reshape(nw, nw, len(rows))
        out[:, p] = kernels.window_bilinear_sum(Ku, Kv, np.ascontiguousarray(G))
    return GridField(spec, out.reshape((len(rows),) + spec.N))


# structure condition -----------------------------------------------------------------


def _check_residual_args(model: ModelInstance, alpha, k, N: int, P: DyadicPartition):
    a = as_fraction(alpha)
    if a not in model.space.sectors:
        raise ParaproductError(f"{a} is not a homogeneity of the model")
    if a >= model.gamma:
        raise ParaproductError(f"sector {a} is not below gamma = {model.gamma}")
    if multiindex_weight(k, model.s) >= model.gamma - a:
        raise ParaproductError(f"|k|_s = {multiindex_weight(k, model.s)} is not below gamma - alpha = {model.gamma - a}")
    if not (0 <= N <= P.J_max):
        raise ParaproductError(f"scale N = {N} outside [0, {P.J_max}]")
    return a


def structure_residual_field(F: ModelledField, model: ModelInstance, alpha, k: Sequence[int], N: int,
                             P: DyadicPartition) -> GridField:
    """``x -> int d^k Psi^{<N}_{x-v} (F^alpha_v - Gamma^alpha_{vx} F_x) dv`` on the whole grid.

    Uses ``int d^k Psi^{<N}_{x-v} (v-x)^l dv = k! delta_{kl}`` for the
    polynomial kernel terms and ``d^k S_N c`` for separated terms, which is
    exact on R^d for band-limited inputs.
    """
    a = _check_residual_args(model, alpha, k, N, P)
    k = tuple(int(v) for v in k)
    space = model.space
    mult = P.low_pass(N) * derivative_symbol(F.spec, k)
    fk = factorial(k)
    targets = space.sectors[a]
    out = np.zeros((len(targets),) + F.spec.N)
    smoothed = F.field.apply_multiplier(mult).samples
    filtered_cache: Dict[int, np.ndarray] = {}
    for ti, tgt in enumerate(targets):
        acc = smoothed[space.index[tgt]].copy()
        for (t2, src), terms in model.kernel.terms.items():
            if t2 != tgt:
                continue
            fe = F.field.samples[space.index[src]]
            for t in terms:
                if isinstance(t, PolyTerm):
                    if t.l == k:
                        val = t.coef * fk * (t.b.samples[0] if t.b is not None else 1.0)
                        acc -= fe * val
                else:
                    key = id(t.c)
                    if key not in filtered_cache:
                        filtered_cache[key] = t.c.apply_multiplier(mult).samples[0]
                    val = t.coef * filtered_cache[key]
                    if t.a is not None:
                        val = val * t.a.samples[0]
                    acc -= fe * val
        out[ti] = acc
    return GridField(F.spec, out)


def structure_residual(F: ModelledField, model: ModelInstance, x: Sequence[int], alpha, k: Sequence[int], N: int,
                       P: DyadicPartition) -> np.ndarray:
    """Residual vector (in sector ``alpha``) at grid index ``x``."""
    R = structure_residual_field(F, model, alpha, k, N, P)
    return R.samples[(slice(None),) + tuple(int(i) for i in x)]


def structure_residual_quadrature(F: ModelledField, model: ModelInstance, x: Sequence[int], alpha,
                                  k: Sequence[int], N: int, P: DyadicPartition) -> np.ndarray:
    """Grid-quadrature oracle for the residual at grid index ``x``.

    Sums ``d^k K^{<N}(x - v) (F^alpha_v - Gamma^alpha_{vx} F_x)`` over a window
    of lattice points centred at ``x``. Agrees with
    :func:`structure_residual_field` exactly for ``k = 0`` when polynomial
    kernel terms have degree at most one; otherwise only as the kernel decays
    within the window.
    """
    a = _check_residual_args(model, alpha, k, N, P)
    spec = F.spec
    space = model.space
    rows = space.sector_slice(a)
    offs, w = _window_offsets(spec.N)
    Nv = np.asarray(spec.N)
    xi = np.asarray(x, dtype=np.int64)
    K = np.real(np.fft.ifftn(P.low_pass(N) * derivative_symbol(spec, k))) * spec.size
    Kx = K[tuple(((-offs) % Nv).T)] * w / spec.size
    flat = F.field.samples.reshape(space.dim, -1)
    v_idx = np.ravel_multi_index(tuple(((xi + offs) % Nv).T), spec.N)
    x_idx = np.ravel_multi_index(tuple((xi % Nv)[:, None]), spec.N)[0]
    u = np.repeat((xi / Nv)[None], offs.shape[0], axis=0)
    v = (xi + offs) / Nv
    mats = model.gamma_batch(u, v)[:, rows, :]
    diff = flat[rows][:, v_idx].T - np.einsum("prd,d->pr", mats, flat[:, x_idx])
    return np.einsum("p,pr->r", Kx, diff)


@dataclass
class ResidualCurve:
    """Max-over-points residual norms per scale and the fitted decay exponent."""

    scales: List[int]
    values: List[float]
    usable: List[bool]
    exponent: Optional[float]
    fit_residual: Optional[float]
    alpha: str
    k: Tuple[int, ...]
    expected: Optional[float] = None
    witness: List[Optional[Tuple[int, ...]]] = field(default_factory=list)

    @property
    def claimed(self) -> bool:
        return self.exponent is not None

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "k": list(self.k),
            "scales": self.scales,
            "values": self.values,
            "usable": self.usable,
            "exponent": self.exponent,
            "fit_residual": self.fit_residual,
            "expected": self.expected,
        }

    def to_csv(self, path_or_buffer=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "k", "N", "residual", "usable"])
        kk = "(" + ",".join(map(str, self.k)) + ")"
        for n, v, u in zip(self.scales, self.values, self.usable):
            w.writerow([self.alpha, kk, n, repr(v), int(u)])
        text = buf.getvalue()
        if path_or_buffer is not None:
            if isinstance(path_or_buffer, str):
                with open(path_or_buffer, "w", encoding="utf-8") as fh:
                    fh.write(text)
            else:
                path_or_buffer.write(text)
        return text


MIN_FIT_POINTS = 4


def fit_decay(scales: Sequence[int], values: Sequence[float], floor: float) -> Tuple[Optional[float], Optional[float], List[bool]]:
    """Least-squares slope of ``-log2(value)`` against ``N`` over values above ``floor``."""
    scales = np.asarray(scales, dtype=float)
    values = np.asarray(values, dtype=float)
    usable = values > floor
    if usable.sum() < MIN_FIT_POINTS:
        return None, None, usable.tolist()
    x = scales[usable]
    y = np.log2(values[usable])
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    rms = float(np.sqrt(res[0] / x.size)) if res.size else 0.0
    return float(-coef[0]), rms, usable.tolist()


def residual_curve(F: ModelledField, model: ModelInstance, points: Sequence[Sequence[int]], alpha, k: Sequence[int],
                   P: DyadicPartition, N_min: int = 3, N_max: Optional[int] = None,
                   rel_floor: float = 1e-11) -> ResidualCurve:
    """Residual norm ``max_x ||R_N(x)||`` for ``N = N_min .. N_max`` and its decay exponent.

    Scales where the residual has dropped to the round-off floor (relative
    to the sup of ``F``) carry no rate information and are excluded from the
    fit; an exponent is only claimed with at least four usable scales.
    """
    a = as_fraction(alpha)
    N_max = P.J_max if N_max is None else N_max
    scales = list(range(N_min, N_max + 1))
    if len(scales) < MIN_FIT_POINTS:
        raise ParaproductError(f"need at least {MIN_FIT_POINTS} scales, got {len(scales)}")
    pts = np.asarray(points, dtype=np.int64)
    idx = tuple(pts.T)
    vals, wit = [], []
    for N in scales:
        R = structure_residual_field(F, model, a, k, N, P).samples
        norms = np.sum(np.abs(R[(slice(None),) + idx]), axis=0)
        p = int(np.argmax(norms))
        vals.append(float(norms[p]))
        wit.append(tuple(int(i) for i in pts[p]))
    scale = max(F.field.sup(), 1e-300) * max(1.0, (2 * math.pi) ** sum(k) * 2.0 ** (N_max * multiindex_weight(k, model.s)))
    exponent, rms, usable = fit_decay(scales, vals, rel_floor * scale)
    expected = float(model.gamma - a - multiindex_weight(k, model.s))
    return ResidualCurve(scales, vals, usable, exponent, rms, str(a), tuple(int(v) for v in k), expected, wit)


def admissible_residual_pairs(model: ModelInstance) -> List[Tuple[Fraction, Tuple[int, ...]]]:
    """All ``(alpha, k)`` with ``alpha < gamma`` and ``|k|_s < gamma - alpha``."""
    from .grading import index_set_below

    out = []
    for a in model.space.homogeneities:
        if a < model.gamma:
            for k in index_set_below(model.gamma - a, model.s):
                out.append((a, k))
    return out
