"""Besov, Hoelder, modelled-distribution and paracontrolled norms on grid fields.

Suprema over R^d become maxima over lattice samples; suprema over pairs of
points become maxima over pairs drawn by a seeded :class:`PairSampler`.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .grading import (
    aniso_norm,
    as_fraction,
    factorial,
    first_nonzero,
    index_set_below,
    index_set_boundary,
    multiindex_weight,
)
from .lpanalysis import (
    DyadicPartition,
    GridField,
    GridSpec,
    lp_block,
    sample_at,
    spectral_derivative,
)


class NormError(ValueError):
    """Raised on invalid norm parameters."""


# reports ------------------------------------------------------------------------------


@dataclass
class NormReport:
    """Norm value with its argmax witness and per-component breakdown.

    A norm with several additive parts (e.g. a sup term plus an increment
    term) lists each part's entries under ``parts[name]``; ``value`` is the
    sum over parts of the largest entry in each, and for single-part norms
    simply the largest entry.
    """

    kind: str
    value: float
    witness: dict
    parts: Dict[str, Dict[str, float]]
    flags: Dict[str, object] = field(default_factory=dict)

    @property
    def breakdown(self) -> Dict[str, float]:
        out = {}
        for part, entries in self.parts.items():
            for key, v in entries.items():
                out[f"{part}:{key}"] = v
        return out

    @property
    def ok(self) -> bool:
        return bool(self.flags.get("ok", True))

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "witness": self.witness,
            "parts": self.parts,
            "flags": _jsonable(self.flags),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def to_csv(self, path_or_buffer=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["part", "component", "value"])
        for part, entries in self.parts.items():
            for key, v in entries.items():
                w.writerow([part, key, repr(v)])
        text = buf.getvalue()
        if path_or_buffer is not None:
            if isinstance(path_or_buffer, str):
                with open(path_or_buffer, "w", encoding="utf-8") as fh:
                    fh.write(text)
            else:
                path_or_buffer.write(text)
        return text


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if hasattr(obj, "to_json"):
        return obj.to_json()
    return obj


def _combine(parts: Dict[str, Dict[str, float]]) -> float:
    return float(sum(max(entries.values()) if entries else 0.0 for entries in parts.values()))


# pair sampling ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairSampler:
    """Seeded pairs ``(x, y)`` of lattice points with ``0 < ||y - x||_s <= radius``.

    ``x`` is a lattice point in ``[0, 1)^d``; ``y = x + h`` with ``h`` a
    nonzero lattice displacement kept unwrapped. Near pairs use ``M_n``
    log-uniform scales around each of ``M_a`` anchors (plus any enrichment
    anchors); far pairs are ``M_f`` pairs with uniform base points.
    """

    seed: int = 0
    M_a: int = 64
    M_n: int = 32
    M_f: int = 512
    radius: float = 1.0

    def __post_init__(self):
        if not (0 < self.radius <= 1.0):
            raise NormError("pair radius must lie in (0, 1]")

    def _displacements(self, rng, spec: GridSpec, count: int, log_uniform: bool) -> np.ndarray:
        s = np.asarray(spec.s.s, dtype=float)
        N = np.asarray(spec.N, dtype=float)
        rho_min = float(np.min((1.0 / N) ** (1.0 / s)))
        out = np.zeros((0, spec.d))
        while out.shape[0] < count:
            n = 2 * (count - out.shape[0]) + 4
            if log_uniform:
                rho = np.exp(rng.uniform(math.log(rho_min), math.log(self.radius), n))
            else:
                rho = rng.uniform(rho_min, self.radius, n)
            w = rng.dirichlet(np.ones(spec.d), n)
            sign = rng.choice([-1.0, 1.0], size=(n, spec.d))
            h = sign * (w * rho[:, None]) ** s
            h = np.round(h * N) / N
            norm = aniso_norm(h, spec.s)
            keep = (norm > 0) & (norm <= self.radius)
            out = np.vstack([out, h[keep]])
        return out[:count]

    def pairs(self, spec: GridSpec, enrich: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Return ``(x, y)`` point arrays of shape ``(P, d)``.

        ``enrich`` holds extra anchor grid indices (shape ``(m, d)``) that
        receive the same near-pair treatment as the random anchors.
        """
        rng = np.random.default_rng([self.seed, 101] + list(spec.N))
        N = np.asarray(spec.N)
        anchors = rng.integers(0, N, size=(self.M_a, spec.d))
        if enrich is not None and len(enrich):
            anchors = np.vstack([anchors, np.asarray(enrich, dtype=np.int64).reshape(-1, spec.d)])
        near_h = self._displacements(rng, spec, anchors.shape[0] * self.M_n, log_uniform=True)
        near_x = np.repeat(anchors, self.M_n, axis=0) / N
        far_x = rng.integers(0, N, size=(self.M_f, spec.d)) / N
        far_h = self._displacements(rng, spec, self.M_f, log_uniform=False)
        x = np.vstack([near_x, far_x])
        y = x + np.vstack([near_h, far_h])
        return x, y


def gradient_anchors(f: GridField, count: int) -> np.ndarray:
    """Grid indices of the ``count`` largest one-step increments (l1 over channels and axes)."""
    spec = f.spec
    total = np.zeros(spec.N)
    for axis in range(spec.d):
        diff = np.roll(f.samples, -1, axis=axis + 1) - f.samples
        total += np.sum(np.abs(diff), axis=0)
    flat = np.argsort(total.ravel(), kind="stable")[::-1][:count]
    return np.stack(np.unravel_index(flat, spec.N), axis=-1)


# Besov -------------------------------------------------------------------------------------


def besov_norm(f: GridField, gamma: float, P: DyadicPartition) -> NormReport:
    """``max_{j = -1..J_max} 2^{j gamma} ||Delta_j f||_inf`` (per-point l1 over channels)."""
    if f.spec != P.spec:
        raise NormError("field and partition live on different grids")
    g = float(gamma)
    entries = {}
    for j in P.scales:
        entries[str(j)] = 2.0 ** (j * g) * lp_block(f, j, P).sup()
    jstar = max(entries, key=lambda key: entries[key])
    return NormReport("besov", entries[jstar], {"j": int(jstar), "gamma": g}, {"blocks": entries})


def besov_block_value(f: GridField, gamma: float, P: DyadicPartition, j: int) -> float:
    """Single entry ``2^{j gamma} ||Delta_j f||_inf`` (witness re-evaluation)."""
    return 2.0 ** (j * float(gamma)) * lp_block(f, j, P).sup()


# Taylor expansions ----------------------------------------------------------------------------


def _as_points(spec: GridSpec, x) -> np.ndarray:
    """Grid indices (ints) or points (floats) to points in R^d, shape ``(P, d)``."""
    x = np.asarray(x)
    if np.issubdtype(x.dtype, np.integer):
        return np.atleast_2d(x) / np.asarray(spec.N)
    return np.atleast_2d(x.astype(float))


class DerivativeCache:
    """Spectral derivatives of one field, computed on demand."""

    def __init__(self, f: GridField):
        self.f = f
        self._cache: Dict[Tuple[int, ...], GridField] = {}

    def __call__(self, k: Sequence[int]) -> GridField:
        k = tuple(int(v) for v in k)
        if k not in self._cache:
            self._cache[k] = spectral_derivative(self.f, k)
        return self._cache[k]


def taylor_poly(f, x, h, gamma: float, derivs: Optional[DerivativeCache] = None) -> np.ndarray:
    """``T^gamma_{x;h} f = sum_{|k|_s < gamma} d^k f(x) h^k / k!``.

    ``x`` and ``h`` may be single points or stacks; returns ``(channels, P)``.
    """
    derivs = derivs or DerivativeCache(f)
    spec = f.spec
    xs = _as_points(spec, x)
    hs = np.atleast_2d(np.asarray(h, dtype=float))
    hs = np.broadcast_to(hs, xs.shape)
    out = np.zeros((f.channels, xs.shape[0]))
    for k in index_set_below(gamma, spec.s):
        vals = sample_at(derivs(k), xs)
        mono = np.prod(hs ** np.asarray(k), axis=1)
        out = out + vals * mono / factorial(k)
    return out


def taylor_remainder(f, x, h, gamma: float, method: str = "direct", nodes: int = 32,
                     derivs: Optional[DerivativeCache] = None) -> np.ndarray:
    """``f(x + h) - T^gamma_{x;h} f``.

    ``method="direct"`` subtracts the Taylor polynomial from the
    trigonometric interpolant at ``x + h``. ``method="integral"`` sums, over
    the discrete boundary ``k``, ``h^k / (k - e_m)!`` times the Gauss-Legendre
    approximation (``nodes`` points) of
    ``int_0^1 d^k f(x + v_t^k(h)) (1 - t)^{k_m - 1} dt``.
    """
    derivs = derivs or DerivativeCache(f)
    spec = f.spec
    xs = _as_points(spec, x)
    hs = np.broadcast_to(np.atleast_2d(np.asarray(h, dtype=float)), xs.shape)
    if method == "direct":
        return sample_at(f, xs + hs) - taylor_poly(f, xs, hs, gamma, derivs)
    if method != "integral":
        raise NormError(f"unknown method {method!r}")
    g = as_fraction(gamma)
    if g.denominator == 1:
        raise NormError(f"the integral form needs a non-integer gamma, got {g}")
    if g <= 0:
        return sample_at(f, xs + hs)
    t, wt = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (t + 1.0)
    wt = 0.5 * wt
    out = np.zeros((f.channels, xs.shape[0]))
    for k in index_set_boundary(g, spec.s):
        m = first_nonzero(k)
        km = k[m]
        lower = list(k)
        lower[m] -= 1
        prefac = np.prod(hs ** np.asarray(k), axis=1) / factorial(lower)
        # points x + v_t^k(h): coordinates before m take h, coordinate m takes t h_m
        base = xs.copy()
        base[:, :m] += hs[:, :m]
        pts = np.repeat(base, nodes, axis=0)
        pts[:, m] += np.tile(t, xs.shape[0]) * np.repeat(hs[:, m], nodes)
        vals = sample_at(derivs(k), pts).reshape(f.channels, xs.shape[0], nodes)
        integral = np.einsum("cpq,q->cp", vals, wt * (1.0 - t) ** (km - 1))
        out = out + prefac * integral
    return out


# Hoelder ---------------------------------------------------------------------------------------


def _check_noninteger(gamma, what: str):
    g = as_fraction(gamma)
    if g <= 0:
        raise NormError(f"{what} needs gamma > 0")
    if g.denominator == 1:
        raise NormError(f"{what} is not equivalent to the Besov norm for integer gamma = {g}; rejected")
    return g


def holder_norm(f: GridField, gamma: float, sampler: Optional[PairSampler] = None,
                enrich: int = 16) -> NormReport:
    """Anisotropic Hoelder norm with Taylor remainders.

    ``sup_l ||d^l f||_inf + sup_l sup_{pairs} |d^l f(y) - T^{gamma-|l|}_{x;y-x} d^l f| / ||y-x||_s^{gamma-|l|}``
    over ``l`` with ``|l|_s < gamma``; pairs come from ``sampler`` with extra
    anchors at the ``enrich`` largest increments of ``f``.
    """
    g = _check_noninteger(gamma, "holder_norm")
    sampler = sampler or PairSampler()
    spec = f.spec
    derivs = DerivativeCache(f)
    anchors = gradient_anchors(f, enrich) if enrich else None
    xs, ys = sampler.pairs(spec, anchors)
    hs = ys - xs
    dist = aniso_norm(hs, spec.s)
    sup_part, inc_part = {}, {}
    best_sup, best_inc = (-1.0, None), (-1.0, None)
    for l in index_set_below(g, spec.s):
        order = g - multiindex_weight(l, spec.s)
        dl = derivs(l)
        key = "(" + ",".join(map(str, l)) + ")"
        sv = dl.sup()
        sup_part[key] = sv
        if sv > best_sup[0]:
            best_sup = (sv, {"l": list(l)})
        dcache = DerivativeCache(dl)
        rem = sample_at(dl, ys) - taylor_poly(dl, xs, hs, order, dcache)
        ratios = np.sum(np.abs(rem), axis=0) / dist ** float(order)
        p = int(np.argmax(ratios))
        inc_part[key] = float(ratios[p])
        if ratios[p] > best_inc[0]:
            best_inc = (float(ratios[p]), {"l": list(l), "x": xs[p].tolist(), "y": ys[p].tolist()})
    parts = {"sup": sup_part, "increment": inc_part}
    witness = {"sup": best_sup[1], "increment": best_inc[1], "gamma": float(g)}
    return NormReport("holder", _combine(parts), witness, parts)


def holder_pair_value(f: GridField, gamma: float, l: Sequence[int], x, y) -> float:
    """Re-evaluate one increment ratio of :func:`holder_norm`."""
    g = as_fraction(gamma)
    order = g - multiindex_weight(l, f.spec.s)
    dl = spectral_derivative(f, l)
    xs = np.atleast_2d(np.asarray(x, float))
    ys = np.atleast_2d(np.asarray(y, float))
    rem = sample_at(dl, ys) - taylor_poly(dl, xs, ys - xs, order)
    return float(np.sum(np.abs(rem)) / aniso_norm(ys - xs, f.spec.s)[0] ** float(order))


# modelled distributions ------------------------------------------------------------------------------


def _sector_layout(model):
    space = model.space
    sectors = [a for a in space.homogeneities if a < model.gamma]
    sector_of = np.full(space.dim, -1, dtype=np.int64)
    for si, a in enumerate(sectors):
        for name in space.sectors[a]:
            sector_of[space.index[name]] = si
    return sectors, sector_of


def pair_defects(F, model, xs: np.ndarray, ys: np.ndarray, gamma) -> np.ndarray:
    """``||F^a_y - Gamma^a_{yx} F_x|| / ||y - x||_s^{gamma - a}`` per pair and sector; ``(P, S)``."""
    g = as_fraction(gamma)
    sectors, sector_of = _sector_layout(model)
    Fx = np.ascontiguousarray(sample_at(F.field, xs).T)
    Fy = np.ascontiguousarray(sample_at(F.field, ys).T)
    G = np.ascontiguousarray(model.gamma_batch(xs, ys))
    dist = aniso_norm(ys - xs, model.s)
    expo = np.array([float(g - a) for a in sectors])
    return kernels.pair_sector_ratios(Fx, Fy, G, sector_of, expo, np.ascontiguousarray(dist))


def dgamma_norm(F, model, gamma=None, sampler: Optional[PairSampler] = None, enrich: int = 16) -> NormReport:
    """``sup_{a,x} ||F^a_x|| + sup_{a, pairs} ||F^a_y - Gamma^a_{yx} F_x|| / ||y-x||_s^{gamma-a}``."""
    g = as_fraction(gamma) if gamma is not None else model.gamma
    if g != model.gamma:
        raise NormError(f"gamma {g} does not match the model's {model.gamma}")
    sampler = sampler or PairSampler()
    space = model.space
    missing = [name for name in space.symbols if space.homogeneity[name] < g and name not in space.index]
    if missing:
        raise NormError(f"missing sector channels: {missing}")
    sectors, _ = _sector_layout(model)
    anchors = gradient_anchors(F.field, enrich) if enrich else None
    xs, ys = sampler.pairs(F.spec, anchors)
    ratios = pair_defects(F, model, xs, ys, g)
    sup_part, inc_part = {}, {}
    best_sup, best_inc = (-1.0, None), (-1.0, None)
    for si, a in enumerate(sectors):
        vals = np.sum(np.abs(F.sector_samples(a)), axis=0)
        flat = int(np.argmax(vals))
        sv = float(vals.ravel()[flat])
        sup_part[str(a)] = sv
        if sv > best_sup[0]:
            best_sup = (sv, {"alpha": str(a), "x": list(map(int, np.unravel_index(flat, F.spec.N)))})
        p = int(np.argmax(ratios[:, si]))
        inc_part[str(a)] = float(ratios[p, si])
        if ratios[p, si] > best_inc[0]:
            best_inc = (float(ratios[p, si]), {"alpha": str(a), "x": xs[p].tolist(), "y": ys[p].tolist()})
    parts = {"sup": sup_part, "increment": inc_part}
    witness = {"sup": best_sup[1], "increment": best_inc[1], "gamma": str(g)}
    return NormReport("dgamma", _combine(parts), witness, parts)


def dgamma_pair_value(F, model, alpha, x, y) -> float:
    """Re-evaluate one pair ratio of :func:`dgamma_norm` in sector ``alpha``."""
    sectors, _ = _sector_layout(model)
    si = sectors.index(as_fraction(alpha))
    r = pair_defects(F, model, np.atleast_2d(np.asarray(x, float)), np.atleast_2d(np.asarray(y, float)), model.gamma)
    return float(r[0, si])


def dgamma_scale_profile(F, model, scales: Sequence[int], seed: int = 0, count: int = 2048) -> Dict[int, float]:
    """Max pair ratio restricted to displacements of lattice length ``2^n`` per scale ``n``.

    Used to see whether the ratios grow as pairs are refined.
    """
    spec = F.spec
    rng = np.random.default_rng([seed, 303])
    N = np.asarray(spec.N)
    out = {}
    for n in scales:
        x = rng.integers(0, N, size=(count, spec.d))
        axis = rng.integers(0, spec.d, size=count)
        step = np.zeros((count, spec.d), dtype=np.int64)
        step[np.arange(count), axis] = rng.choice([-1, 1], size=count) * (2**n) ** np.asarray(spec.s.s)[axis]
        xs = x / N
        ys = (x + step) / N
        ok = aniso_norm(ys - xs, spec.s) <= 1.0
        r = pair_defects(F, model, xs[ok], ys[ok], model.gamma)
        out[n] = float(np.max(r))
    return out


def bgamma_norm(F, model, gamma=None, P: Optional[DyadicPartition] = None, check_structure: bool = True,
                points_per_sector: int = 8, seed: int = 0, n_fit: int = 5) -> NormReport:
    """``||F||_{C_b} + sup_a ||F^{sharp,a}||_{B^{gamma-a}}`` with a structure-condition flag.

    The structure condition is probed by :func:`paraproducts.residual_curve`
    at ``points_per_sector`` seeded grid points for every admissible
    ``(alpha, k)``, over the last ``n_fit`` scales; it is flagged as violated
    when a claimed decay exponent falls below half its nominal value.
    """
    from .lpanalysis import build_partition
    from .paraproducts import admissible_residual_pairs, residual_curve, sharp_remainder

    g = as_fraction(gamma) if gamma is not None else model.gamma
    if g != model.gamma:
        raise NormError(f"gamma {g} does not match the model's {model.gamma}")
    P = P or build_partition(F.spec)
    sectors, _ = _sector_layout(model)
    sup_part = {}
    for a in sectors:
        sup_part[str(a)] = float(np.max(np.sum(np.abs(F.sector_samples(a)), axis=0)))
    sharp = sharp_remainder(F, model, g, P)
    sharp_part, sharp_wit = {}, {}
    for a in sectors:
        rep = besov_norm(sharp[a], float(g - a), P)
        sharp_part[str(a)] = rep.value
        sharp_wit[str(a)] = rep.witness["j"]
    parts = {"sup": sup_part, "sharp": sharp_part}
    a_sup = max(sup_part, key=lambda key: sup_part[key])
    a_sharp = max(sharp_part, key=lambda key: sharp_part[key])
    witness = {"sup": {"alpha": a_sup}, "sharp": {"alpha": a_sharp, "j": sharp_wit[a_sharp]}, "gamma": str(g)}
    flags: Dict[str, object] = {"ok": True}
    if check_structure:
        rng = np.random.default_rng([seed, 404])
        N_min = max(0, P.J_max - n_fit + 1)
        curves = []
        ok = True
        for a, k in admissible_residual_pairs(model):
            pts = rng.integers(0, np.asarray(F.spec.N), size=(points_per_sector, F.spec.d))
            c = residual_curve(F, model, pts, a, k, P, N_min=N_min)
            if c.exponent is not None and c.exponent < 0.5 * c.expected:
                ok = False
            curves.append(c)
        flags = {"ok": ok, "structure_condition": ok, "curves": [c.to_json() for c in curves]}
    return NormReport("bgamma", _combine(parts), witness, parts, flags)
