"""Concrete regularity structures and models on the periodic grid.

Points are elements of R^d. Fields are periodic, so they are read at points
mod 1, but displacements ``y - x`` are always the true (unwrapped) ones; this
keeps the Chen relation exact for the polynomial model.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import comb

from .grading import (
    HomogeneitySet,
    ModelSpace,
    ScalingVector,
    StructureElement,
    aniso_norm,
    as_fraction,
    factorial,
    index_set_below,
    multiindex_weight,
    parse_poly_symbol,
    poly_symbol,
    triangularity_violations,
)
from .lpanalysis import (
    DyadicPartition,
    GridField,
    GridSpec,
    read_field,
    sample_at,
    spectral_derivative,
    write_field,
)


class ModelError(ValueError):
    """Raised on invalid model parameters or malformed model descriptions."""


# separable kernel -----------------------------------------------------------------


@dataclass(frozen=True)
class PolyTerm:
    """``coef * b(u) * (v - u)^l``; ``b`` defaults to 1.

    Such terms are annihilated by integration against ``Psi^j_{x-v}`` for
    ``j >= 0``, so they never reach a paraproduct.
    """

    coef: float
    l: Tuple[int, ...]
    b: Optional[GridField] = None


@dataclass(frozen=True)
class SepTerm:
    """``coef * a(u) * c(v)``; ``a`` defaults to 1."""

    coef: float
    c: GridField
    a: Optional[GridField] = None


Term = Union[PolyTerm, SepTerm]


class SeparableKernel:
    """Terms of ``Gamma_{vu}`` keyed by ``(target symbol, source symbol)``.

    The coefficient of ``target`` in ``Gamma_{vu} source`` is the sum of the
    listed terms evaluated at ``(v, u)``.
    """

    def __init__(self, space: ModelSpace, terms: Mapping[Tuple[str, str], Sequence[Term]]):
        self.space = space
        self.terms: Dict[Tuple[str, str], Tuple[Term, ...]] = {}
        for (tgt, src), lst in terms.items():
            if tgt not in space.index or src not in space.index:
                raise ModelError(f"kernel entry ({tgt!r}, {src!r}) uses unknown symbols")
            if lst:
                self.terms[(tgt, src)] = tuple(lst)

    def fields(self) -> List[GridField]:
        out = []
        for lst in self.terms.values():
            for t in lst:
                for f in ((t.b,) if isinstance(t, PolyTerm) else (t.a, t.c)):
                    if f is not None:
                        out.append(f)
        return out

    def sep_terms(self, target: str) -> List[Tuple[str, SepTerm]]:
        return [
            (src, t)
            for (tgt, src), lst in self.terms.items()
            if tgt == target
            for t in lst
            if isinstance(t, SepTerm)
        ]

    def evaluate(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Matrices ``Gamma_{vu}`` for point stacks ``u, v`` of shape ``(P, d)``; returns ``(P, D, D)``."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        h = v - u
        D = self.space.dim
        out = np.zeros((u.shape[0], D, D))
        for (tgt, src), lst in self.terms.items():
            i, j = self.space.index[tgt], self.space.index[src]
            for t in lst:
                if isinstance(t, PolyTerm):
                    val = t.coef * _monomial(h, t.l)
                    if t.b is not None:
                        val = val * sample_at(t.b, u)[0]
                else:
                    val = t.coef * sample_at(t.c, v)[0]
                    if t.a is not None:
                        val = val * sample_at(t.a, u)[0]
                out[:, i, j] += val
        return out


def _monomial(h: np.ndarray, l: Sequence[int]) -> np.ndarray:
    out = np.ones(h.shape[0])
    for i, li in enumerate(l):
        if li:
            out = out * h[:, i] ** li
    return out


# model instance -------------------------------------------------------------------


class ModelInstance:
    """A regularity structure together with a model realized on a grid.

    Parameters
    ----------
    name : identifier (``"polynomial"``, ``"pam"`` or a user label).
    s : scaling vector.
    homogeneities : the index set below gamma.
    space : model space with named symbols.
    kernel : separable decomposition of ``Gamma_{vu}``.
    gamma_fn : optional independent pointwise evaluator ``(u, v) -> (P, D, D)``;
        defaults to evaluating the kernel.
    spec : grid on which the kernel fields live (None for field-free models).
    """

    def __init__(self, name: str, s: ScalingVector, homogeneities: HomogeneitySet, space: ModelSpace,
                 kernel: SeparableKernel, gamma_fn=None, spec: Optional[GridSpec] = None,
                 pi_fn=None, params: Optional[dict] = None):
        self.name = name
        self.s = s
        self.homogeneities = homogeneities
        self.space = space
        self.kernel = kernel
        self._gamma_fn = gamma_fn
        self.spec = spec
        self.pi_fn = pi_fn
        self.params = dict(params or {})
        if set(space.homogeneities) != set(homogeneities.A):
            raise ModelError("model space sectors do not match the homogeneity set")

    @property
    def gamma(self) -> Fraction:
        return self.homogeneities.gamma

    def gamma_batch(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``Gamma_{vu}`` as matrices ``[target, source]`` for each pair; shape ``(P, D, D)``."""
        if self._gamma_fn is not None:
            return self._gamma_fn(np.atleast_2d(u), np.atleast_2d(v))
        return self.kernel.evaluate(u, v)

    def gamma_at(self, y: Sequence[float], x: Sequence[float]) -> StructureElement:
        """``Gamma_{yx}`` as a :class:`StructureElement`."""
        m = self.gamma_batch(np.asarray(x, float)[None], np.asarray(y, float)[None])[0]
        return StructureElement(self.space, m)

    def check_field_spec(self, spec: GridSpec):
        if self.spec is not None and spec != self.spec:
            raise ModelError("field grid does not match the model grid")
        if spec.s != self.s:
            raise ModelError("field scaling does not match the model scaling")


def _poly_space(s: ScalingVector, gamma: Fraction) -> Tuple[ModelSpace, List[Tuple[int, ...]]]:
    ks = index_set_below(gamma, s)
    sectors: Dict[Fraction, List[str]] = {}
    for k in ks:
        sectors.setdefault(Fraction(multiindex_weight(k, s)), []).append(poly_symbol(k))
    return ModelSpace(sectors), ks


def _poly_terms(ks: Sequence[Tuple[int, ...]]) -> Dict[Tuple[str, str], List[Term]]:
    terms: Dict[Tuple[str, str], List[Term]] = {}
    for k in ks:
        for l in product(*(range(ki + 1) for ki in k)):
            coef = float(math.prod(comb(ki, li, exact=True) for ki, li in zip(k, l)))
            power = tuple(ki - li for ki, li in zip(k, l))
            terms.setdefault((poly_symbol(l), poly_symbol(k)), []).append(PolyTerm(coef, power))
    return terms


def _binomial_matrices(space: ModelSpace, ks: Sequence[Tuple[int, ...]], h: np.ndarray) -> np.ndarray:
    """``(X + h 1)^k`` expanded for each displacement row of ``h``."""
    P = h.shape[0]
    out = np.zeros((P, space.dim, space.dim))
    for k in ks:
        j = space.index[poly_symbol(k)]
        for l in product(*(range(ki + 1) for ki in k)):
            i = space.index[poly_symbol(l)]
            coef = math.prod(math.comb(ki, li) for ki, li in zip(k, l))
            out[:, i, j] += coef * np.prod(h ** (np.asarray(k) - np.asarray(l)), axis=1)
    return out


def poly_model(s, gamma) -> ModelInstance:
    """Polynomial structure ``X^k, |k|_s < gamma`` with ``Gamma_{yx} X^k = (X + (y-x) 1)^k``."""
    s = s if isinstance(s, ScalingVector) else ScalingVector(tuple(s))
    g = as_fraction(gamma)
    if g <= 0:
        raise ModelError("polynomial model needs gamma > 0")
    if g.denominator == 1:
        raise ModelError(f"gamma = {g} is an integer; the polynomial model requires a non-integer gamma")
    space, ks = _poly_space(s, g)
    hom = HomogeneitySet(tuple(space.homogeneities), g)
    kernel = SeparableKernel(space, _poly_terms(ks))

    def gamma_fn(u, v):
        return _binomial_matrices(space, ks, np.asarray(v, float) - np.asarray(u, float))

    def pi_fn(x, k, y):
        """``Pi_x X^k (y) = (y - x)^k``."""
        return _monomial(np.atleast_2d(np.asarray(y, float) - np.asarray(x, float)), k)

    return ModelInstance("polynomial", s, hom, space, kernel, gamma_fn=gamma_fn, pi_fn=pi_fn,
                         params={"gamma": str(g)})


@dataclass(frozen=True)
class ModelledField:
    """A ``T``-valued field: one channel per symbol of ``space``, in ``space.symbols`` order."""

    space: ModelSpace
    field: GridField

    def __post_init__(self):
        if self.field.channels != self.space.dim:
            raise ModelError(
                f"modelled field has {self.field.channels} channels, model space has {self.space.dim}"
            )

    @property
    def spec(self) -> GridSpec:
        return self.field.spec

    def component(self, symbol: str) -> GridField:
        return self.field.channel(self.space.index[symbol])

    def sector(self, alpha) -> GridField:
        idx = self.space.sector_slice(alpha)
        return GridField(self.spec, self.field.samples[idx])

    def sector_samples(self, alpha) -> np.ndarray:
        return self.field.samples[self.space.sector_slice(alpha)]

    def values_at(self, points: np.ndarray) -> np.ndarray:
        """Coefficient vectors at points, shape ``(D, P)``."""
        return sample_at(self.field, points)

    def __add__(self, other: "ModelledField") -> "ModelledField":
        if other.space != self.space:
            raise ModelError("modelled fields over different model spaces")
        return ModelledField(self.space, self.field + other.field)

    def __mul__(self, c: float) -> "ModelledField":
        return ModelledField(self.space, self.field * c)

    __rmul__ = __mul__

    @classmethod
    def from_components(cls, space: ModelSpace, comps: Mapping[str, GridField]) -> "ModelledField":
        missing = [s for s in space.symbols if s not in comps]
        if missing:
            raise ModelError(f"missing sector channels: {missing}")
        spec = next(iter(comps.values())).spec
        data = np.concatenate([comps[name].samples for name in space.symbols], axis=0)
        return cls(space, GridField(spec, data))


def poly_lift(f: GridField, gamma, model: ModelInstance) -> ModelledField:
    """``F_f = sum_{|k|_s < gamma} d^k f / k! X^k``."""
    if f.channels != 1:
        raise ModelError("poly_lift expects a scalar field")
    g = as_fraction(gamma)
    if g != model.gamma:
        raise ModelError(f"lift order {g} does not match the model's gamma {model.gamma}")
    comps = {}
    for name in model.space.symbols:
        k = parse_poly_symbol(name) or (0,) * f.spec.d
        comps[name] = spectral_derivative(f, k) * (1.0 / factorial(k))
    return ModelledField.from_components(model.space, comps)


# synthetic rough fields -------------------------------------------------------------


def make_synthetic_field(spec: GridSpec, alpha_target: float, seed: int, cutoff: int) -> GridField:
    """Real Gaussian field with spectral amplitude ``(1 + |m|_s)^{-(alpha + |s|/2)}``.

    Modes with ``|m_i| <= cutoff^{s_i}`` are populated. Coefficients are drawn
    per scaled ring ``r = max_i ceil(|m_i|^{1/s_i})`` from a generator seeded
    with ``(seed, r)``, in lexicographic order of the half-space modes, so a
    field at a larger cutoff or on a finer grid extends the coarser one.
    """
    s = spec.s
    cutoff = int(cutoff)
    if cutoff < 1:
        raise ModelError("cutoff must be a positive integer")
    for n, si in zip(spec.N, s.s):
        if cutoff**si >= n // 2:
            raise ModelError(f"cutoff {cutoff} exceeds the band of grid {spec.N}")
    axes = [np.arange(-(cutoff**si), cutoff**si + 1) for si in s.s]
    modes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.d)
    # half space: first nonzero coordinate positive
    first = np.zeros(modes.shape[0], dtype=np.int64)
    nz = modes != 0
    has = nz.any(axis=1)
    first[has] = modes[has, np.argmax(nz[has], axis=1)]
    modes = modes[first > 0]
    ring = np.max(
        np.ceil(np.abs(modes) ** (1.0 / np.asarray(s.s, dtype=float)) - 1e-12), axis=1
    ).astype(np.int64)
    order = np.lexsort(tuple(modes[:, i] for i in range(spec.d - 1, -1, -1)) + (ring,))
    modes, ring = modes[order], ring[order]
    amp = (1.0 + aniso_norm(modes.astype(float), s)) ** (-(alpha_target + s.total / 2.0))
    coef = np.empty(modes.shape[0], dtype=complex)
    bounds = np.flatnonzero(np.diff(ring)) + 1
    for lo, hi in zip(np.r_[0, bounds], np.r_[bounds, modes.shape[0]]):
        z = np.random.default_rng([seed, int(ring[lo])]).standard_normal((hi - lo, 2))
        coef[lo:hi] = (z[:, 0] + 1j * z[:, 1]) / math.sqrt(2.0)
    coef *= amp
    spectrum = np.zeros(spec.N, dtype=complex)
    pos = tuple((modes % np.asarray(spec.N)).T)
    neg = tuple(((-modes) % np.asarray(spec.N)).T)
    spectrum[pos] = coef
    spectrum[neg] = np.conj(coef)
    mean = np.random.default_rng([seed, 0]).standard_normal()
    spectrum[(0,) * spec.d] = mean
    return GridField.from_spectrum(spec, spectrum * spec.size)


# PAM-like model ---------------------------------------------------------------------

NOISE = "I(Xi)"


def pam_model(s, alpha_I, gamma, noise: GridField) -> ModelInstance:
    """Structure ``{1, I(Xi), X^k : |k|_s = 1}`` over a rough field ``noise``.

    ``Gamma_{yx} I(Xi) = I(Xi) + (noise(y) - noise(x)) 1`` and polynomial
    symbols transform as in the polynomial model.
    """
    s = s if isinstance(s, ScalingVector) else ScalingVector(tuple(s))
    aI = as_fraction(alpha_I)
    g = as_fraction(gamma)
    if not (0 < aI < 1 < g < 1 + aI):
        raise ModelError(f"need 0 < alpha_I < 1 < gamma < 1 + alpha_I, got alpha_I={aI}, gamma={g}")
    if noise.channels != 1 or noise.spec.s != s:
        raise ModelError("noise must be a scalar field with the model's scaling")
    unit_ks = [k for k in index_set_below(Fraction(3, 2), s) if multiindex_weight(k, s) == 1]
    sectors: Dict[Fraction, List[str]] = {Fraction(0): [ModelSpace.UNIT], aI: [NOISE]}
    if unit_ks:
        sectors[Fraction(1)] = [poly_symbol(k) for k in unit_ks]
    space = ModelSpace(sectors)
    hom = HomogeneitySet(tuple(space.homogeneities), g)
    terms: Dict[Tuple[str, str], List[Term]] = {}
    for name in space.symbols:
        terms[(name, name)] = [PolyTerm(1.0, (0,) * s.d)]
    terms[(ModelSpace.UNIT, NOISE)] = [SepTerm(1.0, noise), PolyTerm(-1.0, (0,) * s.d, noise)]
    for k in unit_ks:
        terms[(ModelSpace.UNIT, poly_symbol(k))] = [PolyTerm(1.0, k)]
    kernel = SeparableKernel(space, terms)
    i_unit, i_noise = space.index[ModelSpace.UNIT], space.index[NOISE]
    x_cols = [(space.index[poly_symbol(k)], k) for k in unit_ks]

    def gamma_fn(u, v):
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        out = np.broadcast_to(np.eye(space.dim), (u.shape[0], space.dim, space.dim)).copy()
        out[:, i_unit, i_noise] = sample_at(noise, v)[0] - sample_at(noise, u)[0]
        for col, k in x_cols:
            out[:, i_unit, col] = (v - u)[:, int(np.argmax(k))]
        return out

    def pi_fn(x, symbol, y):
        x = np.atleast_2d(np.asarray(x, float))
        y = np.atleast_2d(np.asarray(y, float))
        if symbol == ModelSpace.UNIT:
            return np.ones(y.shape[0])
        if symbol == NOISE:
            return sample_at(noise, y)[0] - sample_at(noise, x)[0]
        k = parse_poly_symbol(symbol)
        return _monomial(y - x, k)

    return ModelInstance("pam", s, hom, space, kernel, gamma_fn=gamma_fn, spec=noise.spec, pi_fn=pi_fn,
                         params={"alpha_I": str(aI), "gamma": str(g), "noise": noise})


def pam_noise(model: ModelInstance) -> GridField:
    if model.name != "pam":
        raise ModelError("not a PAM model")
    return model.params["noise"]


def pam_modelled(g: GridField, w: GridField, model: ModelInstance, gamma=None,
                 P: Optional[DyadicPartition] = None) -> ModelledField:
    """``F = (g < noise + w) 1 + g I(Xi) + sum_k f^{X^k} X^k``.

    The polynomial coefficients are the ones forced by the structure
    condition, ``f^{X^k} = (d^k F^1 - g d^k noise) / k!``.
    """
    from .lpanalysis import build_partition
    from .paraproducts import bony_para

    if model.name != "pam":
        raise ModelError("pam_modelled needs a PAM model")
    if gamma is not None and as_fraction(gamma) != model.gamma:
        raise ModelError("gamma does not match the model")
    noise = pam_noise(model)
    if g.spec != noise.spec or w.spec != noise.spec:
        raise ModelError("fields and model live on different grids")
    P = P or build_partition(noise.spec)
    f_unit = bony_para(g, noise, P) + w
    comps = {ModelSpace.UNIT: f_unit, NOISE: g}
    for name in model.space.symbols:
        k = parse_poly_symbol(name)
        if k is not None:
            comps[name] = (spectral_derivative(f_unit, k) - g * spectral_derivative(noise, k)) * (
                1.0 / factorial(k)
            )
    return ModelledField.from_components(model.space, comps)


# model checks -----------------------------------------------------------------------


@dataclass
class ModelCheckReport:
    chen_defect: float
    identity_defect: float
    gamma_bound: float
    gamma_witness: Optional[dict]
    triangularity_violations: int

    def to_json(self) -> dict:
        return {
            "chen_defect": self.chen_defect,
            "identity_defect": self.identity_defect,
            "gamma_bound": self.gamma_bound,
            "gamma_witness": self.gamma_witness,
            "triangularity_violations": self.triangularity_violations,
        }


def check_model(model: ModelInstance, gamma=None, sampler=None, n_triples: int = 200,
                seed: int = 0, on_grid: bool = True) -> ModelCheckReport:
    """Chen defect, ``Gamma_xx = Id`` defect, empirical ``||Gamma||_gamma`` and triangularity.

    The bound is taken over pairs from ``sampler`` (a :class:`norms.PairSampler`)
    when given, else over random pairs at distance at most 1.
    """
    from .norms import PairSampler

    spec = model.spec
    d = model.s.d
    rng = np.random.default_rng([seed, 17])
    if on_grid and spec is not None:
        N = np.asarray(spec.N)
        x, y, z = (rng.integers(0, 4 * N, size=(n_triples, d)) / N for _ in range(3))
    else:
        x, y, z = (rng.uniform(-1.0, 2.0, size=(n_triples, d)) for _ in range(3))
    g_xy = model.gamma_batch(y, x)
    g_yz = model.gamma_batch(z, y)
    g_xz = model.gamma_batch(z, x)
    chen = float(np.max(np.abs(np.einsum("pij,pjk->pik", g_xy, g_yz) - g_xz)))
    ident = float(np.max(np.abs(model.gamma_batch(x, x) - np.eye(model.space.dim))))
    tri = sum(len(triangularity_violations(model.space, m, tol=0.0)) for m in g_xz[:20])

    if sampler is None:
        sampler = PairSampler(seed=seed)
    grid = spec or GridSpec(tuple([64] * d), model.s)
    xs, ys = sampler.pairs(grid)
    mats = model.gamma_batch(xs, ys)
    dist = aniso_norm(ys - xs, model.s)
    best, witness = 0.0, None
    for src in model.space.symbols:
        a = model.space.homogeneity[src]
        j = model.space.index[src]
        for beta in model.space.homogeneities:
            if beta >= a:
                continue
            rows = model.space.sector_slice(beta)
            val = np.sum(np.abs(mats[:, rows, j]), axis=1) * dist ** float(beta - a)
            p = int(np.argmax(val))
            if val[p] > best:
                best = float(val[p])
                witness = {"x": xs[p].tolist(), "y": ys[p].tolist(), "source": src, "beta": str(beta)}
    return ModelCheckReport(chen, ident, best, witness, tri)


def kernel_consistency(model: ModelInstance, n_pairs: int = 1000, seed: int = 0, on_grid: bool = True) -> float:
    """Max deviation between the kernel evaluation and the pointwise evaluator."""
    d = model.s.d
    rng = np.random.default_rng([seed, 23])
    if on_grid and model.spec is not None:
        N = np.asarray(model.spec.N)
        u = rng.integers(-N, 2 * N, size=(n_pairs, d)) / N
        v = rng.integers(-N, 2 * N, size=(n_pairs, d)) / N
    else:
        u = rng.uniform(-1, 2, size=(n_pairs, d))
        v = rng.uniform(-1, 2, size=(n_pairs, d))
    return float(np.max(np.abs(model.kernel.evaluate(u, v) - model.gamma_batch(u, v))))


# model description files ------------------------------------------------------------

MODEL_FORMAT = "paramodel-model/1"


def save_model(model: ModelInstance, path: str) -> None:
    """Write a JSON description; kernel fields go to sibling binary field files."""
    base = os.path.splitext(path)[0]
    field_ids: Dict[int, str] = {}

    def ref(f: Optional[GridField]) -> Optional[str]:
        if f is None:
            return None
        if id(f) not in field_ids:
            name = f"{os.path.basename(base)}.field{len(field_ids)}.bin"
            write_field(os.path.join(os.path.dirname(path) or ".", name), f)
            field_ids[id(f)] = name
        return field_ids[id(f)]

    terms = []
    for (tgt, src), lst in model.kernel.terms.items():
        for t in lst:
            if isinstance(t, PolyTerm):
                terms.append({"target": tgt, "source": src, "kind": "poly", "coef": t.coef,
                              "power": list(t.l), "b": ref(t.b)})
            else:
                terms.append({"target": tgt, "source": src, "kind": "sep", "coef": t.coef,
                              "a": ref(t.a), "c": ref(t.c)})
    doc = {
        "format": MODEL_FORMAT,
        "name": model.name,
        "s": model.s.to_list(),
        "gamma": str(model.gamma),
        "sectors": {str(a): list(names) for a, names in model.space.sectors.items()},
        "kernel": terms,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def load_model(path: str) -> ModelInstance:
    """Load a model description; the pointwise action is derived from the kernel."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ModelError(f"unrecognized model format {doc.get('format')!r}")
    s = ScalingVector(tuple(doc["s"]))
    space = ModelSpace({Fraction(a): names for a, names in doc["sectors"].items()})
    hom = HomogeneitySet(tuple(space.homogeneities), Fraction(doc["gamma"]))
    cache: Dict[str, GridField] = {}
    folder = os.path.dirname(path) or "."

    def load(name):
        if name is None:
            return None
        if name not in cache:
            cache[name] = read_field(os.path.join(folder, name))
        return cache[name]

    if "kernel" not in doc or not isinstance(doc["kernel"], list):
        raise ModelError("model description has no separable kernel; such models are not supported")
    terms: Dict[Tuple[str, str], List[Term]] = {}
    for t in doc["kernel"]:
        key = (t["target"], t["source"])
        if t["kind"] == "poly":
            terms.setdefault(key, []).append(PolyTerm(float(t["coef"]), tuple(t["power"]), load(t.get("b"))))
        elif t["kind"] == "sep":
            terms.setdefault(key, []).append(SepTerm(float(t["coef"]), load(t["c"]), load(t.get("a"))))
        else:
            raise ModelError(f"unknown kernel term kind {t['kind']!r}")
    kernel = SeparableKernel(space, terms)
    specs = {f.spec for f in kernel.fields()}
    if len(specs) > 1:
        raise ModelError("kernel fields live on different grids")
    spec = specs.pop() if specs else None
    return ModelInstance(doc.get("name", "loaded"), s, hom, space, kernel, spec=spec)
