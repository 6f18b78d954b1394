"""Run configuration, random-field suites and the norm-equivalence verification suite.

Every check is a function ``(config) -> CheckResult`` registered under a
stable id. :func:`run_verification` runs the selected checks (concurrently
when more than one worker is configured) and assembles a
:class:`VerificationReport` keyed by check id, so the report does not depend
on completion order.
"""
from __future__ import annotations

import concurrent.futures as futures
import csv
import datetime as _dt
import io
import json
import math
import os
import time
import traceback
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .grading import GradingError, HomogeneitySet, ModelSpace, ScalingVector, as_fraction, factorial, index_set_below
from .lpanalysis import (
    DyadicPartition,
    GridField,
    GridSpec,
    LPError,
    build_partition,
    kernel_moment,
    lp_block,
)
from .models import (
    ModelError,
    ModelInstance,
    ModelledField,
    make_synthetic_field,
    pam_model,
    pam_modelled,
    poly_lift,
    poly_model,
)
from .norms import (
    PairSampler,
    besov_norm,
    bgamma_norm,
    dgamma_norm,
    dgamma_scale_profile,
    holder_norm,
    taylor_remainder,
)
from .paraproducts import (
    ParaproductTermLog,
    admissible_residual_pairs,
    bony_para,
    residual_curve,
    structure_para,
    structure_para_bruteforce,
)

CHECK_WORKERS_ENV = "PARAMODEL_CHECK_WORKERS"
REPORT_FORMAT = "paramodel-report/1"
CONFIG_FORMAT = "paramodel-config/1"

DEFAULT_TOLERANCES: Dict[str, float] = {
    "partition": 1e-14,
    "moment_residual": 1e-14,
    "reconstruction": 1e-12,
    "taylor": 1e-8,
    "bracket": 25.0,
    "drift": 2.0,
    "identity": 1e-10,
    "machine": 8 * np.finfo(float).eps,
    "leakage": 1e-10,
    "exponent_slack": 0.25,
    "broken_exponent": 0.1,
    "growth": 2.0,
    "broken_growth_margin": 1.1,
}


class ConfigError(ValueError):
    """Raised on invalid run configurations."""


def _frac_str(x) -> str:
    return str(as_fraction(x))


def _is_pow2(n: int) -> bool:
    return n >= 8 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class DecayConfig:
    """Grid and field choices for the structure-condition decay check.

    ``pam`` and ``report_only_pam`` hold ``(alpha_I, gamma)`` pairs; the
    latter are measured and reported but do not decide the overall status.
    """

    d: int = 1
    N: int = 2**18
    poly_gammas: Tuple[str, ...] = ("6/5", "3/2")
    pam: Tuple[Tuple[str, str], ...] = (("3/4", "8/5"),)
    report_only_pam: Tuple[Tuple[str, str], ...] = (("3/4", "6/5"),)
    fields: int = 3
    points: int = 8
    cutoff_divisor: int = 4
    break_amplitude: float = 1.0

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "N": self.N,
            "poly_gammas": list(self.poly_gammas),
            "pam": [list(p) for p in self.pam],
            "report_only_pam": [list(p) for p in self.report_only_pam],
            "fields": self.fields,
            "points": self.points,
            "cutoff_divisor": self.cutoff_divisor,
            "break_amplitude": self.break_amplitude,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DecayConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown decay keys: {sorted(extra)}")
        if "poly_gammas" in data:
            data["poly_gammas"] = tuple(_frac_str(g) for g in data["poly_gammas"])
        for key in ("pam", "report_only_pam"):
            if key in data:
                data[key] = tuple((_frac_str(a), _frac_str(g)) for a, g in data[key])
        return cls(**data)


@dataclass(frozen=True)
class RunConfig:
    """Everything a verification run depends on.

    ``gamma`` and ``alpha_I`` are kept as exact rationals. ``structure`` picks
    the model used by the norm-equivalence check (``"pam"`` or
    ``"polynomial"``); the remaining checks carry their own parameter lists
    (``holder_gammas``, ``partition_scalings``, ``decay``).
    """

    d: int = 2
    s: Tuple[int, ...] = (1, 1)
    grids: Tuple[int, ...] = (128, 256)
    gamma: Fraction = Fraction(6, 5)
    structure: str = "pam"
    alpha_I: Fraction = Fraction(3, 4)
    seed: int = 0
    n_fields: int = 20
    n_pam_fields: int = 10
    cutoff_divisor: int = 4
    holder_gammas: Tuple[str, ...] = ("3/10", "3/4", "6/5")
    partition_scalings: Tuple[Tuple[int, ...], ...] = ((1, 1), (2, 1), (2, 1, 1))
    sampler: Dict[str, int] = field(default_factory=lambda: {"M_a": 64, "M_n": 32, "M_f": 512})
    tolerances: Dict[str, float] = field(default_factory=dict)
    decay: DecayConfig = field(default_factory=DecayConfig)
    checks: Optional[Tuple[str, ...]] = None
    workers: int = 1
    report_path: Optional[str] = None
    curves_dir: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "gamma", as_fraction(self.gamma))
        object.__setattr__(self, "alpha_I", as_fraction(self.alpha_I))
        object.__setattr__(self, "s", tuple(int(v) for v in self.s))
        object.__setattr__(self, "grids", tuple(int(n) for n in self.grids))
        self.validate()

    def validate(self):
        if self.d < 1 or len(self.s) != self.d:
            raise ConfigError(f"scaling {self.s} does not match dimension {self.d}")
        if any(v < 1 for v in self.s):
            raise ConfigError("scaling entries must be positive integers")
        if len(self.grids) < 2:
            raise ConfigError("at least two grid sizes are needed for drift checks")
        bad = [n for n in self.grids if not _is_pow2(n)]
        if bad:
            raise ConfigError(f"grid sizes must be powers of two >= 8, got {bad}")
        if list(self.grids) != sorted(self.grids):
            raise ConfigError("grid sizes must be increasing")
        if self.structure not in ("pam", "polynomial"):
            raise ConfigError(f"structure must be 'pam' or 'polynomial', got {self.structure!r}")
        A = [Fraction(0)]
        if self.structure == "pam":
            A.append(self.alpha_I)
            if not (0 < self.alpha_I < 1 < self.gamma < 1 + self.alpha_I):
                raise ConfigError(
                    f"PAM needs 0 < alpha_I < 1 < gamma < 1 + alpha_I, got alpha_I={self.alpha_I}, gamma={self.gamma}"
                )
        try:
            HomogeneitySet(tuple(A), self.gamma)
        except GradingError as exc:
            raise ConfigError(str(exc)) from None
        for g in self.holder_gammas:
            if as_fraction(g).denominator == 1:
                raise ConfigError(f"holder gamma {g} is an integer; the Hoelder/Besov equivalence needs gamma outside N")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
        if self.checks is not None:
            missing = [c for c in self.checks if c not in CHECKS]
            if missing:
                raise ConfigError(f"unknown check ids: {missing}")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.n_fields < 3 or self.n_pam_fields < 2:
            raise ConfigError("field suites need at least 3 trigonometric and 2 PAM fields")

    @property
    def scaling(self) -> ScalingVector:
        return ScalingVector(self.s)

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def spec(self, N: int) -> GridSpec:
        return GridSpec((N,) * self.d, self.scaling)

    def pair_sampler(self, seed: int) -> PairSampler:
        return PairSampler(seed=seed, **self.sampler)

    def to_json(self) -> dict:
        return {
            "format": CONFIG_FORMAT,
            "d": self.d,
            "s": list(self.s),
            "grids": list(self.grids),
            "gamma": str(self.gamma),
            "structure": self.structure,
            "alpha_I": str(self.alpha_I),
            "seed": self.seed,
            "n_fields": self.n_fields,
            "n_pam_fields": self.n_pam_fields,
            "cutoff_divisor": self.cutoff_divisor,
            "holder_gammas": list(self.holder_gammas),
            "partition_scalings": [list(s) for s in self.partition_scalings],
            "sampler": dict(self.sampler),
            "tolerances": dict(self.tolerances),
            "decay": self.decay.to_json(),
            "checks": None if self.checks is None else list(self.checks),
            "workers": self.workers,
            "report_path": self.report_path,
            "curves_dir": self.curves_dir,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        data = dict(data)
        fmt = data.pop("format", CONFIG_FORMAT)
        if fmt != CONFIG_FORMAT:
            raise ConfigError(f"unsupported config format {fmt!r}")
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            if "gamma" in data:
                data["gamma"] = Fraction(str(data["gamma"]))
            if "alpha_I" in data:
                data["alpha_I"] = Fraction(str(data["alpha_I"]))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"invalid rational: {exc}") from None
        for key in ("s", "grids"):
            if key in data:
                data[key] = tuple(data[key])
        if "holder_gammas" in data:
            data["holder_gammas"] = tuple(_frac_str(g) for g in data["holder_gammas"])
        if "partition_scalings" in data:
            data["partition_scalings"] = tuple(tuple(int(v) for v in s) for s in data["partition_scalings"])
        if "decay" in data:
            data["decay"] = DecayConfig.from_json(data["decay"])
        if data.get("checks") is not None:
            data["checks"] = tuple(data["checks"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_json(data)


def default_config_path() -> str:
    return os.path.join(os.path.dirname(__file__), "data", "default.json")


# field suites --------------------------------------------------------------------------------


def roughness_levels(gamma) -> Tuple[float, float, float]:
    """Three target regularities around ``gamma``: rougher, matching and smoother."""
    g = float(gamma)
    return (g - 0.25, g, g + 0.25)


def trig_fields(spec: GridSpec, gamma, count: int, seed: int, cutoff: int) -> List[GridField]:
    """``count`` random trigonometric polynomials cycling through :func:`roughness_levels`."""
    levels = roughness_levels(gamma)
    return [make_synthetic_field(spec, levels[i % 3], seed * 1000 + i, cutoff) for i in range(count)]


PAM_INTERIOR_OFFSETS = ((0.05, 0.1), (0.15, 0.1), (0.3, 0.1))
PAM_EDGE_OFFSETS = ((0.0, 0.0),)


def pam_suite(spec: GridSpec, alpha_I, gamma, count: int, seed: int, cutoff: int,
              P: Optional[DyadicPartition] = None,
              offsets: Sequence[Tuple[float, float]] = PAM_INTERIOR_OFFSETS) -> Tuple[ModelInstance, List[ModelledField]]:
    """Synthetic ``I(Xi)`` of regularity ``alpha_I`` and ``count`` paracontrolled fields.

    Field ``i`` draws the Gubinelli derivative ``g`` at regularity
    ``gamma - alpha_I + offsets[i % len(offsets)][0]`` and the remainder ``w``
    at ``gamma + offsets[i % len(offsets)][1]``. A Gaussian field drawn at
    target regularity ``a`` is only borderline in ``C^a``: the default
    interior offsets keep sup norms from creeping up with ``N``, while
    :data:`PAM_EDGE_OFFSETS` gives fields whose structure residuals decay at
    exactly the nominal rate.
    """
    aI, g = as_fraction(alpha_I), as_fraction(gamma)
    noise = make_synthetic_field(spec, float(aI), seed * 1000 + 999, cutoff)
    model = pam_model(spec.s, aI, g, noise)
    P = P or build_partition(spec)
    base = float(g - aI)
    out = []
    for i in range(count):
        dg, dw = offsets[i % len(offsets)]
        gi = make_synthetic_field(spec, base + dg, seed * 1000 + 100 + i, cutoff)
        wi = make_synthetic_field(spec, float(g) + dw, seed * 1000 + 200 + i, cutoff)
        out.append(pam_modelled(gi, wi, model, P=P))
    return model, out


BREAK_KINDS = ("checkerboard", "poly_offset")


def break_structure(F: ModelledField, model: ModelInstance, kind: str,
                    amplitude: float = 1.0) -> Tuple[ModelledField, Tuple[Fraction, Tuple[int, ...]]]:
    """A copy of ``F`` that violates the structure condition in one known ``(alpha, k)``.

    ``"checkerboard"`` adds ``amplitude * sup|F^1| * (-1)^{n_last}`` (the
    Nyquist mode along the last axis) to the unit component; every
    low-pass ``S_N`` with ``N <= J_max`` removes it, so the ``k = 0``
    residual of sector 0 stays of order one at all scales.
    ``"poly_offset"`` adds ``amplitude * sup|F^{X^e}| * cos(2 pi x_0)`` to the
    first polynomial component ``X^e``, so the ``k = e`` residual of sector 0
    converges to a nonzero multiple of the offset instead of to zero.
    """
    space = F.space
    spec = F.spec
    comps = {name: F.component(name) for name in space.symbols}
    d = spec.d
    if kind == "checkerboard":
        u = comps[ModelSpace.UNIT]
        sign = (-1.0) ** np.indices(spec.N)[-1]
        comps[ModelSpace.UNIT] = u.with_samples(u.samples + amplitude * u.sup() * sign[None])
        target = (Fraction(0), (0,) * d)
    elif kind == "poly_offset":
        from .grading import parse_poly_symbol

        names = [n for n in space.symbols if (parse_poly_symbol(n) or (0,) * d) != (0,) * d]
        if not names:
            raise ModelError("the model has no polynomial symbols to offset")
        name = names[0]
        k = parse_poly_symbol(name)
        x0 = np.indices(spec.N)[0] / spec.N[0]
        comp = comps[name]
        offset = amplitude * comp.sup() * np.cos(2.0 * math.pi * x0)
        comps[name] = comp.with_samples(comp.samples + offset[None])
        target = (Fraction(0), tuple(int(v) for v in k))
    else:
        raise ModelError(f"unknown break kind {kind!r}; expected one of {BREAK_KINDS}")
    return ModelledField.from_components(space, comps), target


@dataclass
class FieldSuite:
    """The deterministic field family for one grid size."""

    spec: GridSpec
    trig: List[GridField]
    noise: GridField
    pam_model: ModelInstance
    pam: List[ModelledField]
    broken: List[Tuple[str, ModelledField]]

    def flatten(self) -> list:
        return list(self.trig) + [self.noise] + list(self.pam) + [f for _, f in self.broken]


def suite_size(config: RunConfig) -> int:
    return config.n_fields + 1 + config.n_pam_fields + len(BREAK_KINDS)


def build_suite(config: RunConfig, N: int, P: Optional[DyadicPartition] = None) -> FieldSuite:
    spec = config.spec(N)
    cutoff = N // config.cutoff_divisor
    P = P or build_partition(spec)
    trig = trig_fields(spec, config.gamma, config.n_fields, config.seed, cutoff)
    if config.structure == "pam":
        aI, g = config.alpha_I, config.gamma
    else:
        aI, g = Fraction(3, 4), Fraction(6, 5)
    model, pam = pam_suite(spec, aI, g, config.n_pam_fields, config.seed, cutoff, P)
    broken = [(kind, break_structure(pam[0], model, kind)[0]) for kind in BREAK_KINDS]
    return FieldSuite(spec, trig, model.params["noise"], model, pam, broken)


def generate_field_suite(config: RunConfig, N: Optional[int] = None) -> list:
    """Trigonometric fields, the synthetic noise, PAM fields and broken fields, in that order."""
    return build_suite(config, N or config.grids[0]).flatten()


def synthetic_chunks(spec: GridSpec, gamma: float, seed: int, kind: str = "annulus",
                     P: Optional[DyadicPartition] = None) -> Tuple[GridField, float]:
    """``f = sum_j f_j`` with ``f_j`` spectrally inside ``B_j`` (minus ``B_{j-1}`` for ``"annulus"``).

    Each chunk is a random trigonometric polynomial rescaled so that
    ``||f_j||_inf = 2^{-j gamma} u_j`` with ``u_j`` uniform in ``[1/2, 1]``.
    Returns the field and ``sup_j 2^{j gamma} ||f_j||_inf``.
    """
    if kind not in ("annulus", "box"):
        raise LPError(f"chunk kind must be 'annulus' or 'box', got {kind!r}")
    P = P or build_partition(spec)
    rng = np.random.default_rng([seed, 505])
    xi = np.stack(spec.freq_mesh(), axis=-1)
    total = np.zeros(spec.N)
    bound = 0.0
    for j in range(0, P.J_max):
        inside = P.box(j).contains(xi)
        if kind == "annulus":
            inside &= ~P.box(j - 1).contains(xi)
        coef = (rng.standard_normal(spec.N) + 1j * rng.standard_normal(spec.N)) * inside
        chunk = np.fft.ifftn(coef).real
        peak = np.max(np.abs(chunk))
        if peak == 0.0:
            continue
        target = 2.0 ** (-j * gamma) * rng.uniform(0.5, 1.0)
        chunk *= target / peak
        total += chunk
        bound = max(bound, 2.0 ** (j * gamma) * target)
    return GridField(spec, total[None]), bound


# checks ------------------------------------------------------------------------------------


@dataclass
class CheckResult:
    """Outcome of one check: measured value against a threshold, with a witness."""

    id: str
    status: str
    value: Optional[float]
    threshold: Optional[float]
    witness: dict = field(default_factory=dict)
    mandatory: bool = True
    details: dict = field(default_factory=dict)
    curves: Dict[str, str] = field(default_factory=dict)
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "status": self.status,
            "value": self.value,
            "threshold": self.threshold,
            "witness": _jsonable(self.witness),
            "mandatory": self.mandatory,
            "details": _jsonable(self.details),
            "message": self.message,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def _rows_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def balanced_grid(s: Sequence[int], J: int) -> Tuple[int, ...]:
    """Grid with ``N_i = 2^{(J+1) s_i + 1}``: every axis resolves exactly ``J_max = J``."""
    return tuple(2 ** ((J + 1) * si + 1) for si in s)


def _partition_specs(config: RunConfig, budget: int = 2**17) -> List[GridSpec]:
    """One balanced grid per configured scaling, as fine as ``budget`` lattice points allow."""
    out = []
    for s in config.partition_scalings:
        J = 1
        while math.prod(balanced_grid(s, J + 1)) <= budget:
            J += 1
        out.append(GridSpec(balanced_grid(s, J), ScalingVector(tuple(s))))
    return out


def check_partition_exactness(config: RunConfig) -> CheckResult:
    tol = config.tol("partition")
    worst, witness, rows = 0.0, {}, []
    overlaps = 0
    for spec in _partition_specs(config):
        P = build_partition(spec)
        total = np.sum(P.phi, axis=0)
        err = float(np.max(np.abs(total - 1.0)))
        bad_pairs = []
        for i in range(-1, P.J_max + 1):
            for j in range(i + 2, P.J_max + 1):
                if np.any(P.block(i) * P.block(j) != 0.0):
                    bad_pairs.append((i, j))
        overlaps += len(bad_pairs)
        rows.append([str(spec.s.s), str(spec.N), P.J_max, err, len(bad_pairs)])
        if err >= worst:
            worst = err
            witness = {"op": "build_partition", "N": list(spec.N), "s": list(spec.s.s),
                       "xi_index": [int(v) for v in np.unravel_index(int(np.argmax(np.abs(total - 1.0))), spec.N)]}
    ok = worst <= tol and overlaps == 0
    return CheckResult("partition_exactness", _status(ok), worst, tol, witness,
                       details={"overlapping_pairs": overlaps},
                       curves={"partition": _rows_csv(["s", "N", "J_max", "sum_error", "overlaps"], rows)})


def check_kernel_moments(config: RunConfig) -> CheckResult:
    tol = config.tol("moment_residual")
    worst_res, wrong, count, witness = 0.0, [], 0, {}
    for spec in _partition_specs(config):
        P = build_partition(spec)
        ks = index_set_below(Fraction(9, 2), spec.s)
        for kind in ("single", "low"):
            for j in range(0, min(P.J_max, 3) + 1):
                for k in ks:
                    for l in ks:
                        r = kernel_moment(P, kind, k, l, j)
                        count += 1
                        expect = float(factorial(k)) if (kind == "low" and tuple(k) == tuple(l)) else 0.0
                        if r.value != expect:
                            wrong.append((kind, j, k, l))
                        if r.residual >= worst_res:
                            worst_res = r.residual
                            witness = {"op": "kernel_moment", "s": list(spec.s.s), "N": list(spec.N), "kind": kind,
                                       "j": j, "k": list(k), "l": list(l)}
    ok = worst_res <= tol and not wrong
    return CheckResult("kernel_moments", _status(ok), worst_res, tol, witness,
                       details={"moments": count, "wrong_values": [list(map(str, w)) for w in wrong[:10]]})


def check_lp_reconstruction(config: RunConfig) -> CheckResult:
    tol = config.tol("reconstruction")
    worst, witness = 0.0, {}
    for spec in _partition_specs(config):
        P = build_partition(spec)
        cutoff = 2 ** P.J_max
        for i in range(20):
            f = make_synthetic_field(spec, 0.5, config.seed * 1000 + 300 + i, cutoff)
            total = sum((lp_block(f, j, P).samples for j in P.scales), np.zeros_like(f.samples))
            rel = float(np.max(np.abs(total - f.samples)) / np.max(np.abs(f.samples)))
            if rel >= worst:
                worst = rel
                witness = {"op": "lp_block", "s": list(spec.s.s), "N": list(spec.N), "field_seed": config.seed * 1000 + 300 + i,
                           "cutoff": cutoff}
    return CheckResult("lp_reconstruction", _status(worst <= tol), worst, tol, witness)


def check_taylor_crosscheck(config: RunConfig) -> CheckResult:
    tol = config.tol("taylor")
    worst, witness = 0.0, {}
    rng = np.random.default_rng([config.seed, 606])
    for spec in _partition_specs(config, budget=2**12):
        P = build_partition(spec)
        f = make_synthetic_field(spec, 2.0, config.seed * 1000 + 400, 2 ** P.J_max)
        for _ in range(100):
            while True:
                g = Fraction(int(rng.integers(4, 70)), 20)
                if g.denominator != 1:
                    break
            x = rng.uniform(0.0, 1.0, spec.d)
            rho = rng.uniform(0.05, 0.5)
            w = rng.dirichlet(np.ones(spec.d))
            h = rng.choice([-1.0, 1.0], spec.d) * (w * rho) ** np.asarray(spec.s.s, float)
            a = taylor_remainder(f, x, h, g, method="direct")[0, 0]
            b = taylor_remainder(f, x, h, g, method="integral", nodes=32)[0, 0]
            rel = abs(a - b) / max(abs(a), abs(b), 1e-300)
            if rel >= worst:
                worst = rel
                witness = {"op": "taylor_remainder", "s": list(spec.s.s), "N": list(spec.N), "x": x.tolist(),
                           "h": h.tolist(), "gamma": str(g), "direct": a, "integral": b}
    return CheckResult("taylor_crosscheck", _status(worst <= tol), worst, tol, witness)


def _bracket(ratios: Sequence[float]) -> Tuple[float, float]:
    return float(min(ratios)), float(max(ratios))


def _bracket_verdict(config: RunConfig, brackets: Dict[int, Tuple[float, float]]):
    """Spread at the coarsest grid and endpoint drift across each doubling."""
    grids = sorted(brackets)
    lo0, hi0 = brackets[grids[0]]
    spread = hi0 / lo0
    drift = 1.0
    for a, b in zip(grids, grids[1:]):
        for ea, eb in zip(brackets[a], brackets[b]):
            drift = max(drift, ea / eb, eb / ea)
    ok = spread <= config.tol("bracket") and drift <= config.tol("drift")
    return ok, spread, drift


def _equivalence_check(config: RunConfig, cid: str, numerator: Callable, label: str) -> CheckResult:
    rows, details = [], {}
    ok_all, worst_spread, worst_drift, witness = True, 0.0, 0.0, {}
    for gs in config.holder_gammas:
        g = as_fraction(gs)
        brackets = {}
        for N in config.grids[:2]:
            spec = config.spec(N)
            P = build_partition(spec)
            ratios = []
            for i, f in enumerate(trig_fields(spec, g, config.n_fields, config.seed, N // config.cutoff_divisor)):
                top = numerator(f, g, config.pair_sampler(i), spec)
                bottom = besov_norm(f, float(g), P).value
                ratios.append(top / bottom)
                rows.append([str(g), N, i, top, bottom, top / bottom])
            brackets[N] = _bracket(ratios)
        ok, spread, drift = _bracket_verdict(config, brackets)
        ok_all &= ok
        details[str(g)] = {"brackets": {str(N): list(b) for N, b in brackets.items()}, "spread": spread, "drift": drift}
        if spread / config.tol("bracket") >= worst_spread / config.tol("bracket"):
            worst_spread = spread
        worst_drift = max(worst_drift, drift)
        if not witness or spread >= witness.get("spread", 0):
            witness = {"op": label, "gamma": str(g), "grids": list(config.grids[:2]), "seed_base": config.seed * 1000,
                       "spread": spread}
    details["max_drift"] = worst_drift
    ok_all &= worst_drift <= config.tol("drift")
    return CheckResult(cid, _status(ok_all), worst_spread, config.tol("bracket"), witness, details=details,
                       curves={"ratios": _rows_csv(["gamma", "N", "field", "numerator", "besov", "ratio"], rows)})


def check_holder_besov(config: RunConfig) -> CheckResult:
    def num(f, g, sampler, spec):
        return holder_norm(f, float(g), sampler).value

    return _equivalence_check(config, "holder_besov_equivalence", num, "holder_norm/besov_norm")


def check_lift_equivalence(config: RunConfig) -> CheckResult:
    models: Dict[Fraction, ModelInstance] = {}

    def num(f, g, sampler, spec):
        m = models.setdefault(g, poly_model(spec.s, g))
        return dgamma_norm(poly_lift(f, g, m), m, sampler=sampler).value

    return _equivalence_check(config, "lift_equivalence", num, "dgamma_norm(poly_lift)/besov_norm")


def check_paraproduct_oracle(config: RunConfig) -> CheckResult:
    spec8 = GridSpec((8,) * 2, ScalingVector((1, 1)))
    P8 = build_partition(spec8)
    model8, fields8 = pam_suite(spec8, Fraction(3, 4), Fraction(6, 5), 2, config.seed, 3, P8)
    brute_err, witness = 0.0, {}
    for i, F in enumerate(fields8):
        for a in model8.space.homogeneities:
            fast = structure_para(F, model8, a, P8).samples
            slow = structure_para_bruteforce(F, model8, a, P8).samples
            err = float(np.max(np.abs(fast - slow)))
            if err >= brute_err:
                brute_err = err
                witness = {"op": "structure_para_bruteforce", "N": [8, 8], "field": i, "alpha": str(a)}
    N = 256 if 256 in config.grids else config.grids[-1]
    spec = GridSpec((N, N), ScalingVector((1, 1)))
    P = build_partition(spec)
    model, fields = pam_suite(spec, Fraction(3, 4), Fraction(6, 5), 2, config.seed, N // config.cutoff_divisor, P)
    bony_err = 0.0
    for F in fields:
        a = structure_para(F, model, 0, P).samples
        b = bony_para(F.component("I(Xi)"), model.params["noise"], P).samples
        bony_err = max(bony_err, float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)))
    ok = brute_err <= config.tol("identity") and bony_err <= config.tol("machine")
    return CheckResult("paraproduct_oracle", _status(ok), brute_err, config.tol("identity"), witness,
                       details={"bony_relative_error": bony_err, "bony_threshold": config.tol("machine"), "bony_N": N})


def check_spectral_annulus(config: RunConfig) -> CheckResult:
    leak, witness = 0.0, {}
    chunk_rows = []
    for N in config.grids[:2]:
        spec = config.spec(N)
        P = build_partition(spec)
        model, fields = pam_suite(spec, Fraction(3, 4), Fraction(6, 5), 3, config.seed, N // config.cutoff_divisor, P)
        for i, F in enumerate(fields):
            for a in model.space.homogeneities:
                log = ParaproductTermLog()
                structure_para(F, model, a, P, log)
                if log.leakage and max(log.leakage) >= leak:
                    p = int(np.argmax(log.leakage))
                    leak = float(log.leakage[p])
                    witness = {"op": "structure_para", "N": N, "field": i, "alpha": str(a), "j": log.scales[p],
                               "margin": log.margin}
            log = ParaproductTermLog()
            bony_para(F.component("1"), model.params["noise"], P, log)
            if max(log.leakage) >= leak:
                p = int(np.argmax(log.leakage))
                leak = float(log.leakage[p])
                witness = {"op": "bony_para", "N": N, "field": i, "j": log.scales[p], "margin": log.margin}
    constants: Dict[str, Dict[int, float]] = {}
    for gamma, kind in ((-0.5, "annulus"), (0.5, "annulus"), (0.5, "box")):
        key = f"{kind}:{gamma}"
        constants[key] = {}
        for N in config.grids[:2]:
            spec = config.spec(N)
            P = build_partition(spec)
            worst = 0.0
            for i in range(10):
                f, bound = synthetic_chunks(spec, gamma, config.seed * 1000 + 500 + i, kind, P)
                c = besov_norm(f, gamma, P).value / bound
                worst = max(worst, c)
                chunk_rows.append([kind, gamma, N, i, c])
            constants[key][N] = worst
    drift = 1.0
    for vals in constants.values():
        v = [vals[N] for N in config.grids[:2]]
        drift = max(drift, v[1] / v[0], v[0] / v[1])
    ok = leak <= config.tol("leakage") and drift <= config.tol("drift")
    return CheckResult("spectral_annulus", _status(ok), leak, config.tol("leakage"), witness,
                       details={"chunk_constants": {k: {str(N): c for N, c in v.items()} for k, v in constants.items()},
                                "chunk_drift": drift, "drift_threshold": config.tol("drift")},
                       curves={"chunks": _rows_csv(["kind", "gamma", "N", "field", "constant"], chunk_rows)})


def _decay_cases(config: RunConfig, spec: GridSpec, P: DyadicPartition, gate: bool):
    """Yield ``(label, model, field)`` for the decay check."""
    dc = config.decay
    cutoff = spec.N[0] // dc.cutoff_divisor
    if gate:
        for gs in dc.poly_gammas:
            g = as_fraction(gs)
            m = poly_model(spec.s, g)
            for i in range(dc.fields):
                f = make_synthetic_field(spec, float(g), config.seed * 1000 + 700 + i, cutoff)
                yield f"poly:{g}:{i}", m, poly_lift(f, g, m)
    pairs = dc.pam if gate else dc.report_only_pam
    for aI, gs in pairs:
        m, fields = pam_suite(spec, aI, gs, dc.fields, config.seed + 1, cutoff, P, PAM_EDGE_OFFSETS)
        for i, F in enumerate(fields):
            yield f"pam:{aI}:{gs}:{i}", m, F


def _decay_points(config: RunConfig, spec: GridSpec, label: str) -> np.ndarray:
    rng = np.random.default_rng([config.seed, 808, sum(label.encode())])
    return rng.integers(0, np.asarray(spec.N), size=(config.decay.points, spec.d))


def _run_decay(config: RunConfig, gate: bool) -> Tuple[bool, float, dict, dict, Dict[str, str]]:
    dc = config.decay
    spec = GridSpec((dc.N,) * dc.d, ScalingVector((1,) * dc.d))
    P = build_partition(spec)
    slack = config.tol("exponent_slack")
    ok, worst_dev, witness = True, 0.0, {}
    details: Dict[str, list] = {"fits": [], "broken": []}
    rows = []
    last = None
    for label, m, F in _decay_cases(config, spec, P, gate):
        pts = _decay_points(config, spec, label)
        for a, k in admissible_residual_pairs(m):
            c = residual_curve(F, m, pts, a, k, P)
            dev = math.inf if c.exponent is None else abs(c.exponent - c.expected)
            ok &= dev <= slack
            details["fits"].append({"field": label, "alpha": str(a), "k": list(k), "expected": c.expected,
                                    "exponent": c.exponent})
            for n, v in zip(c.scales, c.values):
                rows.append([label, str(a), str(k), n, v])
            if dev >= worst_dev:
                worst_dev = dev
                witness = {"op": "residual_curve", "field": label, "alpha": str(a), "k": list(k), "N_grid": dc.N,
                           "d": dc.d, "points": pts.tolist()}
        last = (label, m, F)
        if gate and label.startswith("pam") and label.endswith(":0"):
            for kind in BREAK_KINDS:
                Fb, (a, k) = break_structure(F, m, kind, dc.break_amplitude)
                c = residual_curve(Fb, m, pts, a, k, P)
                bad = c.exponent is None or c.exponent > config.tol("broken_exponent")
                ok &= not bad
                details["broken"].append({"field": label, "break": kind, "alpha": str(a), "k": list(k),
                                          "exponent": c.exponent})
                for n, v in zip(c.scales, c.values):
                    rows.append([f"{label}:{kind}", str(a), str(k), n, v])
    if last is None:
        ok = False
    return ok, worst_dev, witness, details, {"residuals": _rows_csv(["field", "alpha", "k", "N", "residual"], rows)}


def check_structure_decay(config: RunConfig) -> CheckResult:
    ok, dev, witness, details, curves = _run_decay(config, gate=True)
    details["broken_threshold"] = config.tol("broken_exponent")
    return CheckResult("structure_decay", _status(ok), dev, config.tol("exponent_slack"), witness,
                       details=details, curves=curves)


def check_structure_decay_reference(config: RunConfig) -> CheckResult:
    ok, dev, witness, details, curves = _run_decay(config, gate=False)
    return CheckResult("structure_decay_reference", _status(ok), dev, config.tol("exponent_slack"), witness,
                       mandatory=False, details=details, curves=curves,
                       message="informational: PAM at the reference parameters, not part of the overall status")


def check_norm_equivalence(config: RunConfig) -> CheckResult:
    grids = config.grids[:2]
    ratios: Dict[int, List[float]] = {}
    norms: Dict[int, List[Tuple[float, float]]] = {}
    flags_ok = True
    broken_info: Dict[str, dict] = {kind: {} for kind in BREAK_KINDS}
    base_profile: Dict[int, float] = {}
    rows = []
    for N in grids:
        spec = config.spec(N)
        P = build_partition(spec)
        suite = build_suite(config, N, P)
        model = suite.pam_model if config.structure == "pam" else poly_model(spec.s, config.gamma)
        fields = suite.pam if config.structure == "pam" else [poly_lift(f, config.gamma, model) for f in suite.trig]
        fields = fields[: config.n_pam_fields]
        ratios[N], norms[N] = [], []
        for i, F in enumerate(fields):
            dg = dgamma_norm(F, model, sampler=config.pair_sampler(i)).value
            bg = bgamma_norm(F, model, P=P, seed=i)
            flags_ok &= bool(bg.flags.get("ok", True))
            ratios[N].append(dg / bg.value)
            norms[N].append((dg, bg.value))
            rows.append([N, i, dg, bg.value, dg / bg.value, int(bg.flags.get("ok", True))])
        base_profile[N] = dgamma_scale_profile(fields[0], model, [0])[0]
        if config.structure == "pam":
            for kind in BREAK_KINDS:
                Fb, target = break_structure(fields[0], model, kind)
                bg = bgamma_norm(Fb, model, P=P, seed=0)
                broken_info[kind][N] = {"flag_ok": bool(bg.flags["ok"]),
                                        "finest_ratio": dgamma_scale_profile(Fb, model, [0])[0]}
    brackets = {N: _bracket(r) for N, r in ratios.items()}
    ok, spread, drift = _bracket_verdict(config, brackets)
    growth = 1.0
    for i in range(len(norms[grids[0]])):
        for col in (0, 1):
            growth = max(growth, norms[grids[1]][i][col] / norms[grids[0]][i][col])
    finite = growth <= config.tol("growth")
    base_growth = base_profile[grids[1]] / base_profile[grids[0]]
    two_sided = True
    for kind, info in broken_info.items():
        if not info:
            continue
        g_b = info[grids[1]]["finest_ratio"] / info[grids[0]]["finest_ratio"]
        info["growth"] = g_b
        info["fails_flag"] = not any(info[N]["flag_ok"] for N in grids)
        two_sided &= info["fails_flag"] and g_b >= config.tol("broken_growth_margin") * max(1.0, base_growth)
    all_ok = ok and finite and flags_ok and two_sided
    witness = {"op": "dgamma_norm/bgamma_norm", "structure": config.structure, "gamma": str(config.gamma),
               "alpha_I": str(config.alpha_I), "grids": list(grids), "seed": config.seed}
    details = {
        "brackets": {str(N): list(b) for N, b in brackets.items()},
        "spread": spread,
        "drift": drift,
        "norm_growth": growth,
        "growth_threshold": config.tol("growth"),
        "good_fields_pass_flag": flags_ok,
        "base_finest_ratio_growth": base_growth,
        "broken": {k: {str(n): v for n, v in info.items()} for k, info in broken_info.items()},
    }
    return CheckResult("norm_equivalence", _status(all_ok), spread, config.tol("bracket"), witness, details=details,
                       curves={"ratios": _rows_csv(["N", "field", "dgamma", "bgamma", "ratio", "flag_ok"], rows)})


CHECKS: Dict[str, Callable[[RunConfig], CheckResult]] = {
    "partition_exactness": check_partition_exactness,
    "kernel_moments": check_kernel_moments,
    "lp_reconstruction": check_lp_reconstruction,
    "taylor_crosscheck": check_taylor_crosscheck,
    "holder_besov_equivalence": check_holder_besov,
    "lift_equivalence": check_lift_equivalence,
    "paraproduct_oracle": check_paraproduct_oracle,
    "spectral_annulus": check_spectral_annulus,
    "structure_decay": check_structure_decay,
    "norm_equivalence": check_norm_equivalence,
    "structure_decay_reference": check_structure_decay_reference,
}


# report ------------------------------------------------------------------------------------


@dataclass
class VerificationReport:
    """Per-check results plus an environment fingerprint.

    ``timings`` (seconds per check) is kept out of the serialized report so
    that identical configurations produce identical files apart from
    ``generated_at``.
    """

    checks: Dict[str, CheckResult]
    config: RunConfig
    environment: dict
    generated_at: str
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values() if c.mandatory)

    @property
    def status(self) -> str:
        return _status(self.passed)

    def to_json(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "status": self.status,
            "checks": {cid: self.checks[cid].to_json() for cid in sorted(self.checks)},
            "environment": self.environment,
            "config": self.config.to_json(),
            "generated_at": self.generated_at,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def summary_lines(self) -> List[str]:
        out = []
        for cid in CHECKS:
            if cid not in self.checks:
                continue
            c = self.checks[cid]
            tag = c.status.upper() + ("" if c.mandatory else " (informational)")
            val = "n/a" if c.value is None else f"{c.value:.3e}"
            thr = "n/a" if c.threshold is None else f"{c.threshold:.3e}"
            out.append(f"{tag:<6} {cid}: value={val} threshold={thr}" + (f" {c.message}" if c.message else ""))
        return out

    def write(self, report_path: Optional[str] = None, curves_dir: Optional[str] = None):
        report_path = report_path or self.config.report_path
        curves_dir = curves_dir or self.config.curves_dir
        if report_path:
            with open(report_path, "w", encoding="utf-8") as fh:
                fh.write(self.dumps() + "\n")
        if curves_dir:
            os.makedirs(curves_dir, exist_ok=True)
            for cid, c in self.checks.items():
                for name, text in c.curves.items():
                    with open(os.path.join(curves_dir, f"{cid}__{name}.csv"), "w", encoding="utf-8") as fh:
                        fh.write(text)


def environment_fingerprint(config: RunConfig) -> dict:
    from . import __version__

    return {"seed": config.seed, "version": __version__, "backend": kernels.BACKEND, "numpy": np.__version__}


def worker_count(config: RunConfig) -> int:
    value = os.environ.get(CHECK_WORKERS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise ConfigError(f"{CHECK_WORKERS_ENV} must be an integer, got {value!r}") from None
    return config.workers


def _run_one(cid: str, config: RunConfig) -> Tuple[CheckResult, float]:
    t0 = time.perf_counter()
    try:
        result = CHECKS[cid](config)
    except Exception as exc:  # construction errors become failed checks
        result = CheckResult(cid, "error", None, None, message=f"{type(exc).__name__}: {exc}",
                             details={"traceback": traceback.format_exc(limit=4)})
        if cid == "structure_decay_reference":
            result.mandatory = False
    return result, time.perf_counter() - t0


def run_verification(config: RunConfig, write: bool = True) -> VerificationReport:
    """Run the selected checks and return (and optionally write) the report."""
    ids = list(config.checks) if config.checks is not None else list(CHECKS)
    workers = min(worker_count(config), len(ids))
    results: Dict[str, CheckResult] = {}
    timings: Dict[str, float] = {}
    if workers <= 1:
        for cid in ids:
            results[cid], timings[cid] = _run_one(cid, config)
    else:
        with futures.ThreadPoolExecutor(max_workers=workers) as pool:
            jobs = {pool.submit(_run_one, cid, config): cid for cid in ids}
            for job in futures.as_completed(jobs):
                cid = jobs[job]
                results[cid], timings[cid] = job.result()
    report = VerificationReport(
        checks={cid: results[cid] for cid in ids},
        config=config,
        environment=environment_fingerprint(config),
        generated_at=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        timings=timings,
    )
    if write:
        report.write()
    return report
