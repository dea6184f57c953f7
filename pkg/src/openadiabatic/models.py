"""Ready-made generators and model files.

The two-level model has ``H = (omega/2) sigma_z`` with Lindblad operators
``eps(s) sigma_-`` (spontaneous emission, ``sigma_- = sigma_x - i sigma_y``)
and ``gamma(s) sigma_x`` (bit flip).  With ``omega`` locked to ``gamma^2``
its supermatrix has eigenvalues ``0``, ``-2 eps^2 - gamma^2`` (one 2x2 block)
and ``-4 eps^2 - 2 gamma^2``.
"""
from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ModelError
from .lindblad import Schedule, TimeDependentOperator, TimeDependentSuperoperator

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = SIGMA_X - 1j * SIGMA_Y

BUNDLED = ("two_level_constant", "two_level_fig1", "two_level_symmetric")
FIG1_SLOPES = (0.0, 0.1, 0.2, 0.3)
FIG1_EPS0 = 1.0
FIG1_GAMMA0 = 0.5


@dataclass(frozen=True, eq=False)
class TwoLevelModel:
    """Spontaneous emission plus bit flip on a qubit.

    ``omega=None`` locks the level splitting to ``gamma(s)**2``.
    """

    epsilon: Schedule
    gamma: Schedule
    omega: Schedule = None
    total_time: float = 1.0

    def __post_init__(self):
        for name in ("epsilon", "gamma"):
            if _schedule_min(getattr(self, name)) <= 0:
                raise ModelError(f"{name} must be positive on [0, 1]")
        if self.omega is None and self.gamma.kind != "poly":
            raise ModelError("omega locked to gamma^2 needs a polynomial gamma schedule")
        if not self.total_time > 0:
            raise ModelError("total_time must be positive")

    @property
    def locked(self) -> bool:
        return self.omega is None

    def omega_schedule(self) -> Schedule:
        return self.gamma * self.gamma if self.locked else self.omega

    def f(self, s: float) -> float:
        """``-1 - gamma^2 / (2 eps^2)``."""
        e, g = self.epsilon(s), self.gamma(s)
        return -1.0 - g * g / (2.0 * e * e)

    def eigenvalues(self, s: float) -> tuple:
        e, g = self.epsilon(s), self.gamma(s)
        return 0.0, -2 * e * e - g * g, -4 * e * e - 2 * g * g

    def with_total_time(self, T: float) -> "TwoLevelModel":
        return TwoLevelModel(self.epsilon, self.gamma, self.omega, T)


def _schedule_min(sched: Schedule) -> float:
    if sched.kind == "table":
        return min(v for _, v in sched.knots)
    return float(sched.evaluate(np.linspace(0, 1, 2001)).min())


def build_two_level(model: TwoLevelModel) -> TimeDependentSuperoperator:
    H = TimeDependentOperator(((SIGMA_Z / 2, model.omega_schedule()),))
    ops = (
        TimeDependentOperator(((SIGMA_MINUS, model.epsilon),)),
        TimeDependentOperator(((SIGMA_X, model.gamma),)),
    )
    return TimeDependentSuperoperator(2, H, ops, model.total_time)


def constant_two_level(eps: float = 1.0, gamma: float = 0.5, total_time: float = 1.0) -> TwoLevelModel:
    return TwoLevelModel(Schedule.constant(eps), Schedule.constant(gamma), None, total_time)


def fig1_model(a: float, total_time: float = 1.0, eps0: float = FIG1_EPS0, gamma0: float = FIG1_GAMMA0) -> TwoLevelModel:
    """``eps = eps0 + a t`` and ``gamma = gamma0 + a t`` with ``t = s T``."""
    return TwoLevelModel(
        Schedule.linear(eps0, a * total_time), Schedule.linear(gamma0, a * total_time), None, total_time
    )


def symmetric_model(c: float = 2.0, gamma0: float = 0.5, slope: float = 0.3, total_time: float = 1.0) -> TwoLevelModel:
    """``eps = c gamma`` with linear ``gamma``."""
    return TwoLevelModel(
        Schedule.linear(c * gamma0, c * slope), Schedule.linear(gamma0, slope), None, total_time
    )


def analytic_solution(model: TwoLevelModel, r0, t) -> np.ndarray:
    """Block coefficients ``(r_1, r_2^(0), r_2^(1), r_3)`` for constant schedules.

    ``t`` may be a scalar or an array of physical times.
    """
    if not (model.epsilon.is_constant and model.gamma.is_constant and (model.locked or model.omega.is_constant)):
        raise ModelError("closed-form coefficients need constant schedules")
    if not model.locked:
        raise ModelError("closed-form coefficients assume omega = gamma^2")
    r0 = np.asarray(r0, dtype=complex)
    t = np.asarray(t, dtype=float)
    _, l2, l3 = model.eigenvalues(0.0)
    e2, e3 = np.exp(l2 * t), np.exp(l3 * t)
    return np.stack(
        [np.full_like(e2, r0[0], dtype=complex), (r0[2] * t + r0[1]) * e2, r0[2] * e2, r0[3] * e3], axis=-1
    )


def bloch_solution(model: TwoLevelModel, v0, t) -> np.ndarray:
    """Closed-form Bloch components for constant schedules, shape (..., 3)."""
    analytic_solution(model, np.zeros(4), 0.0)
    v0 = np.asarray(v0, dtype=float)
    t = np.asarray(t, dtype=float)
    g2 = model.gamma(0.0) ** 2
    _, l2, l3 = model.eigenvalues(0.0)
    inv_f = 1.0 / model.f(0.0)
    sec = (v0[0] - v0[1]) * g2 * t
    vx = (v0[0] + sec) * np.exp(l2 * t)
    vy = (v0[1] + sec) * np.exp(l2 * t)
    vz = (v0[2] - inv_f) * np.exp(l3 * t) + inv_f
    return np.stack([vx, vy, vz], axis=-1)


def symmetry_condition_value(model: TwoLevelModel, s: float) -> float:
    """``|2 gamma^2 eps'/eps - 2 gamma gamma'| / (gamma^2 + 2 eps^2)`` with t-derivatives."""
    if model.epsilon.is_knot(s) or model.gamma.is_knot(s):
        raise ModelError(f"schedules are not differentiable at s={s}")
    e, g = model.epsilon(s), model.gamma(s)
    de = model.epsilon.derivative(s) / model.total_time
    dg = model.gamma.derivative(s) / model.total_time
    return abs(2 * g * g * de / e - 2 * g * dg) / (g * g + 2 * e * e)


# ------------------------------------------------------------------- files


def _matrix_to_json(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]


def _terms_to_json(op: TimeDependentOperator) -> dict:
    return {"terms": [{"matrix": _matrix_to_json(m), "schedule": s.to_dict()} for m, s in op.terms]}


def model_to_dict(gen: TimeDependentSuperoperator) -> dict:
    out = {
        "dimension": gen.dimension,
        "total_time": gen.total_time,
        "hamiltonian": _terms_to_json(gen.hamiltonian),
        "lindblad": [_terms_to_json(op) for op in gen.lindblad_ops],
    }
    if gen.raw_terms:
        out["raw"] = {"terms": [{"matrix": m.tolist(), "schedule": s.to_dict()} for m, s in gen.raw_terms]}
    return out


_LEAF = re.compile(r"\[\s*([^\[\]{}]*?)\s*\]")
_ROW = re.compile(r"\[\s*((?:\[[^\[\]]*\],?\s*)+)\]")


def _compact(text: str) -> str:
    """Put numeric arrays (and rows of [re, im] pairs) on single lines."""
    text = _LEAF.sub(lambda m: "[" + re.sub(r"\s+", " ", m.group(1)).replace(" ,", ",") + "]", text)
    return _ROW.sub(lambda m: "[" + re.sub(r",\s+", ", ", m.group(1).strip()) + "]", text)


def save_model(gen: TimeDependentSuperoperator, path) -> None:
    """Write a model file atomically."""
    path = Path(path)
    text = _compact(json.dumps(model_to_dict(gen), indent=2))
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text + "\n")
    os.replace(tmp, path)


def _field(where, msg):
    return ModelError(f"{where}: {msg}")


def _parse_schedule(obj, where) -> Schedule:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise _field(where, "expected an object with a 'kind' key")
    kind = obj["kind"]
    try:
        if kind == "poly":
            coeffs = obj.get("coeffs")
            if not isinstance(coeffs, list) or not coeffs:
                raise _field(where + ".coeffs", "expected a non-empty list of numbers")
            return Schedule.poly([_number(c, f"{where}.coeffs[{k}]") for k, c in enumerate(coeffs)])
        if kind == "table":
            knots = obj.get("knots")
            if not isinstance(knots, list):
                raise _field(where + ".knots", "expected a list of [s, value] pairs")
            pairs = []
            for k, kn in enumerate(knots):
                if not isinstance(kn, list) or len(kn) != 2:
                    raise _field(f"{where}.knots[{k}]", "expected an [s, value] pair")
                pairs.append((_number(kn[0], f"{where}.knots[{k}][0]"), _number(kn[1], f"{where}.knots[{k}][1]")))
            return Schedule.table(pairs)
    except ModelError as err:
        if str(err).startswith(where):
            raise
        raise _field(where, str(err)) from None
    raise _field(where + ".kind", f"unknown schedule kind {kind!r}")


def _number(x, where) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise _field(where, f"expected a number, got {x!r}")
    return float(x)


def _parse_complex_matrix(obj, D, where) -> np.ndarray:
    if not isinstance(obj, list) or len(obj) != D:
        raise _field(where, f"expected {D} rows")
    m = np.zeros((D, D), dtype=complex)
    for a, row in enumerate(obj):
        if not isinstance(row, list) or len(row) != D:
            raise _field(f"{where}[{a}]", f"expected {D} entries")
        for b, z in enumerate(row):
            if not isinstance(z, list) or len(z) != 2:
                raise _field(f"{where}[{a}][{b}]", "expected a [re, im] pair")
            m[a, b] = complex(_number(z[0], f"{where}[{a}][{b}][0]"), _number(z[1], f"{where}[{a}][{b}][1]"))
    return m


def _parse_operator(obj, D, where, hermitian=False) -> TimeDependentOperator:
    if not isinstance(obj, dict) or not isinstance(obj.get("terms"), list):
        raise _field(where, "expected an object with a 'terms' list")
    terms = []
    for k, t in enumerate(obj["terms"]):
        w = f"{where}.terms[{k}]"
        if not isinstance(t, dict) or "matrix" not in t or "schedule" not in t:
            raise _field(w, "expected 'matrix' and 'schedule'")
        m = _parse_complex_matrix(t["matrix"], D, w + ".matrix")
        if hermitian and not np.allclose(m, m.conj().T, atol=1e-12):
            raise _field(w + ".matrix", "Hamiltonian matrices must be Hermitian")
        terms.append((m, _parse_schedule(t["schedule"], w + ".schedule")))
    return TimeDependentOperator(tuple(terms))


def model_from_dict(obj: dict) -> TimeDependentSuperoperator:
    if not isinstance(obj, dict):
        raise ModelError("model file must contain a JSON object")
    unknown = set(obj) - {"dimension", "total_time", "hamiltonian", "lindblad", "raw", "name", "description"}
    if unknown:
        raise ModelError(f"unknown keys: {sorted(unknown)}")
    D = obj.get("dimension")
    if isinstance(D, bool) or not isinstance(D, int):
        raise _field("dimension", "expected an integer")
    T = _number(obj.get("total_time", 1.0), "total_time")
    H = _parse_operator(obj.get("hamiltonian", {"terms": []}), D, "hamiltonian", hermitian=True)
    lind = obj.get("lindblad", [])
    if not isinstance(lind, list):
        raise _field("lindblad", "expected a list")
    ops = tuple(_parse_operator(op, D, f"lindblad[{k}]") for k, op in enumerate(lind))
    raw = []
    if "raw" in obj:
        r = obj["raw"]
        if not isinstance(r, dict) or not isinstance(r.get("terms"), list):
            raise _field("raw", "expected an object with a 'terms' list")
        for k, t in enumerate(r["terms"]):
            w = f"raw.terms[{k}]"
            if not isinstance(t, dict) or "matrix" not in t or "schedule" not in t:
                raise _field(w, "expected 'matrix' and 'schedule'")
            try:
                m = np.array(t["matrix"], dtype=float)
            except (TypeError, ValueError):
                raise _field(w + ".matrix", "expected a real square matrix") from None
            if m.shape != (D * D, D * D):
                raise _field(w + ".matrix", f"expected shape {(D * D, D * D)}, got {m.shape}")
            raw.append((m, _parse_schedule(t["schedule"], w + ".schedule")))
    return TimeDependentSuperoperator(D, H, ops, T, tuple(raw))


def bundled_path(name: str):
    return resources.files("openadiabatic").joinpath("data", f"{name}.json")


def load_model(path_or_name) -> TimeDependentSuperoperator:
    """Load a model file, or one of the bundled models by name."""
    name = str(path_or_name)
    if name in BUNDLED:
        text = bundled_path(name).read_text()
        where = name
    else:
        p = Path(name)
        if not p.is_file():
            raise ModelError(f"no model file or bundled model named {name!r}")
        text = p.read_text()
        where = str(p)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise ModelError(f"{where}: line {err.lineno} column {err.colno}: {err.msg}") from None
    try:
        return model_from_dict(obj)
    except ModelError as err:
        raise ModelError(f"{where}: {err}") from None


def bundled_two_level(name: str) -> TwoLevelModel:
    """The :class:`TwoLevelModel` behind a bundled file."""
    if name == "two_level_constant":
        return constant_two_level()
    if name == "two_level_fig1":
        return fig1_model(0.3)
    if name == "two_level_symmetric":
        return symmetric_model()
    raise ModelError(f"unknown bundled model {name!r}")


def write_bundled(directory) -> None:
    for name in BUNDLED:
        save_model(build_two_level(bundled_two_level(name)), Path(directory) / f"{name}.json")


# ------------------------------------------------------------ random models


def random_generator(rng, dimension: int, n_lindblad: int = 2, time_dependent: bool = True, total_time: float = 1.0):
    """Random Lindblad generator with polynomial schedules of degree <= 2."""

    def herm():
        a = rng.normal(size=(dimension, dimension)) + 1j * rng.normal(size=(dimension, dimension))
        return (a + a.conj().T) / 2

    def sched():
        c0 = rng.uniform(0.5, 1.5)
        if not time_dependent:
            return Schedule.constant(c0)
        return Schedule.poly([c0, rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3)])

    H = TimeDependentOperator(((herm(), sched()), (herm(), sched())))
    ops = []
    for _ in range(n_lindblad):
        g = (rng.normal(size=(dimension, dimension)) + 1j * rng.normal(size=(dimension, dimension))) / 2
        ops.append(TimeDependentOperator(((g, sched()),)))
    return TimeDependentSuperoperator(dimension, H, tuple(ops), total_time)
