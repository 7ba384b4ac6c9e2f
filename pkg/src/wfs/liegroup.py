"""Matrix Lie groups, the evolution map and the pointwise evolution Theta.

The evolution equation eta' = eta . gamma is read as right multiplication
eta(t) gamma(t) (left-translated tangent vectors), integrated with classical
fixed-step RK4. SO(3) iterates are pulled back to the group after each step
by the orthogonal polar factor; GL(n) and UT(n) iterates are left alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import expm, logm

from wfs.core.domain import full_space, product_domain, unit_interval
from wfs.core.grid import Grid, GridFunction
from wfs.core.multiindex import multi_indices
from wfs.core.seminorm import SeminormSpec, sup_norm, weighted_seminorm_ck
from wfs.errors import HypothesisViolated, NotInvertible, OutsideChart, SingularStep
from wfs.explaw import curry, flip, uncurry, CurriedGridFunction

LOG_RADIUS = 0.5
EXP_RADIUS = float(np.log(2.0))


@dataclass(frozen=True)
class MatrixGroupSpec:
    """GL(n), SO(3) or the unipotent upper-triangular group UT(n)."""

    name: str
    n: int
    tol: float = 1e-10

    def __post_init__(self):
        if self.name not in ("GL", "SO", "UT"):
            raise ValueError(f"unknown group {self.name!r}")
        if self.name == "SO" and self.n != 3:
            raise ValueError("only SO(3) is supported")

    @property
    def label(self) -> str:
        return f"{self.name.lower()}{self.n}"

    def identity(self) -> np.ndarray:
        return np.eye(self.n)

    def contains(self, m, tol: Optional[float] = None) -> bool:
        m = np.asarray(m, dtype=float)
        tol = self.tol if tol is None else tol
        if self.name == "GL":
            return abs(np.linalg.det(m)) > tol
        if self.name == "SO":
            return orthogonality_defect(m) <= tol and np.linalg.det(m) > 0
        return bool(np.abs(np.tril(m, -1)).max(initial=0.0) <= tol
                    and np.abs(np.diag(m) - 1.0).max() <= tol)

    def project_algebra(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if self.name == "SO":
            return 0.5 * (a - np.swapaxes(a, -1, -2))
        if self.name == "UT":
            return np.triu(a, 1)
        return a.copy()

    def algebra_contains(self, a, tol: float = 1e-12) -> bool:
        a = np.asarray(a, dtype=float)
        return bool(np.abs(a - self.project_algebra(a)).max(initial=0.0) <= tol * max(1.0, np.abs(a).max(initial=0.0)))

    def reproject(self, m: np.ndarray) -> np.ndarray:
        """Nearest group element for SO(3) (orthogonal polar factor); identity map otherwise."""
        if self.name != "SO":
            return m
        u, _, vt = np.linalg.svd(m)
        return u @ vt


def group_spec(label: str) -> MatrixGroupSpec:
    """'gl3', 'so3' or 'ut3' (any size n for gl/ut)."""
    label = label.lower()
    for prefix in ("gl", "so", "ut"):
        if label.startswith(prefix) and label[2:].isdigit():
            return MatrixGroupSpec(prefix.upper(), int(label[2:]))
    raise ValueError(f"unknown group label {label!r}")


def orthogonality_defect(m) -> float:
    m = np.asarray(m, dtype=float)
    return float(np.abs(m.T @ m - np.eye(m.shape[0])).max())


def random_algebra_element(group: MatrixGroupSpec, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    return group.project_algebra(scale * rng.standard_normal((group.n, group.n)))


# -- curves -----------------------------------------------------------------------


@dataclass
class AlgebraCurve:
    """Lie-algebra valued curve on [0,1]: node values plus, optionally, a closed form.

    Between time nodes the curve is a componentwise cubic spline unless ``func``
    (t -> matrix) is given.
    """

    times: np.ndarray
    values: np.ndarray
    group: MatrixGroupSpec
    func: Optional[Callable[[float], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.ascontiguousarray(self.times, dtype=float)
        self.values = np.ascontiguousarray(self.values, dtype=float)
        n = self.group.n
        if self.values.shape != (len(self.times), n, n):
            raise ValueError(f"values of shape {self.values.shape} for {len(self.times)} times of {n}x{n}")
        if not self.group.algebra_contains(self.values):
            raise ValueError(f"curve leaves the Lie algebra of {self.group.label}")
        self._spline = None

    @classmethod
    def from_function(cls, func, group: MatrixGroupSpec, count: int = 11) -> "AlgebraCurve":
        times = np.linspace(0.0, 1.0, count)
        return cls(times, np.array([func(t) for t in times]), group, func)

    @classmethod
    def constant(cls, a, group: MatrixGroupSpec, count: int = 11) -> "AlgebraCurve":
        a = np.asarray(a, dtype=float)
        return cls.from_function(lambda t: a, group, count)

    def evaluate(self, ts) -> np.ndarray:
        """Curve values at the times ``ts``, shape (len(ts), n, n)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.func is not None:
            return np.array([self.func(t) for t in ts], dtype=float)
        if self._spline is None:
            self._spline = CubicSpline(self.times, self.values, axis=0)
        return self._spline(ts)


@dataclass
class GroupCurve:
    times: np.ndarray
    values: np.ndarray
    group: MatrixGroupSpec
    defects: np.ndarray = field(default=None, repr=False)

    def endpoint(self) -> np.ndarray:
        return self.values[-1]

    def to_grid_function(self) -> GridFunction:
        grid = Grid(((0.0, 1.0),), (len(self.times),))
        n = self.group.n
        return GridFunction(grid, unit_interval(), self.values.reshape(len(self.times), n * n),
                            np.ones(grid.counts, dtype=bool))


def evolve(gamma: AlgebraCurve, steps: int, det_tol: float = 1e-12) -> GroupCurve:
    """RK4 for eta' = eta gamma(t), eta(0) = I, on ``steps`` equal steps of [0,1]."""
    if steps < len(gamma.times) - 1:
        raise ValueError("steps must be at least the number of time intervals of the curve")
    group = gamma.group
    h = 1.0 / steps
    t = np.arange(steps + 1) * h
    stage = gamma.evaluate(np.concatenate([t, t[:-1] + 0.5 * h]))
    at_node, at_mid = stage[: steps + 1], stage[steps + 1:]
    eta = group.identity()
    out = np.empty((steps + 1, group.n, group.n))
    out[0] = eta
    defects = np.zeros(steps)
    for i in range(steps):
        g0, gm, g1 = at_node[i], at_mid[i], at_node[i + 1]
        k1 = eta @ g0
        k2 = (eta + 0.5 * h * k1) @ gm
        k3 = (eta + 0.5 * h * k2) @ gm
        k4 = (eta + h * k3) @ g1
        eta = eta + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if group.name == "SO":
            defects[i] = orthogonality_defect(eta)
            eta = group.reproject(eta)
        if abs(np.linalg.det(eta)) < det_tol:
            raise SingularStep(f"|det eta| < {det_tol:g} at t = {t[i + 1]:g}")
        out[i + 1] = eta
    return GroupCurve(t, out, group, defects)


def evol(gamma: AlgebraCurve, steps: int = 1000) -> np.ndarray:
    return evolve(gamma, steps).endpoint()


# -- chart at the identity ----------------------------------------------------------


def chart_log(h) -> np.ndarray:
    """Matrix logarithm on {||h - I||_2 < 1/2}; exactly 0 at the identity."""
    h = np.asarray(h, dtype=float)
    eye = np.eye(h.shape[0])
    dist = np.linalg.norm(h - eye, 2)
    if not dist < LOG_RADIUS:
        raise OutsideChart(f"||h - I|| = {dist:g} is not below {LOG_RADIUS}")
    if dist == 0.0:
        return np.zeros_like(h)
    return np.real(logm(h))


def chart_exp(w) -> np.ndarray:
    """Matrix exponential on {||w||_2 < log 2}."""
    w = np.asarray(w, dtype=float)
    size = np.linalg.norm(w, 2)
    if not size < EXP_RADIUS:
        raise OutsideChart(f"||w|| = {size:g} is not below log 2")
    return expm(w)


# -- mapping groups ------------------------------------------------------------------


@dataclass
class GroupGrid:
    """Group-valued grid function: one n x n matrix per node of ``grid``."""

    grid: Grid
    values: np.ndarray
    group: MatrixGroupSpec

    def __post_init__(self):
        if self.values.shape != self.grid.counts + (self.group.n, self.group.n):
            raise ValueError("values do not match grid and group size")

    @classmethod
    def identity(cls, grid: Grid, group: MatrixGroupSpec) -> "GroupGrid":
        return cls(grid, np.broadcast_to(np.eye(group.n), grid.counts + (group.n, group.n)).copy(), group)

    def members(self, tol: Optional[float] = None) -> bool:
        flat = self.values.reshape(-1, self.group.n, self.group.n)
        return all(self.group.contains(m, tol) for m in flat)


def group_multiply(g1: GroupGrid, g2: GroupGrid) -> GroupGrid:
    if g1.grid != g2.grid:
        raise ValueError("group grids live on different grids")
    return GroupGrid(g1.grid, g1.values @ g2.values, g1.group)


def group_inverse(g: GroupGrid, det_tol: float = 1e-12) -> GroupGrid:
    det = np.linalg.det(g.values)
    if np.any(np.abs(det) < det_tol):
        raise NotInvertible("some node is (numerically) singular")
    if g.group.name == "SO":
        return GroupGrid(g.grid, np.swapaxes(g.values, -1, -2).copy(), g.group)
    return GroupGrid(g.grid, np.linalg.inv(g.values), g.group)


def mapping_group_ops(g1: GroupGrid, g2: Optional[GroupGrid] = None, op: str = "multiply") -> GroupGrid:
    """Pointwise product (op='multiply') or pointwise inverse (op='inverse')."""
    if op == "multiply":
        return group_multiply(g1, g2)
    if op == "inverse":
        return group_inverse(g1)
    raise ValueError(f"unknown op {op!r}")


def chart_field(g: GroupGrid) -> GridFunction:
    """chart_log applied at every node, as a GridFunction with d = n^2."""
    n = g.group.n
    flat = g.values.reshape(-1, n, n)
    logs = np.array([chart_log(m) for m in flat]).reshape(g.grid.counts + (n * n,))
    return GridFunction(g.grid, full_space(g.grid.box), logs, np.ones(g.grid.counts, dtype=bool))


def chart_seminorm(g: GroupGrid, f, alpha, q: Optional[SeminormSpec] = None) -> float:
    """||chart_log o g||_{f,alpha,q}."""
    return weighted_seminorm_ck(chart_field(g), f, alpha, q or sup_norm())


# -- weighted mapping curves and Theta ------------------------------------------------


@dataclass
class AlgebraMappingCurve:
    """t -> (x -> Gamma(t, x)): time samples of algebra-valued grid functions on U.

    ``values`` has shape (len(times), *grid.counts, n, n). ``func(t, x)`` is an
    optional closed form used between time nodes.
    """

    times: np.ndarray
    grid: Grid
    values: np.ndarray
    group: MatrixGroupSpec
    family: object = None
    func: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        n = self.group.n
        if self.values.shape != (len(self.times),) + self.grid.counts + (n, n):
            raise ValueError("values do not match times x grid x (n, n)")
        steps = np.diff(self.times)
        if len(self.times) < 5 or np.any(np.abs(steps - steps[0]) > 1e-12) \
                or abs(self.times[0]) > 1e-15 or abs(self.times[-1] - 1.0) > 1e-12:
            raise ValueError("times must be a uniform grid of [0, 1] with at least 5 nodes")
        if not self.group.algebra_contains(self.values):
            raise ValueError("mapping curve leaves the Lie algebra")

    @classmethod
    def from_function(cls, func, grid: Grid, group: MatrixGroupSpec, count: int = 11, family=None):
        times = np.linspace(0.0, 1.0, count)
        pts = grid.mesh().reshape(-1, grid.dimension)
        vals = np.array([[func(t, x) for x in pts] for t in times])
        vals = vals.reshape((count,) + grid.counts + (group.n, group.n))
        return cls(times, grid, vals, group, family, func)

    @property
    def time_grid(self) -> Grid:
        return Grid(((0.0, 1.0),), (len(self.times),))

    def as_grid_function(self) -> GridFunction:
        """Gamma^ on [0,1] x U with the n x n matrices flattened (d = n^2)."""
        n = self.group.n
        grid = Grid.product(self.time_grid, self.grid)
        vals = self.values.reshape(grid.counts + (n * n,))
        domain = product_domain(unit_interval(), full_space(self.grid.box))
        return GridFunction(grid, domain, vals, np.ones(grid.counts, dtype=bool))

    def node_curve(self, index) -> AlgebraCurve:
        """ev_x o Gamma: the AlgebraCurve of the node ``index``."""
        index = tuple(np.atleast_1d(index))
        func = None
        if self.func is not None:
            x = self.grid.node(index)
            func = lambda t: self.func(t, x)
        return AlgebraCurve(self.times, self.values[(slice(None),) + index], self.group, func)

    def slice_seminorms(self, weights: Sequence, order: int, q: Optional[SeminormSpec] = None) -> float:
        """max over time nodes, weights and |alpha| <= order of ||Gamma(t)||_{f,alpha,q}."""
        q = q or sup_norm()
        n = self.group.n
        top = 0.0
        for ti in range(len(self.times)):
            gf = GridFunction(self.grid, full_space(self.grid.box),
                              self.values[ti].reshape(self.grid.counts + (n * n,)),
                              np.ones(self.grid.counts, dtype=bool))
            for f in weights:
                for alpha in multi_indices(self.grid.dimension, order):
                    top = max(top, weighted_seminorm_ck(gf, f, alpha, q))
        return top


def _bounded_below(f) -> bool:
    p = f.params
    if p.get("form") == "constant":
        return p.get("c", 0) > 0
    if p.get("form") == "poly":
        return p.get("m", -1) >= 0
    return False


def theta_hypotheses(family, order: int, r_max: float = 40.0) -> dict:
    """(i) 1_U in W, (ii) o-condition, (iii) derivative domination, via the weights module."""
    from wfs.mollify import check_family_hypotheses

    # a member bounded below by a positive constant dominates the indicator of U
    flags = {"indicator": any(_bounded_below(f) for f in family.members)}
    try:
        records = check_family_hypotheses(family, order, r_max)
        flags["o_condition"] = all(r["check"] != "o" or r["radius"] >= 0 for r in records)
        flags["domination"] = True
    except HypothesisViolated as exc:
        flags["o_condition"] = flags["domination"] = False
        flags["reason"] = str(exc)
    return flags


@dataclass
class ThetaResult:
    """Theta(Gamma): for each step time s a group-valued grid over U."""

    times: np.ndarray
    grid: Grid
    values: np.ndarray
    group: MatrixGroupSpec
    hypotheses: dict = field(default_factory=dict)
    omega: dict = field(default_factory=dict)

    def at_node(self, index) -> np.ndarray:
        index = tuple(np.atleast_1d(index))
        return self.values[(slice(None),) + index]

    def slice(self, si: int) -> GroupGrid:
        return GroupGrid(self.grid, self.values[si], self.group)


def _check_theta_inputs(Gamma: AlgebraMappingCurve, order: int, omega_bound: float) -> tuple[dict, dict]:
    hyp, omega = {}, {}
    if Gamma.family is not None:
        hyp = theta_hypotheses(Gamma.family, order)
        if not all(hyp[k] for k in ("indicator", "o_condition", "domination")):
            raise HypothesisViolated(f"hypotheses for Theta fail: {hyp}")
        size = Gamma.slice_seminorms(Gamma.family.members, order)
        omega = {"bound": omega_bound, "seminorm": size, "inside": size < omega_bound}
    return hyp, omega


def pointwise_theta(Gamma: AlgebraMappingCurve, steps: int, order: int = 1,
                    omega_bound: float = 10.0) -> ThetaResult:
    """Theta via flip, per-node evolution and flip back.

    Gamma^ on [0,1] x U is flipped to U x [0,1] and curried, so each outer node
    carries its time curve; each curve is evolved, and the resulting curves on
    the step grid are uncurried and flipped back to step-time x U.
    """
    hyp, omega = _check_theta_inputs(Gamma, order, omega_bound)
    n = Gamma.group.n
    flipped = curry(flip(Gamma.as_grid_function()))
    step_grid = Grid(((0.0, 1.0),), (steps + 1,))
    out = np.empty(Gamma.grid.counts + (steps + 1, n * n))
    for index in np.ndindex(*Gamma.grid.counts):
        inner = flipped.at(index)
        func = None
        if Gamma.func is not None:
            x = Gamma.grid.node(index)
            func = (lambda xx: (lambda t: Gamma.func(t, xx)))(x)
        curve = AlgebraCurve(Gamma.times, inner.values.reshape(-1, n, n), Gamma.group, func)
        out[index] = evolve(curve, steps).values.reshape(steps + 1, n * n)
    evolved = CurriedGridFunction(Gamma.grid, step_grid, out, np.ones(Gamma.grid.counts, dtype=bool),
                                  np.ones(step_grid.counts, dtype=bool), full_space(Gamma.grid.box),
                                  unit_interval())
    back = flip(uncurry(evolved))
    vals = np.asarray(back.values).reshape((steps + 1,) + Gamma.grid.counts + (n, n))
    return ThetaResult(np.linspace(0.0, 1.0, steps + 1), Gamma.grid, vals, Gamma.group, hyp, omega)


def theta_direct(Gamma: AlgebraMappingCurve, steps: int) -> ThetaResult:
    """The same construction as a plain loop over nodes (no flips)."""
    n = Gamma.group.n
    vals = np.empty((steps + 1,) + Gamma.grid.counts + (n, n))
    for index in np.ndindex(*Gamma.grid.counts):
        vals[(slice(None),) + index] = evolve(Gamma.node_curve(index), steps).values
    return ThetaResult(np.linspace(0.0, 1.0, steps + 1), Gamma.grid, vals, Gamma.group)


@dataclass
class CommutationReport:
    node: tuple
    max_diff: float
    passed: bool


def evaluation_commutation_check(Gamma: AlgebraMappingCurve, x, steps: int,
                                 theta: Optional[ThetaResult] = None, tol: float = 1e-12) -> CommutationReport:
    """Compare s -> Theta(Gamma)(s)(x) with Evol(ev_x o Gamma) at every step time."""
    index = tuple(int(i) for i in np.atleast_1d(x))
    theta = theta if theta is not None else pointwise_theta(Gamma, steps)
    direct = evolve(Gamma.node_curve(index), steps).values
    diff = float(np.abs(theta.at_node(index) - direct).max())
    return CommutationReport(index, diff, diff <= tol)
