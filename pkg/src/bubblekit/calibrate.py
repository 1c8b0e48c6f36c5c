"""Two-step window calibration.

For fixed nonlinear parameters (tc, m, omega, phi) the linear ones
(A, B, C) are slaved: writing ln p(t) = A + B*f(t) + C*g(t) with
f = x^m and g = x^m*cos(omega*ln x + phi), they solve the 3x3 normal
equations

    [ N       sum f    sum g  ] [A]   [ sum y    ]
    [ sum f   sum f^2  sum fg ] [B] = [ sum y f  ]
    [ sum g   sum fg   sum g^2] [C]   [ sum y g  ]

exactly, so the search runs over four dimensions only. A taboo search
proposes candidate nonlinear points, each is polished by a damped local
least-squares refiner, and the lowest-sse solution wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import least_squares

from ._seeds import derive_seed
from .model import TWO_PI, LpplFit, LpplParams, WindowSpec

# Scaled-Gram condition number above which a linear solve is declared
# rank-deficient and the nonlinear candidate discarded (never regularized:
# ridge terms would bias A, B, C and hide pathological m).
_COND_LIMIT = 1e10

# Refined tc closer than this (trading days) to the window end means the
# candidate collapsed onto the singularity; reject it.
_TC_MARGIN = 0.5


class SingularLinearSystem(ValueError):
    """Gram matrix of the linear subproblem is rank-deficient."""


class CandidateRejected(RuntimeError):
    """Refinement drove the candidate out of the admissible region."""


class UnfittableWindowError(RuntimeError):
    """No repeat produced a usable fit for this window."""


class Candidate(NamedTuple):
    tc: float
    m: float
    omega: float
    phi: float
    sse: float


@dataclass(frozen=True)
class SearchSpace:
    """Box bounds for the nonlinear parameters.

    tc_range must start strictly after the window end; the filter, not
    these bounds, enforces the bubble conditions, so m and omega ranges
    deliberately overshoot the admissible region.
    """

    tc_range: tuple
    m_range: tuple = (0.01, 1.2)
    omega_range: tuple = (2.0, 25.0)
    phi_range: tuple = (0.0, TWO_PI)

    def __post_init__(self):
        for name in ("tc_range", "m_range", "omega_range", "phi_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"bad {name}: ({lo}, {hi})")

    @classmethod
    def default_for(cls, window: WindowSpec, tc_horizon_frac: float = 0.5, **kw):
        """Default box: tc within half the window span past t2."""
        span = window.t2 - window.t1
        tc_lo = window.t2 + 1.0
        tc_hi = window.t2 + max(1.0, tc_horizon_frac * span)
        return cls(tc_range=(tc_lo, max(tc_lo, tc_hi)), **kw)

    def lower(self) -> np.ndarray:
        return np.array([self.tc_range[0], self.m_range[0], self.omega_range[0], self.phi_range[0]])

    def upper(self) -> np.ndarray:
        return np.array([self.tc_range[1], self.m_range[1], self.omega_range[1], self.phi_range[1]])


@dataclass(frozen=True)
class TabooConfig:
    """Taboo-search knobs; all exposed because no canonical values exist.

    The neighborhood is a Gaussian step with per-parameter standard
    deviation `neighborhood_scale` times that parameter's range; visited
    cells on an `n_cells`^4 discretization of the space enter a taboo list
    of length `taboo_len`.
    """

    n_candidates: int = 10
    n_iterations: int = 2000
    n_neighbors: int = 4
    neighborhood_scale: float = 0.05
    taboo_len: int = 50
    n_cells: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")
        if self.n_iterations < 1 or self.n_neighbors < 1:
            raise ValueError("n_iterations and n_neighbors must be >= 1")


def _window_data(series, window: WindowSpec):
    if window.t1 < 0 or window.t2 >= len(series):
        raise ValueError(f"window [{window.t1}, {window.t2}] outside series of length {len(series)}")
    t = window.times()
    y = series.log_close()[window.t1 : window.t2 + 1]
    return t, y


def _slaved(t, y, tc, m, omega, phi):
    """Solve the linear subproblem at fixed nonlinear parameters.

    Returns (sse, (A, B, C), residuals). Raises SingularLinearSystem when
    the scaled Gram matrix is numerically rank-deficient (e.g. m so small
    that x^m is indistinguishable from a constant).
    """
    x = tc - t
    if x[-1] <= 0.0:
        raise SingularLinearSystem(f"tc={tc} does not exceed window end {t[-1]}")
    with np.errstate(over="ignore", invalid="ignore"):
        lx = np.log(x)
        f = np.exp(m * lx)
        g = f * np.cos(omega * lx + phi)
        n = t.size
        sf = f.sum()
        sg = g.sum()
        gram = np.array(
            [
                [n, sf, sg],
                [sf, f @ f, f @ g],
                [sg, f @ g, g @ g],
            ]
        )
        rhs = np.array([y.sum(), y @ f, y @ g])
    if not (np.all(np.isfinite(gram)) and np.all(np.isfinite(rhs))):
        raise SingularLinearSystem("non-finite design sums")
    d = np.sqrt(np.diag(gram))
    if np.any(d <= 0.0):
        raise SingularLinearSystem("zero design column")
    scaled = gram / np.outer(d, d)
    eig = np.linalg.eigvalsh(scaled)
    if eig[0] <= 0.0 or eig[-1] / eig[0] > _COND_LIMIT:
        raise SingularLinearSystem(f"rank-deficient design (scaled cond {eig[-1] / max(eig[0], 1e-300):.2e})")
    abc = np.linalg.solve(gram, rhs)
    resid = y - (abc[0] + abc[1] * f + abc[2] * g)
    return float(resid @ resid), abc, resid


def solve_linear_params(series, window: WindowSpec, nonlinear) -> tuple:
    """(A, B, C) minimizing the sse at fixed (tc, m, omega, phi).

    `nonlinear` is a mapping with keys tc, m, omega, phi. Raises
    SingularLinearSystem when the normal equations are rank-deficient,
    signalling the caller to discard this candidate.
    """
    if window.n_points < 4:
        raise ValueError("need at least 4 points to slave 3 linear parameters")
    t, y = _window_data(series, window)
    _, abc, _ = _slaved(t, y, nonlinear["tc"], nonlinear["m"], nonlinear["omega"], nonlinear["phi"])
    return float(abc[0]), float(abc[1]), float(abc[2])


def passes_lppl_filter(fit: LpplFit) -> bool:
    """Bubble condition: tc > t2, B < 0, 0 < m < 1 (all strict)."""
    p = fit.params
    return p.tc > fit.window.t2 and p.B < 0.0 and 0.0 < p.m < 1.0


def taboo_candidates(series, window: WindowSpec, space: SearchSpace, cfg: TabooConfig) -> list:
    """Taboo search over (tc, m, omega, phi); objective is the slaved sse.

    Returns cfg.n_candidates points inside the space ordered by ascending
    sse, deterministic given cfg.seed. Distinct grid cells are preferred;
    when the search visits fewer cells than requested (e.g. a collapsed
    space) the best points repeat.
    """
    t, y = _window_data(series, window)
    rng = np.random.default_rng(cfg.seed)
    lo, hi = space.lower(), space.upper()
    width = hi - lo
    step = np.where(width > 0.0, width, 1.0)

    def evaluate(p):
        try:
            return _slaved(t, y, p[0], p[1], p[2], p[3])[0]
        except SingularLinearSystem:
            return math.inf

    def cell(p):
        idx = np.floor((p - lo) / step * cfg.n_cells).astype(int)
        return tuple(np.clip(idx, 0, cfg.n_cells - 1))

    def sample():
        return lo + rng.random(4) * width

    current = sample()
    current_sse = evaluate(current)
    for _ in range(20):
        if math.isfinite(current_sse):
            break
        current = sample()
        current_sse = evaluate(current)

    best_by_cell = {}
    best_sse = math.inf
    if math.isfinite(current_sse):
        best_by_cell[cell(current)] = (current_sse, current.copy())
        best_sse = current_sse
    taboo: list = []

    for _ in range(cfg.n_iterations):
        chosen, chosen_sse = None, math.inf
        for _ in range(cfg.n_neighbors):
            prop = current + rng.normal(0.0, cfg.neighborhood_scale, 4) * width
            np.clip(prop, lo, hi, out=prop)
            s = evaluate(prop)
            # taboo cells are skipped unless they beat the global best
            if cell(prop) in taboo and s >= best_sse:
                continue
            if s < chosen_sse:
                chosen, chosen_sse = prop, s
        if chosen is None or not math.isfinite(chosen_sse):
            current = sample()
            current_sse = evaluate(current)
            continue
        current, current_sse = chosen, chosen_sse
        key = cell(current)
        if key not in best_by_cell or current_sse < best_by_cell[key][0]:
            best_by_cell[key] = (current_sse, current.copy())
        best_sse = min(best_sse, current_sse)
        taboo.append(key)
        if len(taboo) > cfg.taboo_len:
            taboo.pop(0)

    ranked = sorted(best_by_cell.values(), key=lambda v: v[0])
    if not ranked:
        raise UnfittableWindowError("every candidate produced a singular linear system")
    out = []
    for i in range(cfg.n_candidates):
        s, p = ranked[min(i, len(ranked) - 1)]
        out.append(Candidate(tc=float(p[0]), m=float(p[1]), omega=float(p[2]), phi=float(p[3]), sse=s))
    out.sort(key=lambda c: c.sse)
    return out


def refine(series, window: WindowSpec, candidate, rng_seed: int = 0,
           max_nfev: int = 2500) -> LpplFit:
    """Polish one candidate with bounded trust-region least squares.

    The residual vector keeps (A, B, C) slaved at every trial point, so
    the optimizer works in the four nonlinear dimensions only. Guarantees
    sse_out <= slaved sse of the candidate; raises CandidateRejected when
    tc collapses onto the window end.
    """
    t, y = _window_data(series, window)
    span = window.t2 - window.t1
    lo = np.array([window.t2 + _TC_MARGIN, 1e-3, 0.0, -np.inf])
    hi = np.array([window.t2 + 4.0 * span, 3.0, 60.0, np.inf])
    p0 = np.clip(np.array([candidate.tc, candidate.m, candidate.omega, candidate.phi]), lo, hi)
    start_sse, _, _ = _slaved(t, y, *p0)

    big = np.full(t.size, 1e6)

    def resid_fn(p):
        try:
            return _slaved(t, y, p[0], p[1], p[2], p[3])[2]
        except SingularLinearSystem:
            return big

    res = least_squares(
        resid_fn, p0, bounds=(lo, hi), method="trf", x_scale="jac",
        ftol=1e-10, xtol=1e-12, gtol=1e-6, max_nfev=max_nfev,
    )
    p = res.x
    if p[0] <= lo[0] + 1e-9:
        raise CandidateRejected(f"tc pinned at window end ({p[0]:.2f} <= {window.t2} + {_TC_MARGIN})")
    try:
        final_sse, abc, _ = _slaved(t, y, *p)
    except SingularLinearSystem as exc:
        raise CandidateRejected(f"refined point has singular linear system: {exc}") from exc
    converged = res.status > 0
    if final_sse > start_sse:
        # trust-region steps never accept a worse point, so this only
        # guards against re-slaving round-off at the boundary
        p = p0
        final_sse, abc, _ = _slaved(t, y, *p)
        converged = False
    params = LpplParams(A=float(abc[0]), B=float(abc[1]), C=float(abc[2]),
                        m=float(p[1]), omega=float(p[2]), phi=float(p[3]), tc=float(p[0]))
    fit = LpplFit(
        params=params, window=window, sse=final_sse, n_points=window.n_points,
        rng_seed=rng_seed, passes_filter=False, converged=converged,
    )
    return replace(fit, passes_filter=passes_lppl_filter(fit))


def fit_window(series, window: WindowSpec, space: SearchSpace = None,
               cfg: TabooConfig = None, n_repeats: int = 3, seed: int = None) -> LpplFit:
    """Full two-step calibration of one window.

    Runs taboo search + refinement n_repeats times with distinct derived
    seeds and returns the minimum-sse fit (ties broken by the smaller
    repeat seed). Raises UnfittableWindowError when every candidate of
    every repeat was rejected.
    """
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    if space is None:
        space = SearchSpace.default_for(window)
    if cfg is None:
        cfg = TabooConfig()
    base_seed = cfg.seed if seed is None else seed

    best = None
    for k in range(n_repeats):
        repeat_seed = derive_seed(base_seed, "repeat", k)
        candidates = taboo_candidates(series, window, space, replace(cfg, seed=repeat_seed))
        for cand in candidates:
            if not math.isfinite(cand.sse):
                continue
            try:
                fit = refine(series, window, cand, rng_seed=repeat_seed)
            except CandidateRejected:
                continue
            key = (fit.sse, fit.rng_seed)
            if best is None or key < (best.sse, best.rng_seed):
                best = fit
    if best is None:
        raise UnfittableWindowError(
            f"window [{window.t1}, {window.t2}]: all {n_repeats} repeats failed"
        )
    return best
