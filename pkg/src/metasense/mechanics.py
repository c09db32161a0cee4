"""Reduced-order bistable cells and the quasi-static serial chain solver.

Each cell follows the cubic force law

    f(x) = a * x * (x - beta*D) * (x - D)

with stable roots at ``0`` (closed) and ``D`` (open) and an unstable root at
``beta*D``.  The scale ``a`` is set so that the rising-branch maximum equals
the effective peak force ``Fp * (1 + eta)``.

A chain of cells in series shares one force ``F`` while the cell
displacements add up to the imposed displacement ``X``.  Given a branch
assignment, ``X(F)`` is strictly increasing, so equilibrium is a 1-D root
find on ``F``.  When the imposed displacement leaves the range reachable by
the current assignment, the limiting cell snaps to its other branch at
constant ``X``.

Units: mm, N, mJ (= N mm).
"""

from __future__ import annotations

import bisect
import enum
import itertools
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate, ndimage, optimize

TOL_X = 1e-6  # mm
TOL_F = 1e-6  # N
MAX_BISECT = 200

_TWO_PI_3 = 2.0 * math.pi / 3.0


class Branch(enum.Enum):
    CLOSED_RISING = "closed"
    UNSTABLE = "unstable"
    OPEN_RISING = "open"


class Direction(enum.Enum):
    DEPLOY = "deploy"
    COLLAPSE = "collapse"


class SnapResolutionError(RuntimeError):
    """No stable branch assignment exists after snapping every eligible cell."""


class GridSizeError(MemoryError):
    pass


@dataclass(frozen=True)
class CellParams:
    """Force law parameters of one bistable cell.

    Attributes:
        stroke: distance between the closed and open stable states (mm)
        unstable_fraction: position of the unstable root as a fraction of stroke
        peak_force: nominal maximum of the first rising branch (N)
        imperfection: relative perturbation applied to ``peak_force``
        id: 1-based cell index along the chain
    """

    stroke: float = 14.8
    unstable_fraction: float = 0.4
    peak_force: float = 6.8
    imperfection: float = 0.0
    id: int = 1

    def __post_init__(self):
        if not self.stroke > 0:
            raise ValueError(f"stroke must be positive, got {self.stroke}")
        if not 0 < self.unstable_fraction < 1:
            raise ValueError(f"unstable_fraction must lie in (0, 1), got {self.unstable_fraction}")
        if not self.peak_force > 0:
            raise ValueError(f"peak_force must be positive, got {self.peak_force}")
        if not self.effective_peak > 0:
            raise ValueError(f"effective peak {self.effective_peak} must be positive")

    @property
    def effective_peak(self) -> float:
        return self.peak_force * (1.0 + self.imperfection)

    @cached_property
    def _critical_fractions(self) -> tuple[float, float]:
        # roots of 3u^2 - 2(1+b)u + b, in units of stroke
        b = self.unstable_fraction
        disc = math.sqrt((1.0 + b) ** 2 - 3.0 * b)
        return ((1.0 + b) - disc) / 3.0, ((1.0 + b) + disc) / 3.0

    @cached_property
    def scale(self) -> float:
        """Cubic coefficient ``a`` in N/mm^3."""
        u = self._critical_fractions[0]
        shape = u * (u - self.unstable_fraction) * (u - 1.0) * self.stroke**3
        return self.effective_peak / shape

    @cached_property
    def limits(self) -> tuple[float, float, float, float]:
        up, uv = self._critical_fractions
        xp, xv = up * self.stroke, uv * self.stroke
        return xp, xv, cell_force(self, xp), cell_force(self, xv)


@dataclass(frozen=True)
class ChainState:
    X: float
    x: tuple[float, ...]
    branch: tuple[Branch, ...]
    F: float
    origin: tuple[Branch, ...] | None = None  # stable assignment before a descent began


@dataclass(frozen=True)
class TransitionEvent:
    cell_id: int
    direction: Direction
    X_at_event: float
    F_before: float
    step_index: int
    F_after: float = float("nan")
    energy_released: float = 0.0  # mJ, chain energy drop at constant X


@dataclass
class Trace:
    """Per-step record of a load program.  Row 0 is the initial state."""

    X: np.ndarray
    F: np.ndarray
    x: np.ndarray  # (steps, N)
    branch: list[tuple[Branch, ...]] = field(default_factory=list)

    def __len__(self):
        return len(self.X)


# ---------------------------------------------------------------------------
# single cell


def cell_force(c: CellParams, x):
    D = c.stroke
    return c.scale * x * (x - c.unstable_fraction * D) * (x - D)


def cell_energy(c: CellParams, x):
    """Closed-form potential with ``cell_energy(c, 0) == 0``."""
    D, b = c.stroke, c.unstable_fraction
    return c.scale * x * x * (0.25 * x * x - (1.0 + b) * D * x / 3.0 + 0.5 * b * D * D)


def cell_stiffness(c: CellParams, x):
    D, b = c.stroke, c.unstable_fraction
    return c.scale * (3.0 * x * x - 2.0 * (1.0 + b) * D * x + b * D * D)


def branch_limits(c: CellParams) -> tuple[float, float, float, float]:
    """Return ``(x_peak, x_valley, F_peak, F_valley)``."""
    return c.limits


def _cbrt(v: float) -> float:
    return math.copysign(abs(v) ** (1.0 / 3.0), v)


def _cubic_root(c: CellParams, F: float, which: int) -> float:
    """Root of ``cell_force(c, x) = F``: 0 smallest, 1 middle, 2 largest.

    When only one real root exists it is returned for every ``which``.
    """
    D, b = c.stroke, c.unstable_fraction
    # u^3 + p2 u^2 + p1 u + p0 = 0 with u = x / D
    p2 = -(1.0 + b)
    p0 = -F / (c.scale * D * D * D)
    shift = -p2 / 3.0
    p = b - p2 * p2 / 3.0
    q = 2.0 * p2 * p2 * p2 / 27.0 - p2 * b / 3.0 + p0
    disc = 0.25 * q * q + p * p * p / 27.0
    if disc < 0.0:
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = 1.5 * q / p * math.sqrt(-3.0 / p)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        # k = 0, 1, 2 give the largest, middle and smallest root
        return (r * math.cos(theta - (2 - which) * _TWO_PI_3) + shift) * D
    s = math.sqrt(disc)
    return (_cbrt(-0.5 * q + s) + _cbrt(-0.5 * q - s) + shift) * D


def invert_branch(c: CellParams, b: Branch, F: float) -> float:
    """Displacement on branch ``b`` at which the cell carries force ``F``.

    The analytic cubic root is polished by a Newton step kept inside the
    branch interval, so ``|f(x) - F| <= TOL_F`` holds except within
    ``sqrt(eps)`` of a limit point.
    """
    xp, xv, Fp, Fv = c.limits
    if b is Branch.CLOSED_RISING:
        if F > Fp + 1e-12 * abs(Fp):
            raise ValueError(f"force {F} above closed-branch peak {Fp} of cell {c.id}")
        x = min(_cubic_root(c, min(F, Fp), 0), xp)
        lo, hi = -math.inf, xp
    elif b is Branch.OPEN_RISING:
        if F < Fv - 1e-12 * abs(Fv):
            raise ValueError(f"force {F} below open-branch valley {Fv} of cell {c.id}")
        x = max(_cubic_root(c, max(F, Fv), 2), xv)
        lo, hi = xv, math.inf
    else:
        raise ValueError("the unstable branch has no stable inverse")
    r = cell_force(c, x) - F
    for _ in range(2):
        k = cell_stiffness(c, x)
        if r == 0.0 or k <= 0.0:
            break
        x_new = min(max(x - r / k, lo), hi)
        r_new = cell_force(c, x_new) - F
        if abs(r_new) >= abs(r):
            break
        x, r = x_new, r_new
    return x


# ---------------------------------------------------------------------------
# chain


def _check_assignment(cells: Sequence[CellParams], branch: Sequence[Branch]):
    if len(cells) != len(branch):
        raise ValueError(f"{len(cells)} cells but {len(branch)} branch entries")
    if any(b is Branch.UNSTABLE for b in branch):
        raise ValueError("chain states may only use stable branches")


def _force_bounds(cells, branch) -> tuple[float | None, float | None]:
    closed = [c.limits[2] for c, b in zip(cells, branch) if b is Branch.CLOSED_RISING]
    opened = [c.limits[3] for c, b in zip(cells, branch) if b is Branch.OPEN_RISING]
    return (max(opened) if opened else None, min(closed) if closed else None)


def _span(cells, branch, F: float) -> float:
    return sum(invert_branch(c, b, F) for c, b in zip(cells, branch))


def reachable_range(cells, branch) -> tuple[float, float]:
    """Smallest and largest total displacement the assignment can carry."""
    _check_assignment(cells, branch)
    F_lo, F_hi = _force_bounds(cells, branch)
    X_lo = -math.inf if F_lo is None else _span(cells, branch, F_lo)
    X_hi = math.inf if F_hi is None else _span(cells, branch, F_hi)
    return X_lo, X_hi


_TABLE_N = 96


@lru_cache(maxsize=256)
def _span_table(cells: tuple[CellParams, ...], branch: tuple[Branch, ...]):
    """Monotone samples of ``X(F)`` over the assignment's force range."""
    F_lo, F_hi = _force_bounds(cells, branch)
    scale = max(c.effective_peak for c in cells)
    reach = sum(c.stroke for c in cells)
    if F_hi is None:
        F_hi = max(F_lo if F_lo is not None else 0.0, 0.0) + scale
        while _span(cells, branch, F_hi) < 2.0 * reach:
            F_hi += scale
    if F_lo is None:
        F_lo = min(F_hi, 0.0) - scale
        while _span(cells, branch, F_lo) > -0.5 * reach:
            F_lo -= scale
    # cluster samples towards the ends, where X(F) has square-root behaviour
    t = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, _TABLE_N)))
    Fs = [float(F_lo + (F_hi - F_lo) * ti) for ti in t]
    Xs = [_span(cells, branch, F) for F in Fs]
    return Fs, Xs


def _dspan(cells, branch, F: float) -> tuple[float, float]:
    """``X(F)`` and ``dX/dF`` for a stable assignment."""
    total = 0.0
    compliance = 0.0
    for c, b in zip(cells, branch):
        x = invert_branch(c, b, F)
        total += x
        k = cell_stiffness(c, x)
        compliance += 1.0 / k if k > 0.0 else math.inf
    return total, compliance


def solve_chain(cells: Sequence[CellParams], branch: Sequence[Branch], X: float) -> ChainState | None:
    """Series equilibrium at imposed displacement ``X``, or ``None`` if infeasible.

    The result depends only on the arguments (no warm start), which keeps
    repeated load cycles bit-identical.
    """
    _check_assignment(cells, branch)
    cells, branch = tuple(cells), tuple(branch)
    F_lo, F_hi = _force_bounds(cells, branch)
    Fs, Xs = _span_table(cells, branch)
    if (F_hi is not None and X > Xs[-1] + TOL_X) or (F_lo is not None and X < Xs[0] - TOL_X):
        return None

    if X >= Xs[-1]:
        if F_hi is not None:
            F = Fs[-1]
        else:
            F = _bracketed_root(cells, branch, X, Fs[-1], None)
    elif X <= Xs[0]:
        if F_lo is not None:
            F = Fs[0]
        else:
            F = _bracketed_root(cells, branch, X, None, Fs[0])
    else:
        i = bisect.bisect_right(Xs, X) - 1
        a, b = Fs[i], Fs[i + 1]
        # secant guess inside the tabulated bracket, then safeguarded Newton
        F = a + (b - a) * (X - Xs[i]) / (Xs[i + 1] - Xs[i])
        for _ in range(MAX_BISECT):
            S, dS = _dspan(cells, branch, F)
            r = S - X
            if abs(r) < 1e-11 or b - a < 1e-14 * max(1.0, abs(F)):
                break
            if r > 0.0:
                b = F
            else:
                a = F
            step = F - r / dS if math.isfinite(dS) and dS > 0.0 else math.nan
            F = step if a < step < b else 0.5 * (a + b)
    x = tuple(invert_branch(c, b, F) for c, b in zip(cells, branch))
    return ChainState(X=X, x=x, branch=branch, F=F)


def _bracketed_root(cells, branch, X, F_lo, F_hi) -> float:
    scale = max(c.effective_peak for c in cells)
    if F_hi is None:
        F_hi = F_lo + scale
        while _span(cells, branch, F_hi) < X:
            F_hi += 2.0 * (F_hi - F_lo)
    if F_lo is None:
        F_lo = F_hi - scale
        while _span(cells, branch, F_lo) > X:
            F_lo -= 2.0 * (F_hi - F_lo)
    return optimize.brentq(lambda F: _span(cells, branch, F) - X, F_lo, F_hi,
                           xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=MAX_BISECT)


def chain_energy(cells, x) -> float:
    return float(sum(cell_energy(c, xi) for c, xi in zip(cells, x)))


def initial_state(cells) -> ChainState:
    n = len(cells)
    closed = (Branch.CLOSED_RISING,) * n
    return ChainState(X=0.0, x=(0.0,) * n, branch=closed, F=0.0)


# ---------------------------------------------------------------------------
# one cell on its descending branch
#
# Under displacement control a cell past its limit point stays in a stable
# chain equilibrium as long as the total compliance sum(1/k_i) is negative,
# i.e. the rest of the chain is stiffer than the cell's negative stiffness.
# The chain snaps only where that compliance reaches zero (a fold in X).


def _others_x(cells, branch, u: int, F: float) -> list[float] | None:
    xs = []
    for i, (c, b) in enumerate(zip(cells, branch)):
        if i == u:
            continue
        xp, xv, Fp, Fv = c.limits
        if (b is Branch.CLOSED_RISING and F > Fp) or (b is Branch.OPEN_RISING and F < Fv):
            return None
        xs.append(invert_branch(c, b, F))
    return xs


def _stability_margin(cells, branch, u: int, xu: float) -> float:
    """Total compliance sum(1/k_i) normalized by sum(|1/k_i|), in [-1, 1].

    Negative means the chain is stable with cell ``u`` at ``xu`` on its
    descending branch; +1 is returned beyond another cell's limit point.
    """
    cu = cells[u]
    F = cell_force(cu, xu)
    others = _others_x(cells, branch, u, F)
    if others is None:
        return 1.0
    inv = 1.0 / cell_stiffness(cu, xu)
    total, size = inv, abs(inv)
    for c, xi in zip((c for i, c in enumerate(cells) if i != u), others):
        k = cell_stiffness(c, xi)
        if k <= 0.0:
            return 1.0
        total += 1.0 / k
        size += 1.0 / k
    return total / size


# Margins above -_NEUTRAL count as unstable.  Three identical cells with one
# on each branch have an identically zero compliance (the reciprocal slopes
# of a cubic at its three roots sum to zero); that neutral family must not
# be mistaken for a stable path because of round-off.
_NEUTRAL = 1e-6


@dataclass(frozen=True)
class _Segment:
    """Stable range ``[x_lo, x_hi]`` of the descending cell's displacement."""

    x_lo: float
    x_hi: float
    lo_fold: bool
    hi_fold: bool


_GRID = 801


@lru_cache(maxsize=512)
def _segments(cells: tuple[CellParams, ...], branch: tuple[Branch, ...]) -> tuple[_Segment, ...]:
    u = branch.index(Branch.UNSTABLE)
    xp, xv = cells[u].limits[:2]
    t = np.linspace(0.0, 1.0, _GRID)[1:-1]
    grid = xp + (xv - xp) * 0.5 * (1.0 - np.cos(np.pi * t))
    margin = np.array([_stability_margin(cells, branch, u, xu) for xu in grid])
    stable = margin < -_NEUTRAL

    def refine(a, b):
        return optimize.brentq(lambda xu: _stability_margin(cells, branch, u, xu) + _NEUTRAL,
                               a, b, xtol=1e-12)

    segments = []
    k = 0
    n = len(grid)
    while k < n:
        if not stable[k]:
            k += 1
            continue
        j = k
        while j + 1 < n and stable[j + 1]:
            j += 1
        lo_fold = k > 0
        hi_fold = j < n - 1
        x_lo = refine(grid[k - 1], grid[k]) if lo_fold else xp
        x_hi = refine(grid[j], grid[j + 1]) if hi_fold else xv
        segments.append(_Segment(x_lo, x_hi, lo_fold, hi_fold))
        k = j + 1
    return tuple(segments)


def _state_on_descent(cells, branch, u: int, xu: float, X: float | None = None) -> ChainState:
    F = cell_force(cells[u], xu)
    others = iter(_others_x(cells, branch, u, min(max(F, cells[u].limits[3]), cells[u].limits[2])))
    x = tuple(xu if i == u else next(others) for i in range(len(cells)))
    return ChainState(X=sum(x) if X is None else X, x=x, branch=branch, F=F)


def _descent_span(cells, branch, u, xu) -> float:
    F = cell_force(cells[u], xu)
    others = _others_x(cells, branch, u, F)
    return xu + sum(others)


def _pick_limiting(cells, branch, loading: bool) -> int:
    if loading:
        pool = [i for i, b in enumerate(branch) if b is Branch.CLOSED_RISING]
        # lowest peak first, lowest id on ties
        return min(pool, key=lambda i: (cells[i].limits[2], cells[i].id))
    pool = [i for i, b in enumerate(branch) if b is Branch.OPEN_RISING]
    # highest valley is reached first on unloading
    return min(pool, key=lambda i: (-cells[i].limits[3], cells[i].id))


def _replace(branch, i, b):
    return tuple(b if k == i else old for k, old in enumerate(branch))


def _classify(cells, x) -> tuple[Branch, ...]:
    out = []
    for c, xi in zip(cells, x):
        xp, xv = c.limits[:2]
        out.append(Branch.CLOSED_RISING if xi <= xp else
                   Branch.OPEN_RISING if xi >= xv else Branch.UNSTABLE)
    return tuple(out)


def _equilibrium(cells, branch, X: float, x_hint=None) -> ChainState | None:
    """Equilibrium for any assignment with at most one descending cell."""
    if Branch.UNSTABLE not in branch:
        return solve_chain(cells, branch, X)
    u = branch.index(Branch.UNSTABLE)
    for seg in _segments(cells, branch):
        X_lo = _descent_span(cells, branch, u, seg.x_lo)
        X_hi = _descent_span(cells, branch, u, seg.x_hi)
        if X_lo <= X <= X_hi:
            xu = optimize.brentq(lambda v: _descent_span(cells, branch, u, v) - X,
                                 seg.x_lo, seg.x_hi, xtol=1e-13, maxiter=MAX_BISECT)
            return _state_on_descent(cells, branch, u, xu, X)
    return None


@lru_cache(maxsize=512)
def _land(cells: tuple[CellParams, ...], branch: tuple[Branch, ...], xu: float,
          loading: bool) -> ChainState:
    """Equilibrium reached by energy descent at constant X from a fold."""
    u = branch.index(Branch.UNSTABLE)
    fold = _state_on_descent(cells, branch, u, xu)
    X = fold.X
    # e_u - 1/N keeps X fixed and projects onto the fold's zero mode (~ 1/k)
    # with weight -1/k_u > 0, also when several cells sit at a limit point
    n = len(cells)
    push = np.full(n, -1.0 / n)
    push[u] += 1.0
    sign = 1.0 if loading else -1.0

    def flow(t, x):
        f = np.array([cell_force(c, xi) for c, xi in zip(cells, x)])
        return f.mean() - f

    landed = None
    # exactly tied cells make the fold degenerate; a small push can then stall
    # next to it, so retry with larger pushes before accepting such a state
    for size in (1e-3, 1e-2, 1e-1):
        x0 = np.asarray(fold.x) + sign * size * cells[u].stroke * push
        # escape from a degenerate fold is algebraic, not exponential: long horizon
        sol = integrate.solve_ivp(flow, (0.0, 1e7), x0, method="LSODA", rtol=1e-9, atol=1e-12)
        new_branch = _classify(cells, sol.y[:, -1])
        if sum(b is Branch.UNSTABLE for b in new_branch) > 1:
            continue
        candidate = _equilibrium(cells, new_branch, X)
        if candidate is None:
            continue
        landed = candidate
        if not _near_limit(cells, candidate):
            break
    if landed is None:
        target = Branch.OPEN_RISING if loading else Branch.CLOSED_RISING
        landed = _nearest_stable(cells, fold, u, target)
    if landed is None:
        raise SnapResolutionError(
            f"cell {cells[u].id} has no landing equilibrium at X={X:.4f} mm"
        )
    return landed


def _nearest_stable(cells, fold: ChainState, u: int, target: Branch) -> ChainState | None:
    """Closest equilibrium at the fold's X with cell ``u`` on ``target`` and no higher energy.

    Used when the energy descent cannot settle, which happens on the exactly
    neutral families of identical cells.
    """
    E0 = chain_energy(cells, fold.x)
    best, best_d = None, math.inf
    for branch in stable_assignments(len(cells)):
        if branch[u] is not target:
            continue
        st = solve_chain(cells, branch, fold.X)
        if st is None or chain_energy(cells, st.x) > E0 + 1e-9 * max(1.0, abs(E0)):
            continue
        d = float(np.linalg.norm(np.subtract(st.x, fold.x)))
        if d < best_d:
            best, best_d = st, d
    return best


def _near_limit(cells, state: ChainState, tol: float = 1e-2) -> bool:
    """True if a descending cell sits within ``tol * stroke`` of a limit point."""
    for c, xi, b in zip(cells, state.x, state.branch):
        if b is Branch.UNSTABLE and min(xi - c.limits[0], c.limits[1] - xi) < tol * c.stroke:
            return True
    return False


def step_load(state: ChainState, cells: Sequence[CellParams], X_new: float,
              step_index: int = 0) -> tuple[ChainState, list[TransitionEvent]]:
    """Advance the chain to ``X_new`` along its quasi-static equilibrium path.

    When the current stable assignment runs out of range, the limiting cell
    (lowest peak on loading, highest valley on unloading, lowest id on ties)
    continues along its descending branch.  Where that path folds the chain
    snaps at constant ``X`` into the equilibrium reached by energy descent;
    a cell that reaches its other limit point without a fold crosses over
    continuously.  Several transitions may happen within one step.
    """
    if X_new == state.X:
        return state, []
    cells = tuple(cells)
    loading = X_new > state.X
    events: list[TransitionEvent] = []
    branch, origin = state.branch, state.origin or state.branch
    xu = None
    if Branch.UNSTABLE in branch:
        xu = state.x[branch.index(Branch.UNSTABLE)]

    for _ in range(4 * len(cells) + 4):
        if Branch.UNSTABLE not in branch:
            new = solve_chain(cells, branch, X_new)
            if new is not None:
                return new, events
            if (Branch.CLOSED_RISING if loading else Branch.OPEN_RISING) not in branch:
                break
            u = _pick_limiting(cells, branch, loading)
            xp, xv = cells[u].limits[:2]
            xu = xp if loading else xv
            origin = branch
            branch = _replace(branch, u, Branch.UNSTABLE)
            continue

        u = branch.index(Branch.UNSTABLE)
        seg = next((s for s in _segments(cells, branch)
                    if s.x_lo - 1e-9 <= xu <= s.x_hi + 1e-9), None)
        if seg is None:
            # fold sits at the entry point itself
            xe, fold = xu, True
        else:
            X_lo = _descent_span(cells, branch, u, seg.x_lo)
            X_hi = _descent_span(cells, branch, u, seg.x_hi)
            if X_lo <= X_new <= X_hi:
                xu = optimize.brentq(lambda v: _descent_span(cells, branch, u, v) - X_new,
                                     seg.x_lo, seg.x_hi, xtol=1e-13, maxiter=MAX_BISECT)
                new = _state_on_descent(cells, branch, u, xu, X_new)
                return replace(new, origin=origin), events
            xe, fold = (seg.x_hi, seg.hi_fold) if loading else (seg.x_lo, seg.lo_fold)

        before = _state_on_descent(cells, branch, u, xe)
        if fold:
            after = _land(cells, branch, xe, loading)
        else:
            target = Branch.OPEN_RISING if loading else Branch.CLOSED_RISING
            after = ChainState(X=before.X, x=before.x, branch=_replace(branch, u, target),
                               F=before.F)
        released = chain_energy(cells, before.x) - chain_energy(cells, after.x)
        changed = [i for i, b in enumerate(after.branch)
                   if b is not Branch.UNSTABLE and b is not origin[i]]
        # deployments first, then any cell knocked back by the same snap
        changed.sort(key=lambda i: (after.branch[i] is not Branch.OPEN_RISING, i != u, i))
        for n, i in enumerate(changed):
            events.append(TransitionEvent(
                cell_id=cells[i].id,
                direction=(Direction.DEPLOY if after.branch[i] is Branch.OPEN_RISING
                           else Direction.COLLAPSE),
                X_at_event=before.X,
                F_before=before.F,
                step_index=step_index,
                F_after=after.F,
                energy_released=released if n == 0 else 0.0,
            ))
        origin = tuple(origin[i] if b is Branch.UNSTABLE else b for i, b in enumerate(after.branch))
        branch = after.branch
        xu = after.x[branch.index(Branch.UNSTABLE)] if Branch.UNSTABLE in branch else None
    raise SnapResolutionError(f"no equilibrium found at X={X_new} after repeated transitions")


def discretize_program(targets: Sequence[float], dX: float, start: float = 0.0) -> np.ndarray:
    """Displacement samples for a piecewise-linear program, start point included.

    Each stroke contributes ``ceil(|target - previous| / dX)`` samples ending
    exactly on its target.
    """
    if dX <= 0:
        raise ValueError(f"step size must be positive, got {dX}")
    samples = [start]
    prev = start
    for target in targets:
        span = target - prev
        n = math.ceil(abs(span) / dX - 1e-9)
        for k in range(1, n):
            samples.append(prev + math.copysign(k * dX, span))
        if n:
            samples.append(float(target))
        prev = target
    return np.asarray(samples)


def run_load_program(cells: Sequence[CellParams], targets: Sequence[float], dX: float = 0.01,
                     X_path: np.ndarray | None = None) -> tuple[Trace, list[TransitionEvent]]:
    """Run a displacement program from the all-closed state at ``X = 0``."""
    if X_path is None:
        X_path = discretize_program(targets, dX)
    if X_path[0] != 0.0:
        raise ValueError("load programs start at X = 0")
    # start from the solver's own X = 0 state rather than the exact zero
    # state, so a return to X = 0 reproduces row 0 bit for bit
    state = solve_chain(cells, initial_state(cells).branch, 0.0)
    n = len(cells)
    F = np.empty(len(X_path))
    x = np.empty((len(X_path), n))
    branches = []
    events: list[TransitionEvent] = []
    F[0], x[0] = state.F, state.x
    branches.append(state.branch)
    for k in range(1, len(X_path)):
        state, ev = step_load(state, cells, float(X_path[k]), step_index=k)
        events.extend(ev)
        F[k], x[k] = state.F, state.x
        branches.append(state.branch)
    return Trace(X=np.asarray(X_path, dtype=float), F=F, x=x, branch=branches), events


# ---------------------------------------------------------------------------
# brute-force oracle


def brute_force_equilibria(cells: Sequence[CellParams], X: float | None,
                           grid_n: int = 400, max_points: int = 20_000_000):
    """Grid local minima of the total chain energy.

    With ``X`` given the grid covers the constraint set ``sum(x) = X``,
    ``x_i >= -0.2 D_i`` using the first ``N-1`` coordinates as axes; with
    ``X=None`` each coordinate is scanned freely over ``[-0.2 D, 1.2 D]``.
    Grid points touching the domain edge are never reported as minima.
    Returns a list of ``(x, energy)`` sorted by energy.
    """
    n = len(cells)
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    lows = [-0.2 * c.stroke for c in cells]
    if X is None:
        axes = [np.linspace(lo, 1.2 * c.stroke, grid_n) for lo, c in zip(lows, cells)]
    else:
        if n < 2:
            return [(np.array([float(X)]), chain_energy(cells, [X]))]
        axes = [np.linspace(lows[i], X - sum(lows) + lows[i], grid_n) for i in range(n - 1)]
    if grid_n ** len(axes) > max_points:
        raise GridSizeError(f"{grid_n}^{len(axes)} grid points exceed the limit of {max_points}")

    mesh = np.meshgrid(*axes, indexing="ij")
    coords = list(mesh)
    if X is not None:
        coords.append(X - sum(mesh))
    energy = sum(cell_energy(c, xi) for c, xi in zip(cells, coords))
    valid = np.ones(energy.shape, dtype=bool)
    if X is not None:
        valid &= coords[-1] >= lows[-1]
    energy = np.where(valid, energy, np.inf)

    footprint = np.ones((3,) * energy.ndim, dtype=bool)
    footprint[(1,) * energy.ndim] = False
    neighbour_min = ndimage.minimum_filter(energy, footprint=footprint, mode="constant", cval=np.inf)
    touches_edge = ndimage.maximum_filter((~valid).astype(np.uint8), size=3, mode="constant", cval=1) > 0
    is_min = valid & ~touches_edge & (energy < neighbour_min)

    found = []
    for idx in zip(*np.nonzero(is_min)):
        xs = np.array([ci[idx] for ci in coords])
        found.append((xs, float(energy[idx])))
    found.sort(key=lambda item: item[1])
    return found


def stable_assignments(n: int):
    return itertools.product((Branch.CLOSED_RISING, Branch.OPEN_RISING), repeat=n)
