"""Parameter-free operation: doubling sessions over hyperparameter grids.

The calibration layer removes the need to know the wrapped optimizer's
problem constants.  Time is cut into doubling sessions ``j`` (steps
``2^j <= t < 2^(j+1)``).  For each session a grid of ``(d0, alpha, U, B)``
tuples — all powers of two spanning exponent ranges that widen with ``j``
— defines one wrapper run per tuple, plus a null predictor for ``d0 = 0``.
During session ``j``:

* each candidate predicts through its estimator frozen strictly before
  ``2^j``, clipped into ``[-Y, Y]``;
* a fixed-learning-rate exponential-weights meta-aggregator (learning
  rate ``1/(8*Y**2)``, valid because the clipped square loss is
  exp-concave on ``[-Y, Y]``) combines the candidates by weighted mean;
* the candidates serving session ``j+1`` train on every sample (they are
  created at the session start by replaying the full history prefix, so
  each one effectively sees the whole stream).

The session estimator ``f_bar`` is the average of the meta predictors
used over the previous session, stored as time-averaged weights over the
candidate list so it can be evaluated at unseen inputs.

Grids grow polynomially in ``j``, so a compute-budget guard fails fast
when a run would be infeasible; the optional exponent clamp (a documented
configuration knob, not silent subsampling) keeps long horizons tractable.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from typing import Callable, Sequence

import numpy as np

from saew.core import ProblemParams
from saew.engine import SaewState, saew_estimators, saew_init, saew_step


class BudgetExceededError(RuntimeError):
    """Raised when a planned calibration run exceeds its compute budget."""


# ============================================================
# Clipping
# ============================================================

def clip(x: float, Y: float) -> float:
    """Clamp ``x`` into ``[-Y, Y]``.

    Raises:
        ValueError: if ``Y <= 0``.
    """
    if not (Y > 0.0):
        raise ValueError(f"Y must be > 0, got {Y}")
    return max(-Y, min(float(x), Y))


# ============================================================
# Hyperparameter grids
# ============================================================

@dataclasses.dataclass(frozen=True)
class GridEntry:
    """One hyperparameter tuple; ``d0 = 0`` is the null predictor and
    carries no other components."""

    d0: int
    alpha: float | None = None
    U: float | None = None
    B: float | None = None

    @property
    def is_null(self) -> bool:
        return self.d0 == 0

    def label(self) -> str:
        if self.is_null:
            return "null"
        return f"d0={self.d0},alpha={self.alpha:g},U={self.U:g},B={self.B:g}"


@dataclasses.dataclass(frozen=True)
class HyperGrid:
    """The candidate tuples for one doubling session."""

    j: int
    entries: tuple[GridEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)


def _exponent_range(lo: int, hi: int,
                    clamp: tuple[int, int] | None) -> range:
    if clamp is not None:
        lo, hi = max(lo, clamp[0]), min(hi, clamp[1])
    return range(lo, hi + 1)


def build_grid(j: int, d: int, Y: float,
               exponent_clamp: tuple[int, int] | None = None) -> HyperGrid:
    """Hyperparameter grid for doubling session ``j``.

    Components are exact powers of two spanning:

    * ``d0`` in ``{0} | {2**k : k = 0..ceil(log2 d)}``;
    * ``U`` and ``B`` over exponents ``-2j .. 2j + ceil(2*log2 Y)``;
    * ``alpha`` (per ``(d0, B)`` pair) over exponents
      ``-2j + ceil(log2(B*d0/Y**2)) .. j + ceil(log2 d0)``.

    ``exponent_clamp = (lo, hi)`` intersects the ``U``/``B``/``alpha``
    exponent ranges with ``[lo, hi]``; it is the documented way to keep
    long-horizon grids affordable (the tuples remain a subset of the
    unclamped grid — nothing is resampled).

    Raises:
        ValueError: if ``d < 1``, ``Y <= 0``, ``j < 0``, or a malformed
            clamp.
    """
    if j < 0:
        raise ValueError(f"j must be >= 0, got {j}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if not (Y > 0.0) or not math.isfinite(Y):
        raise ValueError(f"Y must be > 0, got {Y}")
    if exponent_clamp is not None and exponent_clamp[0] > exponent_clamp[1]:
        raise ValueError(f"bad exponent clamp: {exponent_clamp}")

    entries: list[GridEntry] = [GridEntry(d0=0)]
    d0_values = [2 ** k for k in range(0, math.ceil(math.log2(d)) + 1)]
    ub_exponents = _exponent_range(
        -2 * j, 2 * j + math.ceil(2 * math.log2(Y)), exponent_clamp)
    for d0 in d0_values:
        for kb in ub_exponents:
            B = 2.0 ** kb
            alpha_lo = -2 * j + math.ceil(math.log2(B * d0 / Y ** 2))
            alpha_hi = j + math.ceil(math.log2(d0))
            for ka in _exponent_range(alpha_lo, alpha_hi, exponent_clamp):
                alpha = 2.0 ** ka
                for ku in ub_exponents:
                    entries.append(
                        GridEntry(d0=d0, alpha=alpha, U=2.0 ** ku, B=B))
    return HyperGrid(j=j, entries=tuple(entries))


def grid_cost(T: int, d: int, Y: float,
              exponent_clamp: tuple[int, int] | None = None) -> int:
    """Projected candidate-steps for a length-``T`` calibration run.

    Counts one unit per (candidate, sample) pair for the wrapper runs:
    each session ``j`` trains the next session's non-null candidates on
    the session's samples, after a replay of the full history prefix.
    This is the quantity compared against the compute budget.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    cost = 0
    j = 0
    while 2 ** j <= T:
        session_len = min(2 ** (j + 1) - 1, T) - 2 ** j + 1
        trainees = sum(
            1 for e in build_grid(j + 1, d, Y, exponent_clamp).entries
            if not e.is_null)
        replay = 2 ** j - 1
        cost += trainees * (replay + session_len)
        j += 1
    return cost


# ============================================================
# Calibration state
# ============================================================

@dataclasses.dataclass
class SessionPredictor:
    """Average meta predictor over one completed session.

    Evaluates ``sum_p mean_weight[p] * clip(x @ theta[p], Y)`` — the
    time-average of the per-step weighted-mean predictors, stored as
    averaged weights against the session's frozen candidate matrix.
    """

    j: int
    Y: float
    mean_weights: np.ndarray
    theta_matrix: np.ndarray  # one frozen candidate estimator per row

    def __call__(self, x: np.ndarray) -> float:
        preds = np.clip(self.theta_matrix @ np.asarray(x, float),
                        -self.Y, self.Y)
        return float(self.mean_weights @ preds)


def zero_predictor(x: np.ndarray) -> float:
    """The null estimator available before any session completes."""
    return 0.0


@dataclasses.dataclass
class SessionSummary:
    """Per-session diagnostics row (CSV schema of the calibrate command)."""

    j: int
    grid_size: int
    best_candidate: str
    meta_risk: float
    best_risk: float


@dataclasses.dataclass
class CalibrationState:
    """Mutable state of the doubling-session calibration loop.

    ``candidates``/``theta_matrix``/``log_weights`` describe the
    predicting set for the current session ``j`` (estimators frozen
    strictly before ``2**j``); ``training`` holds the wrapper states that
    will serve session ``j+1``, advancing on every sample.
    """

    d: int
    Y: float
    delta: float
    exponent_clamp: tuple[int, int] | None
    j: int
    t: int
    candidates: list[GridEntry]
    theta_matrix: np.ndarray
    log_weights: np.ndarray
    weight_snapshot_sum: np.ndarray
    snapshot_count: int
    meta_loss_sum: float
    candidate_loss_sum: np.ndarray
    training_entries: list[GridEntry]
    training_states: list[SaewState | None]
    previous_estimator: SessionPredictor | None
    past_estimators: list[SessionPredictor]
    history_x: list[np.ndarray]
    history_y: list[float]
    n_out_of_range: int
    session_rows: list[SessionSummary]

    @property
    def eta(self) -> float:
        """Meta learning rate for the exp-concave clipped square loss."""
        return 1.0 / (8.0 * self.Y ** 2)


def session_delta(delta: float, j: int) -> float:
    """Confidence budget for session ``j``: ``delta / (2 * (j+1)**2)``."""
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if j < 0:
        raise ValueError(f"j must be >= 0, got {j}")
    return delta / (2.0 * (j + 1) ** 2)


def _wrapper_states(grid: HyperGrid, d: int, delta_j: float
                    ) -> tuple[list[GridEntry], list[SaewState | None]]:
    """One fresh wrapper run per non-null entry (null keeps ``None``).

    Nominal sparsity above the ambient dimension is run at ``d0 = d``
    (the truncation keeps every coordinate either way).
    """
    entries = list(grid.entries)
    states: list[SaewState | None] = []
    for entry in entries:
        if entry.is_null:
            states.append(None)
            continue
        params = ProblemParams(d0=min(entry.d0, d), alpha=entry.alpha,
                               U=entry.U, B=entry.B, delta=delta_j)
        states.append(saew_init(params, d))
    return entries, states


def _square_gradient_step(state: SaewState, x: np.ndarray, y: float) -> None:
    # Grid candidates intentionally span misspecified gradient bounds, so
    # the per-candidate bound-exceeded warning carries no signal here.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        saew_step(state, lambda theta: 2.0 * (float(x @ theta) - y) * x)


def _frozen_matrix(entries: Sequence[GridEntry],
                   states: Sequence[SaewState | None],
                   d: int) -> np.ndarray:
    rows = []
    for entry, state in zip(entries, states):
        if state is None:
            rows.append(np.zeros(d))
        else:
            rows.append(saew_estimators(state)[1])
    return np.array(rows)


def calibration_init(d: int, Y: float, delta: float,
                     exponent_clamp: tuple[int, int] | None = None
                     ) -> CalibrationState:
    """Fresh calibration loop at ``t = 1`` (session 0).

    Session 0's candidates predict through zero estimators (nothing was
    observed before ``t = 1``); the states serving session 1 start
    training immediately.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if not (Y > 0.0):
        raise ValueError(f"Y must be > 0, got {Y}")
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    grid0 = build_grid(0, d, Y, exponent_clamp)
    candidates = list(grid0.entries)
    n = len(candidates)
    train_entries, train_states = _wrapper_states(
        build_grid(1, d, Y, exponent_clamp), d, session_delta(delta, 1))
    return CalibrationState(
        d=d, Y=Y, delta=delta, exponent_clamp=exponent_clamp,
        j=0, t=1,
        candidates=candidates,
        theta_matrix=np.zeros((n, d)),
        log_weights=np.zeros(n),
        weight_snapshot_sum=np.zeros(n),
        snapshot_count=0,
        meta_loss_sum=0.0,
        candidate_loss_sum=np.zeros(n),
        training_entries=train_entries,
        training_states=train_states,
        previous_estimator=None,
        past_estimators=[],
        history_x=[], history_y=[],
        n_out_of_range=0,
        session_rows=[],
    )


def _close_session(state: CalibrationState) -> None:
    """Roll over at ``t = 2**(j+1)``: freeze trainees, reset the meta."""
    n = len(state.candidates)
    # Average meta predictor over the finished session.
    if state.snapshot_count > 0:
        mean_w = state.weight_snapshot_sum / state.snapshot_count
    else:
        mean_w = np.full(n, 1.0 / n)
    state.previous_estimator = SessionPredictor(
        j=state.j, Y=state.Y, mean_weights=mean_w,
        theta_matrix=state.theta_matrix.copy())
    state.past_estimators.append(state.previous_estimator)
    # Session diagnostics.
    steps = max(state.snapshot_count, 1)
    best = int(np.argmin(state.candidate_loss_sum))
    state.session_rows.append(SessionSummary(
        j=state.j,
        grid_size=n,
        best_candidate=state.candidates[best].label(),
        meta_risk=state.meta_loss_sum / steps,
        best_risk=float(state.candidate_loss_sum[best]) / steps,
    ))
    # The trainees become the predicting candidates of session j+1.
    state.j += 1
    state.candidates = list(state.training_entries)
    state.theta_matrix = _frozen_matrix(state.training_entries,
                                        state.training_states, state.d)
    m = len(state.candidates)
    state.log_weights = np.zeros(m)
    state.weight_snapshot_sum = np.zeros(m)
    state.snapshot_count = 0
    state.meta_loss_sum = 0.0
    state.candidate_loss_sum = np.zeros(m)
    # New trainees for session j+2: fresh runs replayed over the prefix.
    next_grid = build_grid(state.j + 1, state.d, state.Y,
                           state.exponent_clamp)
    state.training_entries, state.training_states = _wrapper_states(
        next_grid, state.d, session_delta(state.delta, state.j + 1))
    for st in state.training_states:
        if st is None:
            continue
        for x, y in zip(state.history_x, state.history_y):
            _square_gradient_step(st, x, y)


def calibration_step(state: CalibrationState, x: np.ndarray, y: float
                     ) -> tuple[float, CalibrationState]:
    """One sample: meta-predict, observe ``y``, update weights, train.

    Returns the meta prediction (a convex combination of clipped
    candidate predictions, hence itself in ``[-Y, Y]``) and the state.
    Responses outside ``[-Y, Y]`` are accepted and counted in
    ``n_out_of_range``.

    Raises:
        ValueError: non-finite input, or ``x`` of the wrong shape.
    """
    x = np.asarray(x, float)
    if x.shape != (state.d,):
        raise ValueError(f"x has shape {x.shape}, expected ({state.d},)")
    y = float(y)
    if not (np.all(np.isfinite(x)) and math.isfinite(y)):
        raise ValueError("inputs must be finite")

    # Meta prediction from clipped frozen-candidate predictions.
    preds = np.clip(state.theta_matrix @ x, -state.Y, state.Y)
    shifted = state.log_weights - np.max(state.log_weights)
    weights = np.exp(shifted)
    weights /= weights.sum()
    prediction = float(weights @ preds)

    state.weight_snapshot_sum += weights
    state.snapshot_count += 1
    if abs(y) > state.Y:
        state.n_out_of_range += 1

    losses = (preds - y) ** 2
    state.meta_loss_sum += (prediction - y) ** 2
    state.candidate_loss_sum += losses
    state.log_weights -= state.eta * losses
    state.log_weights -= np.max(state.log_weights)

    # Advance the wrappers serving the next session.
    for st in state.training_states:
        if st is not None:
            _square_gradient_step(st, x, y)
    state.history_x.append(x.copy())
    state.history_y.append(y)

    state.t += 1
    if state.t == 2 ** (state.j + 1):
        _close_session(state)
    return prediction, state


def calibration_estimator(state: CalibrationState
                          ) -> Callable[[np.ndarray], float]:
    """Average meta predictor of the previous session.

    During session 0 (nothing completed yet) this is the zero predictor.
    """
    if state.previous_estimator is None:
        return zero_predictor
    return state.previous_estimator


# ============================================================
# Run driver
# ============================================================

def run_calibration(draw: Callable[[int], tuple[np.ndarray, np.ndarray]],
                    T: int, d: int, Y: float, delta: float,
                    budget: int = 50_000_000,
                    exponent_clamp: tuple[int, int] | None = None,
                    ) -> CalibrationState:
    """Run the calibration loop on ``T`` samples from ``draw``.

    Fails fast (before consuming any data) if the projected wrapper work
    ``grid_cost(T, d, Y, exponent_clamp)`` exceeds ``budget``.

    Raises:
        BudgetExceededError: projected cost above the budget.
    """
    cost = grid_cost(T, d, Y, exponent_clamp)
    if cost > budget:
        raise BudgetExceededError(
            f"projected calibration cost {cost} candidate-steps exceeds "
            f"budget {budget}; shrink the horizon, clamp the exponent "
            f"ranges, or raise --budget")
    xs, ys = draw(T)
    state = calibration_init(d, Y, delta, exponent_clamp)
    for t in range(T):
        calibration_step(state, xs[t], float(ys[t]))
    return state
