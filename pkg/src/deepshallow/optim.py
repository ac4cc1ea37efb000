"""Full-batch optimizers compared by the number of gradient calls.

Every method sees the objective through a single closure ``fg(x) -> (f, g)``.
One call of that closure is one gradient call (one "epoch" of full-batch
training) and is charged against ``max_gradient_calls``. The line search of
the conjugate gradient method evaluates ``fg`` at each trial point, so trial
points are charged too.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

METHODS = ("sgd", "rmsprop", "adadelta", "cg")

TERMINATIONS = ("budget_exhausted", "gradient_tolerance_met", "line_search_failure", "non_finite")

# Defaults of the usual deep-learning framework optimizers; lr for adadelta
# follows the original method (1.0).
METHOD_DEFAULTS = {
    "sgd": dict(learning_rate=0.01),
    "rmsprop": dict(learning_rate=0.001, decay_rho=0.9, epsilon=1e-7),
    "adadelta": dict(learning_rate=1.0, decay_rho=0.95, epsilon=1e-7),
    "cg": dict(),
}

ValueAndGrad = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass(frozen=True)
class OptimizerConfig:
    method: str
    learning_rate: float = 0.0
    decay_rho: float = 0.0
    epsilon: float = 0.0
    max_gradient_calls: int = 2000
    cg_gradient_tolerance: float = 1e-5
    cg_beta: str = "pr+"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.max_gradient_calls < 1:
            raise ValueError("max_gradient_calls must be >= 1")
        if not self.cg_gradient_tolerance > 0:
            raise ValueError("cg_gradient_tolerance must be > 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.method in ("rmsprop", "adadelta"):
            if not 0.0 < self.decay_rho < 1.0:
                raise ValueError("decay_rho must lie in (0, 1)")
            if not self.epsilon > 0:
                raise ValueError("epsilon must be > 0")
        if self.cg_beta not in ("pr+", "fr"):
            raise ValueError("cg_beta must be 'pr+' or 'fr'")

    @classmethod
    def for_method(cls, method: str, **overrides) -> "OptimizerConfig":
        """Config with the method's default hyperparameters, then ``overrides``."""
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
        kw = dict(METHOD_DEFAULTS[method])
        kw.update(overrides)
        return cls(method=method, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LineSearchParams:
    c1: float = 1e-4
    c2: float = 0.4
    max_bracket_steps: int = 25
    initial_step: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("line search constants need 0 < c1 < c2 < 1")
        if self.max_bracket_steps < 1:
            raise ValueError("max_bracket_steps must be >= 1")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be > 0")


@dataclass
class TrainTrace:
    method: str
    gradient_calls_used: int
    f_init: float
    f_opt: float
    f_final: float
    objective_history: List[Tuple[int, float]]
    termination: str
    iterations: int = 0
    hyperparameters: dict = field(default_factory=dict)
    diagnostic: str = ""
    x_best: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    x_final: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


class LineSearchError(RuntimeError):
    """No step satisfying the strong Wolfe conditions was found."""


class _Tracker:
    """Counts gradient calls and remembers the best point visited."""

    def __init__(self, fg: ValueAndGrad):
        self.fg = fg
        self.calls = 0
        self.f_best = math.inf
        self.x_best = None
        self.f_first = None

    def __call__(self, x):
        f, g = self.fg(x)
        self.calls += 1
        f = float(f)
        if self.f_first is None:
            self.f_first = f
        if f < self.f_best:
            self.f_best = f
            self.x_best = np.array(x, copy=True)
        return f, g


def _finite(f, g) -> bool:
    return math.isfinite(f) and bool(np.all(np.isfinite(g)))


def _make_trace(config, tracker, history, termination, x_final, iterations=0, diagnostic=""):
    f_init = tracker.f_first
    f_opt = tracker.f_best if math.isfinite(tracker.f_best) else f_init
    return TrainTrace(
        method=config.method,
        gradient_calls_used=tracker.calls,
        f_init=f_init,
        f_opt=f_opt,
        f_final=history[-1][1] if history else f_init,
        objective_history=history,
        termination=termination,
        iterations=iterations,
        hyperparameters=config.to_dict(),
        diagnostic=diagnostic,
        x_best=tracker.x_best,
        x_final=x_final,
    )


def _first_order(fg, x0, config, update):
    """Shared loop: one gradient call, then ``x <- x - update(g)``."""
    tracker = _Tracker(fg)
    x = np.array(x0, dtype=np.float64, copy=True)
    history = []
    termination = "budget_exhausted"
    diagnostic = ""
    for k in range(config.max_gradient_calls):
        f, g = tracker(x)
        if not _finite(f, g):
            termination = "non_finite"
            diagnostic = f"non-finite objective or gradient at gradient call {k + 1}"
            break
        history.append((tracker.calls, f))
        x = x - update(g)
    return _make_trace(config, tracker, history, termination, x, iterations=len(history),
                       diagnostic=diagnostic)


def sgd_run(fg: ValueAndGrad, x0, config: OptimizerConfig) -> TrainTrace:
    """Plain full-batch gradient descent with a fixed learning rate."""
    lr = config.learning_rate
    return _first_order(fg, x0, config, lambda g: lr * g)


def rmsprop_run(fg: ValueAndGrad, x0, config: OptimizerConfig) -> TrainTrace:
    lr, rho, eps = config.learning_rate, config.decay_rho, config.epsilon
    acc = np.zeros(np.shape(x0))

    def update(g):
        acc[...] = rho * acc + (1.0 - rho) * g * g
        return lr * g / (np.sqrt(acc) + eps)

    return _first_order(fg, x0, config, update)


def adadelta_run(fg: ValueAndGrad, x0, config: OptimizerConfig) -> TrainTrace:
    """Adadelta: running averages of squared gradients and squared updates."""
    lr, rho, eps = config.learning_rate, config.decay_rho, config.epsilon
    acc_g = np.zeros(np.shape(x0))
    acc_dx = np.zeros(np.shape(x0))

    def update(g):
        acc_g[...] = rho * acc_g + (1.0 - rho) * g * g
        step = np.sqrt(acc_dx + eps) / np.sqrt(acc_g + eps) * g
        acc_dx[...] = rho * acc_dx + (1.0 - rho) * step * step
        return lr * step

    return _first_order(fg, x0, config, update)


@dataclass
class LineSearchResult:
    alpha: float
    f: float
    g: np.ndarray
    evaluations: int


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic matching values and slopes at ``a`` and ``b``.

    Returns None when the interpolant has no real minimizer.
    """
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0 or not math.isfinite(disc):
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def wolfe_line_search(fg: ValueAndGrad, x: np.ndarray, direction: np.ndarray,
                      params: LineSearchParams = LineSearchParams(),
                      f0: Optional[float] = None, g0: Optional[np.ndarray] = None,
                      alpha0: Optional[float] = None) -> LineSearchResult:
    """Step length satisfying the strong Wolfe conditions along ``direction``.

    Bracketing followed by a zoom with cubic interpolation. ``f0``/``g0`` at
    ``x`` are reused when given; otherwise they cost one extra evaluation.
    Raises ``ValueError`` for a non-descent direction and ``LineSearchError``
    when ``params.max_bracket_steps`` evaluations do not produce a step.
    """
    evals = 0
    if f0 is None or g0 is None:
        f0, g0 = fg(x)
        evals += 1
    dphi0 = float(np.dot(g0, direction))
    if not dphi0 < 0:
        raise ValueError(f"direction is not a descent direction (slope {dphi0!r})")
    c1, c2 = params.c1, params.c2
    budget = params.max_bracket_steps

    def phi(alpha):
        nonlocal evals
        f, g = fg(x + alpha * direction)
        evals += 1
        return float(f), g, float(np.dot(g, direction))

    def sufficient(alpha, f):
        return f <= f0 + c1 * alpha * dphi0

    def zoom(lo, hi):
        # lo/hi: (alpha, f, dphi); lo satisfies sufficient decrease
        while evals < budget:
            a_lo, f_lo, d_lo = lo
            a_hi, f_hi, d_hi = hi
            width = abs(a_hi - a_lo)
            trial = None
            if math.isfinite(f_hi):
                trial = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
            left, right = min(a_lo, a_hi), max(a_lo, a_hi)
            if trial is None or not (left + 1e-3 * width < trial < right - 1e-3 * width):
                trial = 0.5 * (a_lo + a_hi)
            if trial == a_lo or trial == a_hi:
                break
            f, g, d = phi(trial)
            if not math.isfinite(f) or not sufficient(trial, f) or f >= f_lo:
                hi = (trial, f, d)
                continue
            if abs(d) <= -c2 * dphi0:
                return LineSearchResult(trial, f, g, evals)
            if d * (a_hi - a_lo) >= 0:
                hi = lo
            lo = (trial, f, d)
        raise LineSearchError(f"zoom did not converge within {budget} evaluations")

    prev = (0.0, float(f0), dphi0)
    alpha = params.initial_step if alpha0 is None else float(alpha0)
    first = True
    while evals < budget:
        f, g, d = phi(alpha)
        if not math.isfinite(f) or not sufficient(alpha, f) or (not first and f >= prev[1]):
            return zoom(prev, (alpha, f, d))
        if abs(d) <= -c2 * dphi0:
            return LineSearchResult(alpha, f, g, evals)
        if d >= 0:
            return zoom((alpha, f, d), prev)
        # extrapolate with the cubic through the last two points, kept in [1x, 10x]
        trial = _cubic_min(prev[0], prev[1], prev[2], alpha, f, d)
        prev = (alpha, f, d)
        if trial is None or not math.isfinite(trial) or trial <= alpha:
            trial = 2.0 * alpha
        alpha = min(trial, 10.0 * alpha)
        first = False
    raise LineSearchError(f"bracketing did not converge within {budget} evaluations")


def cg_run(fg: ValueAndGrad, x0, config: OptimizerConfig,
           line_search_params: LineSearchParams = LineSearchParams()) -> TrainTrace:
    """Nonlinear conjugate gradient with a strong Wolfe line search.

    Polak-Ribiere-plus coefficient by default (``config.cg_beta="fr"`` gives
    Fletcher-Reeves). The direction is reset to steepest descent every ``n``
    iterations (``n`` = number of parameters) and whenever it fails to be a
    descent direction. A failed line search is retried once along steepest
    descent; a second consecutive failure ends the run.
    """
    tracker = _Tracker(fg)
    x = np.array(x0, dtype=np.float64, copy=True)
    n = x.size
    tol = config.cg_gradient_tolerance
    ls = line_search_params

    f, g = tracker(x)
    history = [(tracker.calls, f)]
    if not _finite(f, g):
        return _make_trace(config, tracker, history, "non_finite", x,
                           diagnostic="non-finite objective at the starting point")
    if np.max(np.abs(g)) <= tol:
        return _make_trace(config, tracker, history, "gradient_tolerance_met", x)

    d = -g
    gg = float(np.dot(g, g))
    alpha0 = ls.initial_step / math.sqrt(gg)
    steepest = True
    since_restart = 0
    iterations = 0
    termination = "budget_exhausted"
    diagnostic = ""

    while tracker.calls < config.max_gradient_calls:
        try:
            res = wolfe_line_search(tracker, x, d, ls, f0=f, g0=g, alpha0=alpha0)
        except LineSearchError as exc:
            if steepest:
                termination = "line_search_failure"
                diagnostic = str(exc)
                break
            d = -g
            alpha0 = ls.initial_step / math.sqrt(gg)
            steepest = True
            since_restart = 0
            continue
        x_new = x + res.alpha * d
        f_new, g_new = res.f, res.g
        if not _finite(f_new, g_new):
            termination = "non_finite"
            diagnostic = f"non-finite value after iteration {iterations + 1}"
            break
        iterations += 1
        history.append((tracker.calls, f_new))
        f_old = f
        x, f, g_old, g = x_new, f_new, g, g_new
        gg_new = float(np.dot(g, g))
        if np.max(np.abs(g)) <= tol:
            termination = "gradient_tolerance_met"
            gg = gg_new
            break

        since_restart += 1
        if since_restart >= n:
            beta = 0.0
        elif config.cg_beta == "fr":
            beta = gg_new / gg
        else:
            beta = max(0.0, float(np.dot(g, g - g_old)) / gg)
        gg = gg_new
        d = -g + beta * d
        slope = float(np.dot(g, d))
        if beta == 0.0 or slope >= 0:
            d = -g
            slope = -gg
            since_restart = 0
            steepest = True
        else:
            steepest = False
        # interpolated first trial from the last decrease, capped at initial_step
        guess = 2.02 * (f - f_old) / slope
        alpha0 = min(ls.initial_step, guess) if guess > 0 and math.isfinite(guess) else ls.initial_step

    return _make_trace(config, tracker, history, termination, x, iterations=iterations,
                       diagnostic=diagnostic)


_RUNNERS = {"sgd": sgd_run, "rmsprop": rmsprop_run, "adadelta": adadelta_run}


def run_method(fg: ValueAndGrad, x0, config: OptimizerConfig,
               line_search_params: LineSearchParams = LineSearchParams()) -> TrainTrace:
    if config.method == "cg":
        return cg_run(fg, x0, config, line_search_params)
    return _RUNNERS[config.method](fg, x0, config)


def run_fit(arch, dataset, x0, config: OptimizerConfig,
            line_search_params: LineSearchParams = LineSearchParams()) -> TrainTrace:
    """Fit network ``arch`` to ``dataset`` from flat parameters ``x0``."""
    from .netcore import make_objective, param_count

    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (param_count(arch),):
        raise ValueError(f"x0 has shape {x0.shape}, architecture {arch.label()} "
                         f"needs ({param_count(arch)},)")
    return run_method(make_objective(arch, dataset), x0, config, line_search_params)
