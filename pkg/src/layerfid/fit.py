"""Exponential RB decay fits and the randomization / Clifford-length scans."""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from layerfid.metrics import EplgEstimate, propagate_bounds

MAX_ITER = 200
STEP_TOL = 1e-10
B_MARGIN = 0.05
DEFAULT_TRIALS = 30
CLIFFORD_LENGTHS = (1, 30, 40, 60, 80, 100, 150, 200, 300, 400, 500, 600)


class FitError(RuntimeError):
    pass


class InsufficientDataError(FitError):
    pass


class DegenerateDecayError(FitError):
    pass


class ConvergenceError(FitError):
    pass


@dataclass(frozen=True)
class FitResult:
    a: float
    alpha: float
    b: float
    se_a: float
    se_alpha: float
    se_b: float
    covariance: np.ndarray = field(repr=False, compare=False)
    residual_rms: float
    n_points: int
    converged: bool = True
    gate: tuple[int, ...] = ()
    flags: frozenset[str] = frozenset()

    @property
    def d(self) -> int:
        return 2 if len(self.gate) == 1 else 4

    def to_dict(self) -> dict:
        return {
            "gate": list(self.gate),
            "a": self.a, "alpha": self.alpha, "b": self.b,
            "se_a": self.se_a, "se_alpha": self.se_alpha, "se_b": self.se_b,
            "covariance": np.asarray(self.covariance).tolist(),
            "residual_rms": self.residual_rms,
            "n_points": self.n_points,
            "converged": self.converged,
            "flags": sorted(self.flags),
        }


@dataclass(frozen=True)
class ScanResult:
    axis: int
    estimate: EplgEstimate | None
    trials: tuple[EplgEstimate, ...] = ()
    flags: frozenset[str] = frozenset()

    @property
    def half_width(self) -> float:
        """Median bound half-width over trials."""
        if self.trials:
            return float(np.median([t.half_width for t in self.trials]))
        return self.estimate.half_width if self.estimate else math.nan

    def row(self) -> dict:
        e = self.estimate
        return {
            "axis": self.axis,
            "nominal": e.nominal if e else None,
            "lower": e.lower if e else None,
            "upper": e.upper if e else None,
            "half_width": self.half_width if e else None,
            "flags": ";".join(sorted(self.flags)),
        }


def _select(data, use_randomizations, use_lengths):
    counts = np.asarray(data.counts)
    lengths = np.asarray(data.lengths)
    if use_randomizations is not None:
        rows = sorted(set(int(r) for r in use_randomizations))
        counts = counts[rows, :]
    if use_lengths is not None:
        keep = set(int(x) for x in use_lengths)
        cols = [j for j, x in enumerate(lengths) if int(x) in keep]
        counts = counts[:, cols]
        lengths = lengths[cols]
    return counts, lengths


def _model(theta, x):
    a, alpha, b = theta
    return a * alpha ** x + b


def _jacobian(theta, x):
    a, alpha, b = theta
    ax = alpha ** x
    return np.column_stack([ax, a * x * alpha ** (x - 1), np.ones_like(x)])


def _initial_guesses(x, y, weight_class):
    tail = y[-max(1, len(y) // 3):]
    guesses = []
    for b0 in (float(np.min(tail)), 1.0 / 2 ** weight_class):
        z = y - b0
        ok = z > 0
        if ok.sum() >= 2 and np.ptp(x[ok]) > 0:
            slope, icpt = np.polyfit(x[ok], np.log(z[ok]), 1)
            alpha0 = float(np.clip(math.exp(slope), 1e-3, 1 - 1e-9))
            a0 = float(math.exp(icpt))
        else:
            alpha0, a0 = 0.99, float(y[0] - b0)
        guesses.append((a0 if a0 != 0 else 1e-3, alpha0, b0))
    return guesses


def _profile_guess(x, y, w, weight_class):
    """Best (a, alpha, b) over a logit grid of alpha, solving a and b linearly."""
    best = None
    for z in np.linspace(-2.0, 14.0, 161):
        alpha = 1.0 / (1.0 + math.exp(-z))
        A = np.column_stack([alpha ** x, np.ones_like(x)]) * np.sqrt(w)[:, None]
        coef, *_ = np.linalg.lstsq(A, y * np.sqrt(w), rcond=None)
        r = A @ coef - y * np.sqrt(w)
        c = float(r @ r)
        if best is None or c < best[0]:
            best = (c, (float(coef[0]), alpha, float(coef[1])))
    return best[1]


def _levenberg(x, y, w, theta0, fixed_b=None):
    """Damped Gauss-Newton on (a, logit alpha[, b])."""
    sw = np.sqrt(w)
    free_b = fixed_b is None

    def to_theta(p):
        return np.array([p[0], 1.0 / (1.0 + math.exp(-p[1])), p[2] if free_b else fixed_b])

    def cost(p):
        r = (y - _model(to_theta(p), x)) * sw
        return float(r @ r), r

    a0, alpha0, b0 = theta0
    alpha0 = min(max(alpha0, 1e-9), 1 - 1e-12)
    p = np.array([a0, math.log(alpha0 / (1 - alpha0))] + ([b0] if free_b else []), dtype=float)
    c, r = cost(p)
    lam = 1e-3
    for _ in range(MAX_ITER):
        th = to_theta(p)
        J = _jacobian(th, x)
        J[:, 1] *= th[1] * (1 - th[1])
        if not free_b:
            J = J[:, :2]
        J = J * sw[:, None]
        A = J.T @ J
        g = J.T @ r
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(np.diag(A) + 1e-300), g)
            except np.linalg.LinAlgError:
                lam *= 10
                if lam > 1e12:
                    return p, c, False
                continue
            trial = p + step
            if abs(trial[1]) > 700:
                lam *= 10
                if lam > 1e12:
                    return p, c, False
                continue
            c_new, r_new = cost(trial)
            if c_new <= c:
                break
            lam *= 10
            if lam > 1e12:
                # no descent direction left: at a minimum to working precision
                return p, c, True
        rel = np.linalg.norm(step) / (np.linalg.norm(p) + 1e-30)
        stalled = c > 0 and c - c_new <= 1e-14 * c and rel < 1e-7
        p, c, r = trial, c_new, r_new
        lam = max(lam / 10, 1e-12)
        if rel < STEP_TOL or c == 0.0 or stalled:
            return p, c, True
    return p, c, False


def fit_decay(data, use_randomizations: Sequence[int] | None = None,
              use_lengths: Sequence[int] | None = None) -> FitResult:
    """Weighted least-squares fit of ``P(x) = a * alpha**x + b``.

    The fit runs on per-length means pooled over the selected
    randomizations, weighted by binomial inverse variances. Standard errors
    come from the Jacobian covariance scaled by the reduced chi-square (left
    unscaled when there are no spare degrees of freedom).
    """
    counts, lengths = _select(data, use_randomizations, use_lengths)
    n_r = counts.shape[0]
    if n_r < 1:
        raise InsufficientDataError("no randomizations selected")
    x = np.asarray(lengths, dtype=float)
    if len(set(x.tolist())) < 3:
        if len(x) > 1 and np.ptp(x) == 0:
            raise DegenerateDecayError("all lengths identical")
        raise InsufficientDataError(f"need at least 3 distinct lengths, got {len(set(x.tolist()))}")
    shots = int(data.shots)
    y = counts.mean(axis=0) / shots
    weight_class = len(data.gate)

    if np.ptp(y) == 0.0:
        if y[0] == 1.0:
            # no decay at all: alpha = 1, amplitude pinned by the known asymptote
            b = 1.0 / 2 ** weight_class
            return FitResult(1.0 - b, 1.0, b, 0.0, 0.0, 0.0, np.zeros((3, 3)), 0.0, len(x), True,
                             tuple(data.gate))
        raise DegenerateDecayError("degenerate decay: survival probability is constant")

    pq = np.maximum(y * (1 - y), 1.0 / (4 * shots))
    w = (shots * n_r) / pq

    guesses = _initial_guesses(x, y, weight_class) + [_profile_guess(x, y, w, weight_class)]
    best = None
    for guess in guesses:
        p, c, ok = _levenberg(x, y, w, guess)
        if ok and -B_MARGIN <= p[2] <= 1.0 + B_MARGIN and (best is None or c < best[1]):
            best = (p, c)
    flags = frozenset()
    if best is not None:
        p, chi2 = best
        alpha = 1.0 / (1.0 + math.exp(-p[1]))
        theta = np.array([p[0], alpha, p[2]])
        J = _jacobian(theta, x)
    else:
        # asymptote not identifiable from the data: pin it to the uniform-outcome value
        b_fix = 1.0 / 2 ** weight_class
        best = None
        for guess in guesses:
            p, c, ok = _levenberg(x, y, w, (guess[0], guess[1], b_fix), fixed_b=b_fix)
            if ok and (best is None or c < best[1]):
                best = (p, c)
        if best is None:
            raise ConvergenceError(f"fit did not converge within {MAX_ITER} iterations")
        p, chi2 = best
        alpha = 1.0 / (1.0 + math.exp(-p[1]))
        theta = np.array([p[0], alpha, b_fix])
        J = _jacobian(theta, x)[:, :2]
        flags = frozenset({"b_pinned"})
    Jw = J * np.sqrt(w)[:, None]
    try:
        cov = np.linalg.inv(Jw.T @ Jw)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(Jw.T @ Jw)
    dof = len(x) - J.shape[1]
    if dof > 0:
        cov = cov * (chi2 / dof)
    if J.shape[1] == 2:
        full = np.zeros((3, 3))
        full[:2, :2] = cov
        cov = full
    cov = 0.5 * (cov + cov.T)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    resid = y - _model(theta, x)
    return FitResult(float(theta[0]), float(alpha), float(theta[2]), float(se[0]), float(se[1]), float(se[2]),
                     cov, float(np.sqrt(np.mean(resid ** 2))), len(x), True, tuple(data.gate), flags)


def subsample_randomizations(data, r: int, seed: int):
    """``r`` randomizations drawn without replacement, rows in original order."""
    total = np.asarray(data.counts).shape[0]
    if not 1 <= r <= total:
        raise ValueError(f"r={r} outside [1, {total}]")
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(total, size=r, replace=False))
    return dataclasses.replace(data, counts=np.asarray(data.counts)[rows, :])


def _trial_seed(seed: int, *keys: int) -> int:
    ss = np.random.SeedSequence([seed, *keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _estimate(datasets, N, use_lengths=None):
    fits = [(fit_decay(d, use_lengths=use_lengths), 2 if len(d.gate) == 1 else 4) for d in datasets]
    return propagate_bounds(fits, N)


def _aggregate(axis, estimates, N, failures):
    flags = {"fit_failures"} if failures else set()
    if not estimates:
        return ScanResult(axis, None, (), frozenset(flags | {"unfittable"}))
    nom = float(np.median([e.nominal for e in estimates]))
    lo = float(np.median([e.lower for e in estimates]))
    up = float(np.median([e.upper for e in estimates]))
    lf = float(np.median([e.lf_nominal for e in estimates]))
    agg = EplgEstimate(nom, min(lo, nom), max(up, nom), N, lf)
    return ScanResult(axis, agg, tuple(estimates), frozenset(flags))


def randomization_scan(per_gate_data: Sequence, r_values: Sequence[int], trials: int = DEFAULT_TRIALS,
                       seed: int = 0, N: int | None = None, threads: int = 1) -> list[ScanResult]:
    """EPLG with ±SE bounds versus the number of randomizations used.

    For each ``r`` every trial subsamples ``r`` randomizations per gate,
    refits all gates and propagates bounds; the reported estimate is the
    trial median.
    """
    N = N if N is not None else _chain_size(per_gate_data)
    r_values = sorted(set(int(r) for r in r_values))

    def one(args):
        r, t = args
        subs = [subsample_randomizations(d, r, _trial_seed(seed, r, t, g)) for g, d in enumerate(per_gate_data)]
        try:
            return _estimate(subs, N)
        except FitError:
            return None

    jobs = [(r, t) for r in r_values for t in range(trials)]
    results = _map(one, jobs, threads)
    out = []
    for r in r_values:
        ests = [e for (rr, _), e in zip(jobs, results) if rr == r and e is not None]
        out.append(_aggregate(r, ests, N, len(ests) < trials))
    return out


def clifford_scan(per_gate_data: Sequence, cutoffs: Sequence[int], N: int | None = None,
                  r: int = 10, threads: int = 1) -> list[ScanResult]:
    """EPLG with ±SE bounds versus the largest Clifford length kept.

    Uses the first ``r`` randomizations of every gate.
    """
    N = N if N is not None else _chain_size(per_gate_data)
    lengths = [int(x) for x in per_gate_data[0].lengths]
    for c in cutoffs:
        if int(c) not in lengths:
            raise ValueError(f"cutoff {c} is not one of the measured lengths {lengths}")
    subset = [dataclasses.replace(d, counts=np.asarray(d.counts)[: min(r, np.asarray(d.counts).shape[0]), :])
              for d in per_gate_data]

    def one(c):
        keep = [x for x in lengths if x <= c]
        if len(keep) < 3:
            return ScanResult(c, None, (), frozenset({"unfittable"}))
        try:
            est = _estimate(subset, N, use_lengths=keep)
        except FitError:
            return ScanResult(c, None, (), frozenset({"unfittable", "fit_failures"}))
        return ScanResult(c, est, (est,))

    return _map(one, sorted(set(int(c) for c in cutoffs)), threads)


def _chain_size(per_gate_data) -> int:
    return len({q for d in per_gate_data for q in d.gate})


def _map(fn, items, threads):
    items = list(items)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]
