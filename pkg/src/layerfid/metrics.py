"""Fidelity and EPLG algebra.

Products of fidelities are always accumulated as sums of natural logs in the
order given, then exponentiated once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

EPLG_MAX = 0.8


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class ProcessFidelity:
    value: float
    d: int

    def __post_init__(self):
        if self.d not in (2, 4):
            raise MetricsError(f"dimension must be 2 or 4, got {self.d}")
        if not 0.0 < self.value <= 1.0:
            raise MetricsError(f"process fidelity {self.value} outside (0, 1]")

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class EplgEstimate:
    nominal: float
    lower: float
    upper: float
    N: int
    lf_nominal: float
    flags: frozenset[str] = field(default_factory=frozenset)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.upper - self.lower)

    def to_dict(self) -> dict:
        return {
            "nominal": self.nominal,
            "lower": self.lower,
            "upper": self.upper,
            "N": self.N,
            "lf_nominal": self.lf_nominal,
            "flags": sorted(self.flags),
        }


def _check_d(d: int) -> None:
    if d not in (2, 4):
        raise MetricsError(f"dimension must be 2 or 4, got {d}")


def fidelity_from_error(eps: float, d: int) -> ProcessFidelity:
    """Process fidelity ``((1 - eps)(d + 1) - 1) / d`` from average gate error."""
    _check_d(d)
    if not 0.0 <= eps < d / (d + 1):
        raise MetricsError(f"error {eps} outside [0, {d}/{d + 1}) for d={d}")
    return ProcessFidelity(((1.0 - eps) * (d + 1) - 1.0) / d, d)


def error_from_fidelity(fidelity: float, d: int) -> float:
    """Inverse of :func:`fidelity_from_error`."""
    _check_d(d)
    return 1.0 - (d * float(fidelity) + 1.0) / (d + 1)


def fidelity_from_decay(alpha: float, d: int) -> ProcessFidelity:
    """Process fidelity ``(1 + (d^2 - 1) alpha) / d^2`` from an RB decay."""
    _check_d(d)
    d2 = d * d
    if not -1.0 / (d2 - 1) < alpha <= 1.0:
        raise MetricsError(f"decay {alpha} outside (-1/{d2 - 1}, 1] for d={d}")
    return ProcessFidelity((1.0 + (d2 - 1) * alpha) / d2, d)


def error_from_decay(alpha: float, d: int) -> float:
    return error_from_fidelity(fidelity_from_decay(alpha, d).value, d)


def log_layer_fidelity(fidelities: Iterable[ProcessFidelity | float]) -> float:
    total = 0.0
    n = 0
    for f in fidelities:
        v = float(f)
        if not 0.0 < v <= 1.0:
            raise MetricsError(f"fidelity {v} outside (0, 1]")
        total += math.log(v)
        n += 1
    if n == 0:
        raise MetricsError("layer fidelity of an empty list")
    return total


def layer_fidelity(fidelities: Iterable[ProcessFidelity | float]) -> float:
    """Product of process fidelities, computed in log space."""
    return math.exp(log_layer_fidelity(fidelities))


def eplg(lf: float, N: int) -> float:
    """Error per layered gate of an ``N``-qubit chain with layer fidelity ``lf``.

    Normalises per two-qubit gate: ``4/5 (1 - lf**(1/(N-1)))``.
    """
    if N < 2:
        raise MetricsError(f"EPLG needs N >= 2, got {N}")
    if not 0.0 < lf <= 1.0:
        raise MetricsError(f"layer fidelity {lf} outside (0, 1]")
    return EPLG_MAX * -math.expm1(math.log(lf) / (N - 1))


def eplg_inverse(eplg_value: float, N: int) -> float:
    if N < 2:
        raise MetricsError(f"EPLG needs N >= 2, got {N}")
    if not 0.0 <= eplg_value < EPLG_MAX:
        raise MetricsError(f"EPLG {eplg_value} outside [0, 0.8)")
    return math.exp((N - 1) * math.log1p(-eplg_value / EPLG_MAX))


def eplg_length_curve(oneq: Sequence[float], links: Sequence[float],
                      lengths: Iterable[int]) -> list[tuple[int, EplgEstimate]]:
    """EPLG of the best contiguous ``L``-qubit subchain for each requested ``L``.

    ``oneq`` holds the chain's per-qubit 1Q fidelities and ``links`` its
    ``N - 1`` 2Q fidelities, both in chain order.
    """
    from layerfid.chainsearch import best_subchain

    N = len(oneq)
    out = []
    for L in lengths:
        if not 2 <= L <= N:
            raise MetricsError(f"length {L} outside [2, {N}]")
        _, scored = best_subchain(oneq, links, L)
        value = eplg(scored.score, L)
        out.append((L, EplgEstimate(value, value, value, L, scored.score)))
    return out


def _pipeline(alphas: Sequence[tuple[float, int]]) -> float:
    return layer_fidelity(fidelity_from_decay(a, d) for a, d in alphas)


def propagate_bounds(per_gate_fits: Sequence[tuple[object, int]], N: int) -> EplgEstimate:
    """Nominal and ±SE EPLG from per-gate decay fits.

    ``per_gate_fits`` pairs each fit (anything with ``alpha`` and
    ``se_alpha``) with its dimension. All gates are shifted together: every
    ``alpha + se`` gives the lower EPLG, every ``alpha - se`` the upper one.
    Shifted decays leaving the valid range are clamped and flagged.
    """
    if not per_gate_fits:
        raise MetricsError("no fits to propagate")
    flags = set()
    nominal, hi, lo = [], [], []
    for fit, d in per_gate_fits:
        _check_d(d)
        floor = -1.0 / (d * d - 1)
        a = min(float(fit.alpha), 1.0)
        se = float(fit.se_alpha)
        up, down = a + se, a - se
        if up > 1.0:
            up = 1.0
            flags.add("clamped_upper")
        if down <= floor:
            down = math.nextafter(floor, 1.0)
            flags.add("clamped_lower")
        nominal.append((a, d))
        hi.append((up, d))
        lo.append((down, d))
    lf = _pipeline(nominal)
    e_nom = eplg(lf, N)
    e_low = eplg(_pipeline(hi), N)
    e_up = eplg(_pipeline(lo), N)
    return EplgEstimate(e_nom, min(e_low, e_nom), max(e_up, e_nom), N, lf, frozenset(flags))
