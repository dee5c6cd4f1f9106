"""Closed-form bounds on the weighted disclosure objective.

All formulas are evaluated in nats from per-component statistics
(see :mod:`privbound.model`). Writing mu_i for the user-weight mass,
delta_i = min(s1_i, s2_i), c for the configurable additive constant
(default 4), and gamma_i as defined in the model module:

    upper(eps)   = eps * max_i mu_i + sum_i mu_i (H(Y_i|X_i) + delta_i)
    L1(eps)      = eps * max_i mu_i + sum_i mu_i (H(Y_i|X_i) - H(X_i|Y_i))
    L2(eps)      = sum_i mu_i (H(Y_i|X_i) - (ln(I_i+1)+c)) + eps * max_i mu_i gamma_i
    gap          = upper - L1 = sum_i mu_i (delta_i + H(X_i|Y_i))

The max in L2 runs over components with H(X_i) > 0 only. L2 may be
negative; it is reported raw, and only the combined lower bound is clamped
at 0 (a constant release always achieves 0).

The budget allocation that backs the mechanism constructions puts the whole
budget on one argmax component, capped just below H(X_i) so the
per-component randomized construction keeps its mixing weight eps_i/H(X_i)
below 1; any capped-off remainder is reported as overflow, never silently
redistributed.

For eps = 0 the per-component ceiling can be strengthened using the exact
threshold integral

    T = sum_y integral_0^1 F_y(t) ln F_y(t) dt,
    F_y(t) = P_X{ P(y|X) >= t },

which is a sum of finitely many flat segments and is computed exactly by
sorting the threshold values. The strengthened ceiling for one component is
min{U1, U2} with U1 = H(Y|X) and U2 = H(Y|X) + T + I(X;Y); U2 is attained
when |Y| = 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import RegimeError, ValidationError
from .model import Component, Problem, ProblemStats, validate

CAP_MARGIN = 1e-12


@dataclass(frozen=True)
class Allocation:
    """A split of the leakage budget across components.

    ``overflow`` is the part of the budget that could not be assigned to
    the chosen component because of its per-component cap.
    """

    eps_per_component: tuple[float, ...]
    variant: str
    target: int
    overflow: float = 0.0

    def __post_init__(self) -> None:
        e = tuple(float(v) for v in self.eps_per_component)
        if any(v < 0.0 for v in e):
            raise ValidationError(f"allocation has a negative share: {e}")
        object.__setattr__(self, "eps_per_component", e)

    @property
    def total(self) -> float:
        return float(sum(self.eps_per_component))


@dataclass(frozen=True)
class BoundsReport:
    """Upper/lower bounds for one problem at one budget."""

    epsilon: float
    upper: float
    lower_frl: float
    lower_sfrl: float
    lower: float
    gap_formula: float
    trivial: bool
    deterministic: bool
    perfect_privacy: bool
    beta: tuple[float, ...] | None = None
    pp_upper: float | None = None
    pp_u1: tuple[float, ...] | None = None
    pp_u2: tuple[float, ...] | None = None
    exact: float | None = None


def _require_nontrivial(p: Problem, stats: ProblemStats, op: str) -> None:
    if stats.trivial:
        raise RegimeError(
            f"{op} requires epsilon < total mutual information "
            f"({p.epsilon} >= {stats.total_mi}); use trivial_optimum instead"
        )


def allocate_epsilon(p: Problem, stats: ProblemStats, variant: str = "frl") -> Allocation:
    """Put the whole budget on the component with the largest coefficient.

    variant "frl":   argmax_i mu_i
    variant "esfrl": argmax_i mu_i * gamma_i over components with H(X_i) > 0

    Ties break toward the lowest index. The chosen share is capped just
    below H(X_i) (the randomized release's validity range); the remainder
    is reported as overflow.
    """
    _require_nontrivial(p, stats, "allocate_epsilon")
    if variant == "frl":
        coeff = [s.mu for s in stats]
    elif variant == "esfrl":
        coeff = [s.mu * s.gamma if s.gamma is not None else -math.inf for s in stats]
        if all(c == -math.inf for c in coeff):
            if p.epsilon > 0.0:
                raise RegimeError("esfrl allocation impossible: every component has H(X) = 0")
            coeff = [0.0 for _ in stats]
    else:
        raise ValidationError(f"unknown allocation variant {variant!r}")
    target = int(np.argmax(coeff))  # argmax takes the first (lowest-index) maximizer
    shares = [0.0] * len(stats)
    cap = max(0.0, stats[target].hX - CAP_MARGIN)
    shares[target] = min(p.epsilon, cap)
    return Allocation(
        eps_per_component=tuple(shares),
        variant=variant,
        target=target,
        overflow=p.epsilon - shares[target],
    )


def upper_bound(p: Problem, stats: ProblemStats) -> float:
    """eps * max_i mu_i + sum_i mu_i (H(Y_i|X_i) + delta_i)."""
    _require_nontrivial(p, stats, "upper_bound")
    mu_max = max(s.mu for s in stats)
    return p.epsilon * mu_max + sum(s.mu * (s.hY_given_X + s.delta) for s in stats)


def lower_bound_frl(p: Problem, stats: ProblemStats) -> float:
    """eps * max_i mu_i + sum_i mu_i (H(Y_i|X_i) - H(X_i|Y_i)).

    Pure formula evaluation; meaningful as an achievable value only below
    the trivial-regime boundary, but evaluable anywhere.
    """
    mu_max = max(s.mu for s in stats)
    return p.epsilon * mu_max + sum(s.mu * (s.hY_given_X - s.hX_given_Y) for s in stats)


def _esfrl_slope(stats: ProblemStats) -> float:
    """max_i mu_i * gamma_i over components with H(X_i) > 0 (0 if none)."""
    slopes = [s.mu * s.gamma for s in stats if s.gamma is not None]
    return max(slopes) if slopes else 0.0


def lower_bound_sfrl(p: Problem, stats: ProblemStats) -> float:
    """sum_i mu_i (H(Y_i|X_i) - (ln(I_i+1)+c)) + eps * max_i mu_i gamma_i.

    May be negative; callers clamp the combined lower bound, not this one.
    """
    c = p.sfrl_constant
    base = sum(s.mu * (s.hY_given_X - (math.log(s.iXY + 1.0) + c)) for s in stats)
    return base + p.epsilon * _esfrl_slope(stats)


def esfrl_beta(p: Problem, stats: ProblemStats) -> tuple[float, ...]:
    """Per-component beta_i with the whole budget on the esfrl argmax.

    beta_i = H(Y_i|X_i) - a_i H(X_i|Y_i) + eps_i - (1-a_i)(ln(I_i+1)+c),
    a_i = eps_i / H(X_i). The budget is placed uncapped on the argmax of
    mu_i * gamma_i, so that sum_i mu_i beta_i reproduces the sfrl lower
    bound identically.
    """
    slopes = [s.mu * s.gamma if s.gamma is not None else -math.inf for s in stats]
    target = int(np.argmax(slopes)) if any(v > -math.inf for v in slopes) else -1
    c = p.sfrl_constant
    betas = []
    for i, s in enumerate(stats):
        eps_i = p.epsilon if i == target else 0.0
        alpha = eps_i / s.hX if s.hX > 0.0 else 0.0
        betas.append(
            s.hY_given_X
            - alpha * s.hX_given_Y
            + eps_i
            - (1.0 - alpha) * (math.log(s.iXY + 1.0) + c)
        )
    return tuple(betas)


def gap_identity(p: Problem, stats: ProblemStats) -> float:
    """sum_i mu_i (delta_i + H(X_i|Y_i)); equals upper - lower_frl."""
    return float(sum(s.mu * (s.delta + s.hX_given_Y) for s in stats))


def excess_integral(c: Component) -> float:
    """sum_y integral_0^1 F_y(t) ln F_y(t) dt with F_y(t) = P_X{P(y|X) >= t}.

    F_y is a non-increasing step function whose jumps sit at the distinct
    values of {P(y|x)}_x, so the integral is an exact finite sum of flat
    segments; no quadrature is involved. Always <= 0.
    """
    px = c.joint.marginal_rows().probs
    cond = c.cond_y_given_x()  # (|X|, |Y|)
    total = 0.0
    for y in range(c.card_y):
        vals = cond[:, y]
        thresholds = np.unique(vals[vals > 0.0])
        prev = 0.0
        for t in thresholds:
            f = float(px[vals >= t].sum())
            if f > 0.0:
                total += (float(t) - prev) * f * math.log(f)
            prev = float(t)
    return min(0.0, total)


def perfect_privacy_bounds(p: Problem, stats: ProblemStats) -> BoundsReport:
    """Zero-leakage bounds with the strengthened per-component ceiling.

    lower = max(0, L1(0), L2(0)); upper = sum_i mu_i (min{U1_i, U2_i} +
    delta_i) with U1_i = H(Y_i|X_i) and U2_i = H(Y_i|X_i) + T_i + I_i.
    U2_i is reported per component (it is attained when |Y_i| = 2).
    """
    if p.epsilon != 0.0:
        raise RegimeError(f"perfect_privacy_bounds requires epsilon = 0, got {p.epsilon}")
    l1 = lower_bound_frl(p, stats)
    l2 = lower_bound_sfrl(p, stats)
    u1 = tuple(s.hY_given_X for s in stats)
    u2 = tuple(
        s.hY_given_X + excess_integral(c) + s.iXY for c, s in zip(p.components, stats)
    )
    pp_upper = float(sum(s.mu * (min(a, b) + s.delta) for s, a, b in zip(stats, u1, u2)))
    return BoundsReport(
        epsilon=0.0,
        upper=pp_upper,
        lower_frl=l1,
        lower_sfrl=l2,
        lower=max(0.0, l1, l2),
        gap_formula=gap_identity(p, stats),
        trivial=False,
        deterministic=stats.deterministic,
        perfect_privacy=True,
        beta=esfrl_beta(p, stats),
        pp_upper=pp_upper,
        pp_u1=u1,
        pp_u2=u2,
    )


def deterministic_exact(p: Problem, stats: ProblemStats) -> float:
    """eps * max_i mu_i + sum_i mu_i H(Y_i|X_i) when every X_i = f_i(Y_i).

    Exact in the regime where the whole budget fits on the argmax
    component; see the allocation cap note in the module docstring.
    """
    if not stats.deterministic:
        worst = max(s.hX_given_Y for s in stats)
        raise RegimeError(f"deterministic_exact requires every H(X|Y) ~ 0 (max is {worst})")
    _require_nontrivial(p, stats, "deterministic_exact")
    mu_max = max(s.mu for s in stats)
    return p.epsilon * mu_max + float(sum(s.mu * s.hY_given_X for s in stats))


def compute_bounds(p: Problem, stats: ProblemStats | None = None) -> BoundsReport:
    """Assemble the full report for one problem (non-trivial regime)."""
    if stats is None:
        stats = validate(p)
    _require_nontrivial(p, stats, "compute_bounds")
    if p.epsilon == 0.0:
        report = perfect_privacy_bounds(p, stats)
    else:
        l1 = lower_bound_frl(p, stats)
        l2 = lower_bound_sfrl(p, stats)
        report = BoundsReport(
            epsilon=p.epsilon,
            upper=upper_bound(p, stats),
            lower_frl=l1,
            lower_sfrl=l2,
            lower=max(0.0, l1, l2),
            gap_formula=gap_identity(p, stats),
            trivial=False,
            deterministic=stats.deterministic,
            perfect_privacy=False,
            beta=esfrl_beta(p, stats),
        )
    if stats.deterministic:
        report = replace(report, exact=deterministic_exact(p, stats))
    return report
