"""Monte Carlo verification of the sketch estimator's statistical behavior.

The estimator x^T S S^T y is unbiased for x^T y, with variance at most
(2/b) ||x||^2 ||y||^2 for a single count sketch of width b and (2/d) for a
stack of N independent sketches (d = N*b). Stacking therefore scales the
variance like 1/N, and because the stack's 1/sqrt(N) weighting anticipates
keeping only N of N+e sub-sketches, dropping any e of them preserves
unbiasedness without re-weighting. At the matrix level this yields

    P( ||AB - A S S^T B||_F^2 > eps ||A||_F^2 ||B||_F^2 ) <= theta

whenever d >= 2 / (eps * theta), and the expected squared error is at most
(2/d) ||A||_F^2 ||B||_F^2. These are Markov-style bounds, so the checks
here verify the bound, not tightness: means get a standard-error window,
variances a 5% slack, failure fractions a 3-sigma binomial allowance.

All routines draw their sketches through the production constructors with
sub-seeds spawned from one master seed, so every report is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, sqrt

import numpy as np

from .matrix import as_matrix
from .sketch import CountSketch, OverSketch, make_count_sketch


def frobenius_error(exact, approx) -> float:
    """Relative Frobenius distance ||exact - approx||_F / ||exact||_F."""
    x = as_matrix(exact)
    y = as_matrix(approx)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    denom = np.linalg.norm(x)
    if denom == 0.0:
        raise ValueError("relative error is undefined for a zero exact matrix")
    return float(np.linalg.norm(x - y) / denom)


@dataclass(frozen=True)
class AccuracyParams:
    """Target (epsilon, theta) accuracy and the sketch dimension it needs."""

    epsilon: float
    theta: float

    def __post_init__(self) -> None:
        if not (0.0 < self.epsilon < 1.0 and 0.0 < self.theta < 1.0):
            raise ValueError("epsilon and theta must lie in (0, 1)")

    @property
    def target_dim(self) -> int:
        return ceil(2.0 / (self.epsilon * self.theta))

    def keep_count(self, block_size: int) -> int:
        """Sub-sketches needed so keep * b >= the target dimension."""
        return ceil(self.target_dim / block_size)


@dataclass(frozen=True)
class MomentReport:
    trials: int
    expected: float
    mean: float
    std_error: float
    variance: float
    variance_bound: float

    @property
    def mean_offset_sigmas(self) -> float:
        if self.std_error == 0.0:
            return 0.0 if self.mean == self.expected else float("inf")
        return abs(self.mean - self.expected) / self.std_error

    @property
    def variance_ratio(self) -> float:
        return self.variance / self.variance_bound if self.variance_bound else 0.0

    def mean_ok(self, sigmas: float = 4.0) -> bool:
        return self.mean_offset_sigmas <= sigmas

    def variance_ok(self, slack: float = 1.05) -> bool:
        return self.variance <= slack * self.variance_bound


def _trial_seeds(seed: int, trials: int):
    master = np.random.SeedSequence(seed)
    children = master.spawn(trials + 1)
    return children[0], children[1:]


def _fixed_pair(n: int, x, y, seed_seq) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed_seq)
    xv = rng.standard_normal(n) if x is None else np.asarray(x, dtype=np.float64)
    yv = rng.standard_normal(n) if y is None else np.asarray(y, dtype=np.float64)
    if xv.shape != (n,) or yv.shape != (n,):
        raise ValueError("x and y must be length-n vectors")
    return xv, yv


def _report(estimates: np.ndarray, expected: float, bound: float) -> MomentReport:
    mean = float(estimates.mean())
    var = float(estimates.var(ddof=1)) if len(estimates) > 1 else 0.0
    return MomentReport(
        trials=len(estimates),
        expected=expected,
        mean=mean,
        std_error=sqrt(var / len(estimates)),
        variance=var,
        variance_bound=bound,
    )


def verify_sketch_moments(
    n: int,
    width: int,
    trials: int,
    seed: int,
    x=None,
    y=None,
    sketch_factory=make_count_sketch,
) -> MomentReport:
    """Estimate mean/variance of x^T S S^T y over independent sketch draws.

    sketch_factory is injectable so a deliberately corrupted sketch (wrong
    sign law, say) can be shown to fail the unbiasedness check.
    """
    xy_seed, children = _trial_seeds(seed, trials)
    xv, yv = _fixed_pair(n, x, y, xy_seed)
    stacked = np.vstack([xv, yv])
    estimates = np.empty(trials)
    for t, child in enumerate(children):
        sk: CountSketch = sketch_factory(n, width, child)
        sxy = sk.apply_right(stacked)
        estimates[t] = sxy[0] @ sxy[1]
    bound = (2.0 / width) * float(xv @ xv) * float(yv @ yv)
    return _report(estimates, float(xv @ yv), bound)


def verify_stacked_moments(
    n: int,
    block_size: int,
    keep: int,
    trials: int,
    seed: int,
    spare: int = 0,
    drop: int = 0,
    x=None,
    y=None,
) -> MomentReport:
    """Moments of the stacked estimator, optionally dropping sub-sketches.

    With drop = spare = e this is the straggler scenario: e of the keep+e
    sub-sketches are discarded per trial and the scale stays 1/sqrt(keep),
    so the mean must still match x^T y and the variance obeys the 2/d bound
    with d = keep * block_size.
    """
    if drop > spare:
        raise ValueError("cannot drop more sub-sketches than the spare count")
    xy_seed, children = _trial_seeds(seed, trials)
    xv, yv = _fixed_pair(n, x, y, xy_seed)
    stacked = np.vstack([xv, yv])
    count = keep + spare
    estimates = np.empty(trials)
    for t, child in enumerate(children):
        sketch_seed, drop_seed = child.spawn(2)
        spec = OverSketch.random(n, block_size, keep, spare, sketch_seed)
        sxy = spec.apply_right(stacked)
        per_sub = np.einsum(
            "kb,kb->k",
            sxy[0].reshape(count, block_size),
            sxy[1].reshape(count, block_size),
        )
        if drop:
            rng = np.random.default_rng(drop_seed)
            survivors = rng.choice(count, size=count - drop, replace=False)
            estimates[t] = per_sub[survivors].sum()
        else:
            estimates[t] = per_sub.sum()
    d = keep * block_size
    bound = (2.0 / d) * float(xv @ xv) * float(yv @ yv)
    return _report(estimates, float(xv @ yv), bound)


@dataclass(frozen=True)
class ErrorSample:
    """One sketched-product trial; the trial index plus the master seed
    fully determine the sketch draw."""

    trial: int
    relative_error: float
    squared_error: float
    bound: float  # epsilon * ||A||_F^2 * ||B||_F^2

    @property
    def failed(self) -> bool:
        return self.squared_error > self.bound


@dataclass(frozen=True)
class GuaranteeReport:
    trials: int
    failures: int
    epsilon: float
    theta: float
    mean_sq_error: float
    expectation_bound: float
    samples: tuple[ErrorSample, ...]

    @property
    def failure_fraction(self) -> float:
        return self.failures / self.trials

    @property
    def binomial_se(self) -> float:
        return sqrt(self.theta * (1.0 - self.theta) / self.trials)

    def fraction_ok(self, sigmas: float = 3.0) -> bool:
        return self.failure_fraction <= self.theta + sigmas * self.binomial_se

    def expectation_ok(self, slack: float = 1.05) -> bool:
        return self.mean_sq_error <= slack * self.expectation_bound


def _sketched_product_with_drops(
    a: np.ndarray,
    b: np.ndarray,
    spec: OverSketch,
    drop: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """A S S^T B with `drop` sub-sketches discarded independently per block."""
    bs = spec.block_size
    count = spec.count
    sa = spec.apply_right(a)
    sb = spec.apply_left(b)
    partials = np.stack(
        [sa[:, k * bs : (k + 1) * bs] @ sb[k * bs : (k + 1) * bs, :] for k in range(count)]
    )
    if drop == 0:
        return partials.sum(axis=0)
    m, l = a.shape[0], b.shape[1]
    out = np.zeros((m, l))
    for i0 in range(0, m, bs):
        for j0 in range(0, l, bs):
            survivors = rng.choice(count, size=count - drop, replace=False)
            rows = slice(i0, min(i0 + bs, m))
            cols = slice(j0, min(j0 + bs, l))
            out[rows, cols] = partials[survivors, rows, cols].sum(axis=0)
    return out


def verify_product_guarantee(
    a,
    b,
    block_size: int,
    keep: int,
    spare: int,
    epsilon: float,
    theta: float,
    trials: int,
    seed: int,
    drop: int | None = None,
) -> GuaranteeReport:
    """Failure fraction of the (epsilon, theta) bound over sketch draws.

    Per trial a fresh stacked sketch is drawn; each block of the product
    independently discards `drop` (default: spare) sub-sketches, matching
    per-block straggler ignoring. Requires keep * block_size to be a valid
    accuracy dimension for the bound to be meaningful.
    """
    av = as_matrix(a)
    bv = as_matrix(b)
    drop = spare if drop is None else drop
    if drop > spare:
        raise ValueError("cannot drop more sub-sketches than the spare count")
    exact = av @ bv
    exact_norm = float(np.linalg.norm(exact))
    norm_product = float(np.linalg.norm(av) ** 2 * np.linalg.norm(bv) ** 2)
    threshold = epsilon * norm_product
    _, children = _trial_seeds(seed, trials)
    samples = []
    sq_errors = np.empty(trials)
    for t, child in enumerate(children):
        sketch_seed, drop_seed = child.spawn(2)
        spec = OverSketch.random(av.shape[1], block_size, keep, spare, sketch_seed)
        approx = _sketched_product_with_drops(
            av, bv, spec, drop, np.random.default_rng(drop_seed)
        )
        err = float(np.linalg.norm(exact - approx))
        sq_errors[t] = err * err
        samples.append(
            ErrorSample(
                trial=t,
                relative_error=err / exact_norm if exact_norm else float("nan"),
                squared_error=err * err,
                bound=threshold,
            )
        )
    failures = int(np.sum(sq_errors > threshold))
    d = keep * block_size
    return GuaranteeReport(
        trials=trials,
        failures=failures,
        epsilon=epsilon,
        theta=theta,
        mean_sq_error=float(sq_errors.mean()),
        expectation_bound=(2.0 / d) * norm_product,
        samples=tuple(samples),
    )


@dataclass(frozen=True)
class QuantileReport:
    trials: int
    level: float
    quantile: float
    bound: float

    def ok(self, slack: float = 1.1) -> bool:
        return self.quantile <= slack * self.bound


def verify_low_rank_guarantee(
    a,
    b,
    rank: int,
    epsilon: float,
    theta: float,
    trials: int,
    seed: int,
    block_size: int = 4,
    spare: int = 0,
) -> QuantileReport:
    """Spectral-norm refinement: with the sketch dimension scaled by the
    rank of A, the (1-theta) quantile of the squared error obeys
    eps * ||A||_2^2 * ||B||_F^2 instead of the Frobenius-product bound."""
    av = as_matrix(a)
    bv = as_matrix(b)
    base = AccuracyParams(epsilon, theta)
    keep = rank * base.keep_count(block_size)
    spare_scaled = rank * spare
    _, children = _trial_seeds(seed, trials)
    sq_errors = np.empty(trials)
    exact = av @ bv
    for t, child in enumerate(children):
        sketch_seed, drop_seed = child.spawn(2)
        spec = OverSketch.random(av.shape[1], block_size, keep, spare_scaled, sketch_seed)
        approx = _sketched_product_with_drops(
            av, bv, spec, spare_scaled, np.random.default_rng(drop_seed)
        )
        sq_errors[t] = np.linalg.norm(exact - approx) ** 2
    spectral = float(np.linalg.norm(av, 2) ** 2)
    bound = epsilon * spectral * float(np.linalg.norm(bv) ** 2)
    return QuantileReport(
        trials=trials,
        level=1.0 - theta,
        quantile=float(np.quantile(sq_errors, 1.0 - theta)),
        bound=bound,
    )


def proportions_indistinguishable(
    k1: int, n1: int, k2: int, n2: int, z: float = 2.576
) -> bool:
    """Two-sided two-proportion z-test at the given critical value (99% for
    z = 2.576); True when the null of equal proportions is not rejected."""
    p1, p2 = k1 / n1, k2 / n2
    pooled = (k1 + k2) / (n1 + n2)
    se = sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    if se == 0.0:
        return p1 == p2
    return abs(p1 - p2) <= z * se


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str


def run_suites(seed: int = 0, trials_scale: float = 1.0) -> list[SuiteResult]:
    """The statistical acceptance suites behind the `verify` CLI command."""
    results: list[SuiteResult] = []
    n = 20

    t_moments = max(2, int(100_000 * trials_scale))
    for width in (2, 4, 8, 16):
        rep = verify_sketch_moments(n, width, t_moments, seed)
        results.append(
            SuiteResult(
                name=f"count-sketch moments (width {width})",
                passed=rep.mean_ok() and rep.variance_ok(),
                detail=(
                    f"mean offset {rep.mean_offset_sigmas:.2f} se (<=4), "
                    f"variance/bound {rep.variance_ratio:.3f} (<=1.05)"
                ),
            )
        )

    t_stack = max(2, int(30_000 * trials_scale))
    variances = {}
    for keep in (1, 2, 4, 8):
        rep = verify_stacked_moments(n, 4, keep, t_stack, seed)
        variances[keep] = rep.variance
        results.append(
            SuiteResult(
                name=f"stacked moments (keep {keep})",
                passed=rep.mean_ok() and rep.variance_ok(),
                detail=(
                    f"mean offset {rep.mean_offset_sigmas:.2f} se, "
                    f"variance/bound {rep.variance_ratio:.3f}"
                ),
            )
        )
    halving = all(
        abs(variances[2 * k] / variances[k] - 0.5) <= 0.075 for k in (1, 2, 4)
    )
    results.append(
        SuiteResult(
            name="stacked variance halves when keep doubles",
            passed=halving,
            detail=", ".join(
                f"{2*k}x/{k}x={variances[2*k]/variances[k]:.3f}" for k in (1, 2, 4)
            ),
        )
    )

    t_guar = max(2, int(2_000 * trials_scale))
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((8, n))
    b = rng.standard_normal((n, 6))
    base = None
    for spare in (0, 1, 2):
        rep = verify_product_guarantee(
            a, b, block_size=2, keep=4, spare=spare,
            epsilon=0.5, theta=0.5, trials=t_guar, seed=seed + spare,
        )
        if spare == 0:
            base = rep
        results.append(
            SuiteResult(
                name=f"(eps,theta) product guarantee (spare {spare})",
                passed=rep.fraction_ok() and rep.expectation_ok(),
                detail=(
                    f"failure fraction {rep.failure_fraction:.3f} "
                    f"(theta+3se={rep.theta + 3*rep.binomial_se:.3f}), "
                    f"E[err^2]/bound {rep.mean_sq_error/rep.expectation_bound:.3f}"
                ),
            )
        )
        if spare:
            same = proportions_indistinguishable(
                base.failures, base.trials, rep.failures, rep.trials
            )
            results.append(
                SuiteResult(
                    name=f"drop-invariance of failure rate (spare {spare})",
                    passed=same,
                    detail=(
                        f"{base.failure_fraction:.3f} vs {rep.failure_fraction:.3f} "
                        "(99% two-proportion test)"
                    ),
                )
            )

    t_rank = max(2, int(400 * trials_scale))
    for rank in (1, 2, 4):
        g1 = rng.standard_normal((12, rank))
        g2 = rng.standard_normal((rank, n))
        low_rank_a = g1 @ g2
        rep = verify_low_rank_guarantee(
            low_rank_a, rng.standard_normal((n, 10)), rank,
            epsilon=0.25, theta=0.25, trials=t_rank, seed=seed + rank,
        )
        results.append(
            SuiteResult(
                name=f"low-rank spectral bound (rank {rank})",
                passed=rep.ok(),
                detail=f"quantile/bound {rep.quantile/rep.bound:.3f} (<=1.1)",
            )
        )
    return results
