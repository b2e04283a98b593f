"""Monte-Carlo and analytic oracles for the direction-statistics lemmas and
the convergence-rate claims.

Every check is seed-deterministic, reports (estimate, target, tolerance,
pass/fail), and reduces its Monte-Carlo shards in fixed index order. The
robustness constant of the high-probability bound is deliberately not
computed (its sub-exponential parameter is not measurable); its qualitative
consequence is covered by the aggregation containment properties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .federation import ExperimentConfig, run_experiment
from .seedstream import RngStream

_SHARD = 1 << 15


@dataclass(frozen=True)
class TheoryParams:
    """Step-size bookkeeping for the convergence checks."""

    lam: float
    l_smooth: float
    d: int
    k: int
    mu_zero: bool

    @property
    def tau(self) -> float:
        if self.mu_zero:
            return (self.d + self.k - 1) / self.k
        return (2 * self.d + (self.k - 1) * (1.0 + math.sqrt(self.d))) / self.k

    @property
    def eta(self) -> float:
        if self.mu_zero:
            return 1.0 / (self.tau * self.l_smooth)
        return 1.0 / (2.0 * self.tau * self.l_smooth)

    @property
    def rate_bound(self) -> float:
        denom = self.tau * (self.l_smooth + self.lam)
        if self.mu_zero:
            return 1.0 - self.lam / denom
        return 1.0 - self.lam / (2.0 * denom)


@dataclass
class CheckResult:
    name: str
    estimate: float
    target: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return (
            f"{status}  {self.name}: estimate={self.estimate:.6g} "
            f"target={self.target:.6g} tolerance={self.tolerance:.3g}{extra}"
        )


def _sphere_rows(stream: RngStream, n: int, d: int) -> np.ndarray:
    g = stream.gaussians(n * d).reshape(n, d)
    norms = np.sqrt(np.einsum("nd,nd->n", g, g))
    # a zero row has probability zero; redrawing keeps the check total
    while np.any(norms == 0.0):
        idx = np.flatnonzero(norms == 0.0)
        g[idx] = stream.gaussians(len(idx) * d).reshape(len(idx), d)
        norms[idx] = np.sqrt(np.einsum("nd,nd->n", g[idx], g[idx]))
    g /= norms[:, None]
    return g


def mc_isotropy(d: int, n_samples: int, seed: int) -> float:
    """Max absolute entrywise deviation of the empirical E[z z^T] from I/d."""
    stream = RngStream(seed)
    acc = np.zeros((d, d))
    done = 0
    while done < n_samples:
        take = min(_SHARD, n_samples - done)
        z = _sphere_rows(stream, take, d)
        acc += z.T @ z
        done += take
    acc /= n_samples
    acc -= np.eye(d) / d
    return float(np.max(np.abs(acc)))


def isotropy_diag_mean(d: int, n_samples: int, seed: int) -> float:
    stream = RngStream(seed)
    total = 0.0
    done = 0
    while done < n_samples:
        take = min(_SHARD, n_samples - done)
        z = _sphere_rows(stream, take, d)
        total += float(np.einsum("nd,nd->", z, z) / d)
        done += take
    return total / n_samples


def mc_norm_factor(d: int, k: int, n_samples: int, x: np.ndarray, seed: int) -> float:
    """Empirical E||(1/k) sum_r d <x, z_r> z_r||^2 / ||x||^2.

    ``n_samples`` counts direction draws; they group into n_samples // k
    independent k-tuples (one estimator realization each). The ratio tends
    to (d + k - 1) / k.
    """
    x = np.asarray(x, dtype=np.float64)
    experiments = max(n_samples // k, 1)
    stream = RngStream(seed)
    xsq = float(np.dot(x, x))
    total = 0.0
    done = 0
    shard = max(_SHARD // max(k * d, 1), 1)
    while done < experiments:
        take = min(shard, experiments - done)
        z = _sphere_rows(stream, take * k, d).reshape(take, k, d)
        c = z @ x  # (take, k)
        est = np.einsum("ek,ekd->ed", c, z)
        est *= d / k
        total += float(np.einsum("ed,ed->", est, est))
        done += take
    return total / experiments / xsq


def norm_factor_target(d: int, k: int) -> float:
    return (d + k - 1) / k


def mc_cross_abs_bound(d: int, n_pairs: int, x: np.ndarray, seed: int) -> float:
    """Empirical E[|z1^T z2| (x^T z1)^2] over independent sphere pairs."""
    x = np.asarray(x, dtype=np.float64)
    stream = RngStream(seed)
    total = 0.0
    done = 0
    while done < n_pairs:
        take = min(_SHARD, n_pairs - done)
        z1 = _sphere_rows(stream, take, d)
        z2 = _sphere_rows(stream, take, d)
        inner = np.abs(np.einsum("nd,nd->n", z1, z2))
        proj = z1 @ x
        total += float(np.dot(inner, proj * proj))
        done += take
    return total / n_pairs


def cross_bound_value(d: int, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.dot(x, x)) / math.sqrt(d**3)


def smoothed_gap_quadratic(lam: float, mu: float, d: int, n_samples: int, seed: int,
                           dist: float = 0.5) -> float:
    """|MC estimate of F_mu(w) - F(w) minus the analytic lam mu^2 / 2|.

    On the quadratic, F(w + mu z) - F(w) = lam mu <w - w*, z> + lam mu^2 / 2
    for unit z, so the sphere average must land on lam mu^2 / 2.
    """
    if mu == 0.0:
        return 0.0
    stream = RngStream(seed)
    w = dist * _sphere_rows(stream, 1, d)[0]  # w* = 0
    base = 0.5 * lam * float(np.dot(w, w))
    total = 0.0
    done = 0
    while done < n_samples:
        take = min(_SHARD, n_samples - done)
        z = _sphere_rows(stream, take, d)
        pts = w[None, :] + mu * z
        total += float(np.sum(0.5 * lam * np.einsum("nd,nd->n", pts, pts) - base))
        done += take
    gap = total / n_samples
    return abs(gap - 0.5 * lam * mu * mu)


def _theory_config(params: TheoryParams, mu: float, steps: int, seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        model="quadratic",
        quad_lambda=params.lam,
        quad_dim=params.d,
        clients=4,
        alpha=0.0,
        beta=0.0,
        mu=mu,
        mu_zero=params.mu_zero,
        k=params.k,
        eta=params.eta,
        steps=steps,
        direction_mode="sphere",
        attack="none",
        root_seed=seed,
        eval_every=1,
        init="sphere",
        init_radius=1.0,
    )


def _distance_trace(config: ExperimentConfig, n_seeds: int) -> np.ndarray:
    """Mean ||w^t - w*|| across seeded runs, recovered from the logged loss."""
    lam = config.quad_lambda
    traces = []
    for j in range(n_seeds):
        result = run_experiment(replace(config, root_seed=config.root_seed + j))
        losses = np.array([log.train_loss for log in result.logs])
        traces.append(np.sqrt(2.0 * losses / lam))
    return np.mean(np.stack(traces), axis=0)


def contraction_rate(config: ExperimentConfig, n_seeds: int, fit_steps: int) -> float:
    """Fitted per-step geometric contraction of the mean distance."""
    mean_dist = _distance_trace(config, n_seeds)
    window = mean_dist[: fit_steps + 1]
    return float((window[-1] / window[0]) ** (1.0 / fit_steps))


def error_floor(config: ExperimentConfig, n_seeds: int, tail_frac: float = 0.1) -> float:
    """Mean distance over the trailing steps (the convergence plateau)."""
    mean_dist = _distance_trace(config, n_seeds)
    tail = max(int(len(mean_dist) * tail_frac), 1)
    return float(np.mean(mean_dist[-tail:]))


# The default parameters below are the acceptance settings.

def check_isotropy(d: int = 10, n: int = 1_000_000, seed: int = 2024) -> CheckResult:
    est = mc_isotropy(d, n, seed)
    diag = isotropy_diag_mean(d, n, seed)
    return CheckResult(
        name=f"isotropy d={d} N={n}",
        estimate=est,
        target=0.0,
        tolerance=0.002,
        passed=est < 0.002,
        detail=f"diag mean {diag:.6f} vs 1/d={1 / d:.6f}",
    )


def check_norm_factor(d: int = 8, k: int = 1, n: int = 200_000, rel_tol: float = 0.03,
                      seed: int = 7) -> CheckResult:
    x = RngStream(seed ^ 0xABCD).gaussians(d)
    est = mc_norm_factor(d, k, n, x, seed)
    target = norm_factor_target(d, k)
    return CheckResult(
        name=f"norm-factor d={d} k={k}",
        estimate=est,
        target=target,
        tolerance=rel_tol,
        passed=abs(est - target) <= rel_tol * target,
    )


def check_cross_bound(d: int = 16, n: int = 1_000_000, seed: int = 11,
                      margin: float = 0.10) -> CheckResult:
    x = RngStream(seed ^ 0xBEEF).gaussians(d)
    est = mc_cross_abs_bound(d, n, x, seed)
    bound = cross_bound_value(d, x)
    return CheckResult(
        name=f"cross-bound d={d}",
        estimate=est,
        target=bound,
        tolerance=margin,
        passed=est <= bound * (1.0 - margin),
        detail=f"margin {(1 - est / bound) * 100:.1f}%",
    )


def check_smoothed_gap(lam: float = 1.0, mu: float = 0.1, d: int = 16,
                       n: int = 100_000, seed: int = 13) -> CheckResult:
    dev = smoothed_gap_quadratic(lam, mu, d, n, seed)
    target = 0.5 * lam * mu * mu
    return CheckResult(
        name=f"smoothed-gap lam={lam} mu={mu}",
        estimate=dev,
        target=target,
        tolerance=0.05,
        passed=dev <= 0.05 * target,
        detail="absolute deviation from lam*mu^2/2",
    )


def check_rate_mu0(d: int = 16, k: int = 16, n_seeds: int = 20, fit_steps: int = 40,
                   seed: int = 5000) -> CheckResult:
    params = TheoryParams(lam=1.0, l_smooth=1.0, d=d, k=k, mu_zero=True)
    config = _theory_config(params, mu=0.0, steps=fit_steps + 5, seed=seed)
    rate = contraction_rate(config, n_seeds, fit_steps)
    bound = params.rate_bound
    return CheckResult(
        name=f"contraction mu=0 d={d} k={k}",
        estimate=rate,
        target=bound,
        tolerance=0.02,
        passed=rate <= bound + 0.02,
        detail=f"tau={params.tau:.4f} eta={params.eta:.4f}",
    )


def check_floor_mu_positive(d: int = 16, k: int = 16, n_seeds: int = 20,
                            steps: int = 1200, seed: int = 6000) -> CheckResult:
    params = TheoryParams(lam=1.0, l_smooth=1.0, d=d, k=k, mu_zero=False)
    floors = {}
    for mu in (1e-3, 1e-4):
        config = _theory_config(params, mu=mu, steps=steps, seed=seed)
        floors[mu] = error_floor(config, n_seeds)
    ratio = floors[1e-3] / floors[1e-4] if floors[1e-4] > 0 else float("inf")
    return CheckResult(
        name=f"floor shrink mu 1e-3 -> 1e-4, d={d} k={k}",
        estimate=ratio,
        target=5.0,
        tolerance=0.0,
        passed=ratio >= 5.0,
        detail=f"floors {floors[1e-3]:.3e} / {floors[1e-4]:.3e}",
    )


def lemma_suite() -> list[CheckResult]:
    return [
        check_isotropy(),
        check_norm_factor(d=8, k=1, n=200_000, rel_tol=0.03),
        check_norm_factor(d=8, k=512, n=200_000, rel_tol=0.02),
        check_cross_bound(),
        check_smoothed_gap(),
    ]


def theorem_suite() -> list[CheckResult]:
    return [
        check_rate_mu0(),
        check_floor_mu_positive(),
    ]


SUITES = {
    "lemmas": lemma_suite,
    "theorems": theorem_suite,
    "all": lambda: lemma_suite() + theorem_suite(),
}
