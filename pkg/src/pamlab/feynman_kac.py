"""Monte Carlo evaluation of the Feynman-Kac representation.

u(x,t) = E_x[ exp{ int_0^t xi(X(s), t-s) ds } u0(X(t)) ] with X a
rate-2*d*kappa simple random walk.  Both the time-reversed integrand
(the solution representation) and the forward-time variant are provided.
Weight averaging is done with a max-shifted log-sum-exp, since weights
span hundreds of e-folds at large t.
"""

import math
from dataclasses import dataclass

import numpy as np

from pamlab.environments import EnvTrace
from pamlab.lattice import LatticeTorus, neighbor_table
from pamlab.rng import stream


class DegenerateEstimateError(RuntimeError):
    """No path satisfied the terminal condition; increase n_samples or use the solver."""


@dataclass(frozen=True)
class WalkPath:
    """One realization of the rate-2*d*kappa walk up to time t.

    ``sites`` holds flat site indices, one more entry than ``jump_times``;
    consecutive sites are at torus l1 distance 1.
    """

    lattice: LatticeTorus
    start: tuple
    jump_times: np.ndarray
    sites: np.ndarray
    t: float

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def site_at(self, s: float) -> int:
        """Flat index of X(s) (right-continuous)."""
        return int(self.sites[np.searchsorted(self.jump_times, s, side="right")])


@dataclass(frozen=True)
class MCEstimate:
    """log-domain Monte Carlo estimate with delta-method standard error."""

    mean: float
    std_error: float
    n_samples: int
    log_domain: bool = True
    n_effective: int = 0
    degenerate: bool = False


def sample_walk(lattice: LatticeTorus, kappa: float, x0, t: float, seed_or_rng) -> WalkPath:
    """Poisson(2*d*kappa*t) jumps, uniform order-statistic times, uniform directions."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else stream(seed_or_rng, "walk")
    x0 = lattice.wrap(x0)
    n_jumps = int(rng.poisson(2 * lattice.d * kappa * t))
    jump_times = np.sort(rng.random(n_jumps) * t)
    table = neighbor_table(lattice)
    sites = np.empty(n_jumps + 1, dtype=np.int64)
    sites[0] = lattice.site_index(x0)
    dirs = rng.integers(0, 2 * lattice.d, n_jumps)
    for j in range(n_jumps):
        sites[j + 1] = table[sites[j], dirs[j]]
    return WalkPath(lattice=lattice, start=x0, jump_times=jump_times, sites=sites, t=t)


def path_functional(trace: EnvTrace, path: WalkPath, a: float, b: float, anchor: float,
                    reversed_time: bool = True) -> float:
    """Exact int_a^b xi(X(s), anchor -/+ s) ds over the common refinement
    of path-jump and environment-event breakpoints."""
    if not 0.0 <= a <= b:
        raise ValueError("need 0 <= a <= b")
    if reversed_time:
        if anchor - b < 0 or anchor > trace.horizon:
            raise ValueError("reversed orientation needs 0 <= anchor-b and anchor <= horizon")
    else:
        if anchor < 0 or anchor + b > trace.horizon:
            raise ValueError("forward orientation needs anchor >= 0 and anchor+b <= horizon")
    # path constancy segments clipped to [a, b]
    seg_edges = np.concatenate(([a], path.jump_times[(path.jump_times > a) & (path.jump_times < b)], [b]))
    seg_sites = path.sites[np.searchsorted(path.jump_times, seg_edges[:-1], side="right")]
    lo, hi = seg_edges[:-1], seg_edges[1:]
    if reversed_time:
        upper = trace.cumulative(seg_sites, anchor - lo)
        lower = trace.cumulative(seg_sites, anchor - hi)
    else:
        upper = trace.cumulative(seg_sites, anchor + hi)
        lower = trace.cumulative(seg_sites, anchor + lo)
    return float(np.sum(upper - lower))


def _ensemble_integrals(trace: EnvTrace, kappa: float, x, t: float, n: int,
                        rng: np.random.Generator, forward: bool,
                        anchor: float | None = None, return_counts: bool = False):
    """Vectorized walk ensemble: returns (integrals, end_sites[, counts]).

    Walks start at x; the integrand is xi(X(s), anchor-s) (reversed,
    default anchor t) or xi(X(s), anchor+s) (forward, default anchor 0),
    integrated exactly.
    """
    lattice = trace.lattice
    d = lattice.d
    table = neighbor_table(lattice)
    if anchor is None:
        anchor = 0.0 if forward else t
    lam = 2 * d * kappa * t
    counts = rng.poisson(lam, n)
    max_n = int(counts.max()) if n else 0
    start = lattice.site_index(lattice.wrap(x)) if not np.isscalar(x) else int(x)

    if max_n == 0:
        # no jumps at all: both orientations reduce to the occupation integral
        sites0 = np.full(n, start, dtype=np.int64)
        if forward:
            vals = (trace.cumulative(sites0, np.full(n, anchor + t))
                    - trace.cumulative(sites0, np.full(n, anchor)))
        else:
            vals = (trace.cumulative(sites0, np.full(n, anchor))
                    - trace.cumulative(sites0, np.full(n, anchor - t)))
        return (vals, sites0, counts) if return_counts else (vals, sites0)

    raw = rng.random((n, max_n)) * t
    mask = np.arange(max_n)[None, :] < counts[:, None]
    raw[~mask] = t  # pad collapses zero-length tail segments
    jump_times = np.sort(raw, axis=1)
    dirs = rng.integers(0, 2 * d, (n, max_n))

    sites = np.empty((n, max_n + 1), dtype=np.int64)
    sites[:, 0] = start
    for j in range(max_n):
        step = table[sites[:, j], dirs[:, j]]
        sites[:, j + 1] = np.where(mask[:, j], step, sites[:, j])

    # segment j spans [edges[:, j], edges[:, j+1]] at sites[:, j]
    edges = np.concatenate((np.zeros((n, 1)), jump_times, np.full((n, 1), t)), axis=1)
    lo = edges[:, :-1].ravel()
    hi = edges[:, 1:].ravel()
    seg_sites = sites.ravel()
    if forward:
        contrib = trace.cumulative(seg_sites, anchor + hi) - trace.cumulative(seg_sites, anchor + lo)
    else:
        contrib = trace.cumulative(seg_sites, anchor - lo) - trace.cumulative(seg_sites, anchor - hi)
    integrals = contrib.reshape(n, max_n + 1).sum(axis=1)
    end_sites = sites[np.arange(n), counts]
    return (integrals, end_sites, counts) if return_counts else (integrals, end_sites)


def _estimate(trace, kappa, u0, x, t, n_samples, seed, forward):
    if not 0.0 <= t <= trace.horizon:
        raise ValueError(f"t={t} outside [0, {trace.horizon}]")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    lattice = trace.lattice
    start = lattice.site_index(lattice.wrap(x)) if not np.isscalar(x) else int(x)
    # both orientations share the walk stream, so weights match pathwise
    # on static environments with the same seed
    rng = stream(seed, "fk-walks")
    integrals, end_sites = _ensemble_integrals(trace, kappa, start, t, n_samples, rng, forward)

    if u0 == "ones":
        keep = np.ones(n_samples, dtype=bool)
    elif u0 == "delta_0":
        keep = end_sites == start
    else:
        raise ValueError(f"unknown initial condition {u0!r}")
    n_eff = int(keep.sum())
    if n_eff == 0:
        raise DegenerateEstimateError(
            f"no path satisfied the terminal condition (n={n_samples}); "
            "increase n_samples or use the direct solver"
        )
    degenerate = u0 == "delta_0" and n_eff < 100

    # log of the sample mean of w_i = exp(integral_i) * u0(X_i(t)),
    # with zero-weight paths kept in the denominator
    lw = integrals[keep]
    m = float(lw.max())
    a = np.exp(lw - m)
    mean_a = float(a.sum()) / n_samples
    log_mean = m + math.log(mean_a)
    # delta method: Var(log W_bar) ~ Var(w)/ (n * mean^2), in shifted units
    shifted = np.zeros(n_samples)
    shifted[keep] = a
    var_a = float(np.var(shifted, ddof=1)) if n_samples > 1 else 0.0
    se = math.sqrt(var_a / n_samples) / mean_a if mean_a > 0 else math.inf
    return MCEstimate(
        mean=log_mean,
        std_error=se,
        n_samples=n_samples,
        log_domain=True,
        n_effective=n_eff,
        degenerate=degenerate,
    )


def fk_estimate(trace: EnvTrace, kappa: float, u0, x, t: float, n_samples: int, seed: int) -> MCEstimate:
    """Estimate log u(x,t) via the time-reversed Feynman-Kac formula."""
    return _estimate(trace, kappa, u0, x, t, n_samples, seed, forward=False)


def fk_forward_estimate(trace: EnvTrace, kappa: float, u0, x, t: float, n_samples: int, seed: int) -> MCEstimate:
    """Forward-time variant: integrand xi(X(s), s), defining the lambda-bar exponent."""
    return _estimate(trace, kappa, u0, x, t, n_samples, seed, forward=True)
