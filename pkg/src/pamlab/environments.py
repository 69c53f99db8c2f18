"""Dynamic random environments xi(x,t) as event-driven traces.

Each model is simulated with exact continuous-time clocks (Gillespie /
per-particle exponential clocks), so a realization is piecewise constant
in time and can be queried exactly, forward or time-reversed.

Built-in models
---------------
``constant``          xi(x,t) = c, no events.
``iid_markov``        independent two-state Markov chains per site,
                      stationary start.
``independent_walks`` Poisson(nu) particles per site, each performing a
                      rate-1 simple random walk; xi = occupation number.
``exclusion``         symmetric simple exclusion via rate-1 edge clocks,
                      product Bernoulli(rho) start.
``zero_range``        zero-range process with rate g(k) = k^beta; a site
                      with k particles ejects one at rate g(k) to a
                      uniform neighbor; product pi_rho start.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from pamlab.lattice import FieldSnapshot, LatticeTorus, neighbor_table
from pamlab.rng import stream

_SERIES_RTOL = 1e-16
_MODELS = ("constant", "iid_markov", "independent_walks", "exclusion", "zero_range")


@dataclass(frozen=True)
class EnvModelSpec:
    """Which environment to sample and with which parameters.

    Parameters are model-specific: ``value`` for constant, ``state_values``
    and ``flip_rates`` for the two-state chain, ``nu`` for independent
    walks, ``rho`` for exclusion (density in [0,1]) and zero-range
    (density parameter > 0), ``beta`` for the zero-range rate exponent.
    """

    model: str
    value: float = 0.0
    state_values: tuple = (-1.0, 1.0)
    flip_rates: tuple = (1.0, 1.0)
    nu: float = 1.0
    rho: float = 0.5
    beta: float = 1.0
    centering: str = "analytic"

    def validate(self):
        """Return a list of violation messages (empty when valid)."""
        out = []
        if self.model not in _MODELS:
            out.append(f"model: unknown model {self.model!r}")
            return out
        if self.centering not in ("analytic", "empirical", "none"):
            out.append(f"centering: unknown centering {self.centering!r}")
        if self.model == "iid_markov":
            if len(self.state_values) != 2 or len(self.flip_rates) != 2:
                out.append("state_values: iid_markov needs two state values and two flip rates")
            elif min(self.flip_rates) <= 0:
                out.append("flip_rates: flip rates must be positive")
        elif self.model == "independent_walks":
            if self.nu < 0:
                out.append(f"nu: intensity must be >= 0, got {self.nu}")
        elif self.model == "exclusion":
            if not 0.0 <= self.rho <= 1.0:
                out.append(f"rho: exclusion density must be in [0,1], got {self.rho}")
        elif self.model == "zero_range":
            if self.rho <= 0:
                out.append(f"rho: zero_range density must be > 0, got {self.rho}")
            if not 0.0 < self.beta <= 1.0:
                out.append(f"beta: zero_range exponent must be in (0,1], got {self.beta}")
        return out

    def require_valid(self):
        problems = self.validate()
        if problems:
            raise ValueError("; ".join(problems))


@dataclass(frozen=True)
class OccupationIntegral:
    """Record of int_{t_start}^{t_end} xi(site, s) ds."""

    site: int
    t_start: float
    t_end: float
    value: float


def zero_range_pmf(rho: float, beta: float):
    """Stationary single-site pmf: weights rho^k / (g(1)...g(k)), g(k)=k^beta.

    The series has super-geometric decay, so it is truncated once terms
    fall below 1e-16 of the partial sum.  Returns (probabilities, gamma).
    """
    if rho <= 0 or not 0.0 < beta <= 1.0:
        raise ValueError("need rho > 0 and beta in (0,1]")
    weights = [1.0]
    w = 1.0
    k = 0
    total = 1.0
    while True:
        k += 1
        w *= rho / k ** beta
        weights.append(w)
        total += w
        if w < _SERIES_RTOL * total and k > rho * 2 + 5:
            break
        if k > 10_000_000:
            raise OverflowError("zero-range series did not truncate")
    probs = np.array(weights) / total
    return probs, 1.0 / total


def stationary_mean(spec: EnvModelSpec) -> float:
    """Analytic mean of xi(0,0) under the stationary start of ``spec``."""
    spec.require_valid()
    if spec.model == "constant":
        return spec.value
    if spec.model == "iid_markov":
        v0, v1 = spec.state_values
        r01, r10 = spec.flip_rates
        pi0 = r10 / (r01 + r10)
        return pi0 * v0 + (1.0 - pi0) * v1
    if spec.model == "independent_walks":
        return spec.nu
    if spec.model == "exclusion":
        return spec.rho
    probs, _ = zero_range_pmf(spec.rho, spec.beta)
    return float(np.dot(np.arange(len(probs)), probs))


@dataclass
class EnvTrace:
    """One realization of xi over the torus up to ``horizon``.

    Right-continuous, piecewise constant in time.  ``event_times`` /
    ``event_sites`` / ``event_values`` form the time-ordered event log;
    each entry is "site takes new value at time t".
    """

    lattice: LatticeTorus
    horizon: float
    spec: EnvModelSpec
    seed: int
    initial: np.ndarray = field(repr=False)
    event_times: np.ndarray = field(repr=False)
    event_sites: np.ndarray = field(repr=False)
    event_values: np.ndarray = field(repr=False)
    centered_by: float = 0.0

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        self.event_times = np.asarray(self.event_times, dtype=float)
        self.event_sites = np.asarray(self.event_sites, dtype=np.int64)
        self.event_values = np.asarray(self.event_values, dtype=float)
        self._cache = {}

    @property
    def n_events(self) -> int:
        return len(self.event_times)

    # -- per-site breakpoint structure ------------------------------------

    def _site_tables(self):
        """Concatenated per-site (times, values, cumulative integral) arrays."""
        cached = self._cache.get("tables")
        if cached is not None:
            return cached
        n = self.lattice.n_sites
        order = np.argsort(self.event_sites, kind="stable")
        sites_sorted = self.event_sites[order]
        counts = np.bincount(sites_sorted, minlength=n)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts + 1, out=offsets[1:])
        total = int(offsets[-1])
        times = np.empty(total)
        values = np.empty(total)
        times[offsets[:-1]] = 0.0
        values[offsets[:-1]] = self.initial
        # events land after their site's t=0 slot, preserving time order
        run_starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        within = np.arange(len(order)) - np.repeat(run_starts, counts)
        slot = offsets[sites_sorted] + 1 + within
        times[slot] = self.event_times[order]
        values[slot] = self.event_values[order]
        # cumulative integral of the piecewise-constant path at each breakpoint
        cum = np.zeros(total)
        seg_end = np.empty(total)
        seg_end[:] = 0.0
        for s in range(n):
            a, b = offsets[s], offsets[s + 1]
            if b - a > 1:
                durations = np.diff(times[a:b])
                cum[a + 1:b] = np.cumsum(values[a:b - 1] * durations)
        # sort key embedding the site so one searchsorted serves all sites
        span = self.horizon + 1.0
        keys = np.repeat(np.arange(n, dtype=float), np.diff(offsets)) * span + times
        tables = (offsets, times, values, cum, keys, span)
        self._cache["tables"] = tables
        return tables

    def _locate(self, sites, ts):
        offsets, times, values, cum, keys, span = self._site_tables()
        q = np.asarray(sites, dtype=float) * span + np.asarray(ts, dtype=float)
        idx = np.searchsorted(keys, q, side="right") - 1
        return idx, times, values, cum

    # -- queries ----------------------------------------------------------

    def query(self, x, t: float) -> float:
        """xi(x, t) for a site given by coordinates or flat index."""
        if not 0.0 <= t <= self.horizon:
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        s = x if np.isscalar(x) else self.lattice.site_index(x)
        idx, _, values, _ = self._locate([s], [t])
        return float(values[idx[0]])

    def query_reversed(self, x, s: float, t_anchor: float) -> float:
        """xi(x, t_anchor - s): the time-reversed query of the FK integrand."""
        if not 0.0 <= s <= t_anchor <= self.horizon:
            raise ValueError(f"need 0 <= s <= t_anchor <= horizon, got s={s}, t_anchor={t_anchor}")
        return self.query(x, t_anchor - s)

    def cumulative(self, sites, ts) -> np.ndarray:
        """Vectorized F(x, t) = int_0^t xi(x, s) ds over flat site indices."""
        idx, times, values, cum = self._locate(sites, ts)
        return cum[idx] + values[idx] * (np.asarray(ts, dtype=float) - times[idx])

    def occupation_integral(self, x, t0: float, t1: float) -> float:
        """Exact int_{t0}^{t1} xi(x, s) ds via constancy intervals."""
        if not 0.0 <= t0 <= t1 <= self.horizon:
            raise ValueError(f"need 0 <= t0 <= t1 <= horizon, got [{t0}, {t1}]")
        s = x if np.isscalar(x) else self.lattice.site_index(x)
        out = self.cumulative([s, s], [t1, t0])
        return float(out[0] - out[1])

    def snapshot(self, t: float) -> FieldSnapshot:
        """Full field at time t."""
        if not 0.0 <= t <= self.horizon:
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        n = self.lattice.n_sites
        idx, _, values, _ = self._locate(np.arange(n), np.full(n, t))
        return FieldSnapshot(self.lattice, values[idx])

    def sup_field(self, T: float) -> FieldSnapshot:
        """Per-site sup of xi over [0, T], exact for piecewise-constant paths."""
        if not 0.0 < T <= self.horizon:
            raise ValueError(f"T={T} outside (0, {self.horizon}]")
        out = self.initial.copy()
        mask = self.event_times <= T
        np.maximum.at(out, self.event_sites[mask], self.event_values[mask])
        return FieldSnapshot(self.lattice, out)

    def max_abs(self) -> float:
        """max |xi| over the whole trace (all breakpoint values)."""
        m = float(np.max(np.abs(self.initial)))
        if self.n_events:
            m = max(m, float(np.max(np.abs(self.event_values))))
        return m

    def breakpoints(self) -> np.ndarray:
        """Distinct event times, sorted."""
        return np.unique(self.event_times)

    def total_particles(self) -> float:
        return float(self.initial.sum())

    def center_field(self) -> "EnvTrace":
        """Shifted copy with mean zero (analytic or empirical per the spec)."""
        mode = self.spec.centering
        if mode == "none":
            return self
        if mode == "analytic":
            # shift by the residual so the call is idempotent
            m = stationary_mean(self.spec) - self.centered_by
        else:
            n = self.lattice.n_sites
            total = float(
                np.sum(self.cumulative(np.arange(n), np.full(n, self.horizon)))
            )
            m = total / (n * self.horizon)
        return replace(
            self,
            initial=self.initial - m,
            event_values=self.event_values - m,
            centered_by=self.centered_by + m,
        )


# -- samplers -------------------------------------------------------------

_CHUNK = 1 << 15


def _merge_site_events(per_site):
    """Merge (time, site, value) triples from per-site lists, time-ordered."""
    if not per_site:
        return np.empty(0), np.empty(0, dtype=np.int64), np.empty(0)
    times = np.concatenate([t for t, _, _ in per_site])
    sites = np.concatenate([s for _, s, _ in per_site])
    values = np.concatenate([v for _, _, v in per_site])
    order = np.argsort(times, kind="stable")
    return times[order], sites[order], values[order]


def _sample_iid_markov(lattice, spec, horizon, rng):
    n = lattice.n_sites
    v = np.array(spec.state_values, dtype=float)
    rates = np.array(spec.flip_rates, dtype=float)
    pi0 = rates[1] / (rates[0] + rates[1])
    states0 = (rng.random(n) >= pi0).astype(np.int64)
    initial = v[states0]
    per_site = []
    for i in range(n):
        state = states0[i]
        t = 0.0
        ts, vs = [], []
        while True:
            t += rng.exponential(1.0 / rates[state])
            if t > horizon:
                break
            state = 1 - state
            ts.append(t)
            vs.append(v[state])
        if ts:
            per_site.append(
                (np.array(ts), np.full(len(ts), i, dtype=np.int64), np.array(vs))
            )
    return initial, _merge_site_events(per_site)


def _sample_particle_system(lattice, spec, horizon, rng):
    """Shared Gillespie loop for independent_walks and zero_range."""
    n = lattice.n_sites
    table = neighbor_table(lattice)
    deg = 2 * lattice.d
    if spec.model == "independent_walks":
        counts = rng.poisson(spec.nu, n).astype(np.int64)
    else:
        probs, _ = zero_range_pmf(spec.rho, spec.beta)
        cdf = np.cumsum(probs)
        counts = np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64)
    total = int(counts.sum())
    initial = counts.astype(float)
    if total == 0:
        return initial, (np.empty(0), np.empty(0, dtype=np.int64), np.empty(0))
    if total > 1 << 31:
        raise OverflowError(f"particle count {total} too large")
    particle_sites = np.repeat(np.arange(n, dtype=np.int64), counts)
    occ = counts.copy()
    beta = spec.beta
    zero_range = spec.model == "zero_range"
    times, sites, values = [], [], []
    t = 0.0
    done = False
    while not done:
        gaps = rng.exponential(1.0 / total, _CHUNK)
        picks = rng.integers(0, total, _CHUNK)
        dirs = rng.integers(0, deg, _CHUNK)
        accept = rng.random(_CHUNK) if zero_range else None
        for j in range(_CHUNK):
            t += gaps[j]
            if t > horizon:
                done = True
                break
            p = picks[j]
            s = particle_sites[p]
            if zero_range:
                k = occ[s]
                # particle clock rings; jump happens with probability g(k)/k
                if accept[j] >= float(k) ** (beta - 1.0):
                    continue
            dest = table[s, dirs[j]]
            occ[s] -= 1
            occ[dest] += 1
            particle_sites[p] = dest
            times.append(t)
            sites.append(s)
            values.append(float(occ[s]))
            times.append(t)
            sites.append(dest)
            values.append(float(occ[dest]))
    return initial, (
        np.array(times),
        np.array(sites, dtype=np.int64),
        np.array(values),
    )


def _sample_exclusion(lattice, spec, horizon, rng):
    n = lattice.n_sites
    d = lattice.d
    table = neighbor_table(lattice)
    occ = (rng.random(n) < spec.rho).astype(np.int64)
    initial = occ.astype(float)
    n_edges = d * n
    times, sites, values = [], [], []
    t = 0.0
    done = False
    while not done:
        gaps = rng.exponential(1.0 / n_edges, _CHUNK)
        edges = rng.integers(0, n_edges, _CHUNK)
        for j in range(_CHUNK):
            t += gaps[j]
            if t > horizon:
                done = True
                break
            e = edges[j]
            s = e // d
            dest = table[s, 2 * (e % d)]  # +1 direction along the edge axis
            if occ[s] == occ[dest]:
                continue
            occ[s], occ[dest] = occ[dest], occ[s]
            times.append(t)
            sites.append(s)
            values.append(float(occ[s]))
            times.append(t)
            sites.append(dest)
            values.append(float(occ[dest]))
    return initial, (
        np.array(times),
        np.array(sites, dtype=np.int64),
        np.array(values),
    )


def sample_env(spec: EnvModelSpec, lattice: LatticeTorus, horizon: float, seed: int) -> EnvTrace:
    """Draw one stationary-start realization of the environment.

    Deterministic: identical (spec, lattice, horizon, seed) give a
    bit-identical event log.
    """
    spec.require_valid()
    if horizon <= 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    rng = stream(seed, f"env:{spec.model}")
    if spec.model == "constant":
        initial = np.full(lattice.n_sites, spec.value)
        events = (np.empty(0), np.empty(0, dtype=np.int64), np.empty(0))
    elif spec.model == "iid_markov":
        initial, events = _sample_iid_markov(lattice, spec, horizon, rng)
    elif spec.model == "exclusion":
        initial, events = _sample_exclusion(lattice, spec, horizon, rng)
    else:
        initial, events = _sample_particle_system(lattice, spec, horizon, rng)
    return EnvTrace(
        lattice=lattice,
        horizon=horizon,
        spec=spec,
        seed=seed,
        initial=initial,
        event_times=events[0],
        event_sites=events[1],
        event_values=events[2],
    )


# -- module-level operation aliases (functional surface) ------------------

def query(trace: EnvTrace, x, t: float) -> float:
    return trace.query(x, t)


def query_reversed(trace: EnvTrace, x, s: float, t_anchor: float) -> float:
    return trace.query_reversed(x, s, t_anchor)


def occupation_integral(trace: EnvTrace, x, t0: float, t1: float) -> float:
    return trace.occupation_integral(x, t0, t1)


def center_field(trace: EnvTrace) -> EnvTrace:
    return trace.center_field()


def sup_field(trace: EnvTrace, T: float) -> FieldSnapshot:
    return trace.sup_field(T)
