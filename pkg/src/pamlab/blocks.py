"""Space-time block machinery as measurable diagnostics.

A block B_R(x,k) has spatial box prod_j [(x_j-1)*w*A^R, (x_j+1)*w*A^R)
and time window [k*A^R, (k+1)*A^R); the extended block widens by b in
space and c backwards in time.  A block is (C,b,c)-good when every
A^R-cube slice inside the extended block has total field <= C*A^{Rd}.

The "for all s" quantifier is resolved exactly on constancy intervals of
the trace, so verdicts carry no grid-discretization error.  Blocks are
anchored at nonnegative times only (no two-sided extension), and a path
"crosses" a block when its space-time graph intersects it, each block
counted at most once.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from pamlab.environments import EnvModelSpec, EnvTrace, sample_env
from pamlab.feynman_kac import DegenerateEstimateError, _ensemble_integrals
from pamlab.lattice import LatticeTorus
from pamlab.lyapunov import replica_seed
from pamlab.rng import stream

ENUMERATION_BOUND = 1_000_000


@dataclass(frozen=True)
class BlockSpec:
    """Block-grid parameters: scale base A, level R, threshold constant C,
    spatial slack b, temporal slack c, width multiplier w (1 for the
    mixing blocks, 4M for the sufficiency blocks)."""

    A: float
    R: int
    C: float
    b: int = 0
    c: int = 0
    width_multiplier: float = 1.0

    def __post_init__(self):
        if self.A <= 1:
            raise ValueError("A must be > 1")
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if self.C < 0:
            raise ValueError("C must be >= 0")
        if self.b < 0 or self.c < 0:
            raise ValueError("b and c must be >= 0")
        if self.width_multiplier <= 0:
            raise ValueError("width multiplier must be > 0")

    def scale(self, level: int | None = None) -> float:
        return self.A ** (self.R if level is None else level)

    def at_level(self, level: int) -> "BlockSpec":
        return BlockSpec(self.A, level, self.C, self.b, self.c, self.width_multiplier)


@dataclass(frozen=True)
class BlockId:
    """Block coordinate: spatial anchor x (integer vector) and time index k."""

    x: tuple
    k: int


@dataclass(frozen=True)
class JumpPathFamily:
    """Paths with exactly j jumps on [0, t], confined to the box
    [-c1*t*log t, c1*t*log t]^d."""

    j: int
    t: float
    c1: float = 1.0


@dataclass(frozen=True)
class RegularityFamily:
    """Paths on [0, n*t] frozen on each [(j-1)t+1, jt), with jump count and
    frozen-site norm both capped at n*t / log(1/kappa)^b_exponent."""

    n: int
    t: float
    kappa: float
    b_exponent: float = 0.5

    def cap(self) -> int:
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("regularity family needs kappa in (0,1)")
        return int(math.floor(self.n * self.t / math.log(1.0 / self.kappa) ** self.b_exponent))


def _window_sums(arr: np.ndarray, m: int) -> np.ndarray:
    """Sums over all m^d sub-cubes of arr (every axis must have size >= m)."""
    out = arr
    for axis in range(arr.ndim):
        c = np.cumsum(out, axis=axis)
        zero_shape = list(c.shape)
        zero_shape[axis] = 1
        c = np.concatenate([np.zeros(zero_shape), c], axis=axis)
        lead = [slice(None)] * arr.ndim
        lag = [slice(None)] * arr.ndim
        lead[axis] = slice(m, None)
        lag[axis] = slice(None, -m)
        out = c[tuple(lead)] - c[tuple(lag)]
    return out


def _int_scale(value: float) -> int:
    rounded = round(value)
    if abs(value - rounded) > 1e-9 or rounded < 1:
        raise ValueError(f"block grid needs an integer scale, got {value}")
    return int(rounded)


class BlockClassifier:
    """Good/bad verdicts over one trace with caching per (level, x, k)."""

    def __init__(self, trace: EnvTrace, spec: BlockSpec):
        self.trace = trace
        self.spec = spec
        self.lattice = trace.lattice
        self._verdicts = {}

    # -- geometry ---------------------------------------------------------

    def time_window(self, k: int, level: int, extended: bool):
        s = self.spec.scale(level)
        t0 = (k - (self.spec.c if extended else 0)) * s
        return t0, (k + 1) * s

    def valid(self, k: int, level: int) -> bool:
        t0, t1 = self.time_window(k, level, extended=True)
        return t0 >= 0 and t1 <= self.trace.horizon + 1e-9

    def n_block_coords(self, level: int) -> int:
        """Distinct wrapped spatial block coordinates per axis."""
        stride = _int_scale(self.spec.width_multiplier * self.spec.scale(level))
        if self.lattice.L % stride != 0:
            raise ValueError(
                f"block stride {stride} does not divide L={self.lattice.L}"
            )
        return self.lattice.L // stride

    def time_indices(self, level: int):
        """All k whose extended window fits in [0, horizon]."""
        s = self.spec.scale(level)
        k_max = int(math.floor(self.trace.horizon / s + 1e-9)) - 1
        return range(self.spec.c, k_max + 1)

    def _box_values(self, snapshot_values: np.ndarray, lows, width: int) -> np.ndarray:
        lattice = self.lattice
        grids = [np.arange(lo, lo + width) % lattice.L for lo in lows]
        flat = np.zeros([width] * lattice.d, dtype=np.int64)
        for axis, g in enumerate(grids):
            shape = [1] * lattice.d
            shape[axis] = width
            flat = flat * lattice.L + g.reshape(shape)
        return snapshot_values[flat]

    # -- classification ---------------------------------------------------

    def verdict(self, block: BlockId, level: int | None = None) -> str:
        level = self.spec.R if level is None else level
        key = (level, block.x, block.k)
        cached = self._verdicts.get(key)
        if cached is None:
            cached = self._classify(block, level)
            self._verdicts[key] = cached
        return cached

    def _classify(self, block: BlockId, level: int) -> str:
        spec = self.spec
        lattice = self.lattice
        s = spec.scale(level)
        ws = spec.width_multiplier * s
        t0, t1 = self.time_window(block.k, level, extended=True)
        if t0 < 0 or t1 > self.trace.horizon + 1e-9:
            raise ValueError(
                f"extended block window [{t0}, {t1}) outside simulated [0, {self.trace.horizon}]"
            )
        lows = [math.ceil((block.x[j] - 1 - spec.b) * ws) for j in range(lattice.d)]
        highs = [math.ceil((block.x[j] + 1 + spec.b) * ws) for j in range(lattice.d)]
        width = highs[0] - lows[0]
        if width > lattice.L:
            raise ValueError(f"extended block width {width} exceeds torus side {lattice.L}")
        m = math.ceil(s)  # Q-box side
        if m > width:
            return "good"  # no Q-box fits: vacuous quantifier
        threshold = spec.C * s ** lattice.d

        # breakpoints of the trace restricted to the block's sites/window
        times = self.trace.event_times
        mask = (times > t0) & (times < t1)
        if mask.any():
            box_sites = np.unique(
                self._box_values(np.arange(lattice.n_sites), lows, width)
            )
            mask &= np.isin(self.trace.event_sites, box_sites)
        breaks = np.concatenate(([t0], np.unique(times[mask])))
        for t in breaks:
            snap = self.trace.snapshot(float(t)).values
            arr = self._box_values(snap, lows, width)
            if float(_window_sums(arr, m).max()) > threshold:
                return "bad"
        return "good"

    def contains_bad(self, parent: BlockId, level: int | None = None) -> bool:
        """Whether any valid inner (level-1)-block contained in the inner
        block of ``parent`` is bad."""
        level = self.spec.R + 1 if level is None else level
        a = _int_scale(self.spec.A)
        nb = self.n_block_coords(level - 1)
        axis_ranges = [
            range((parent.x[j] - 1) * a + 1, (parent.x[j] + 1) * a)
            for j in range(self.lattice.d)
        ]
        k_range = range(parent.k * a, (parent.k + 1) * a)
        for k in k_range:
            if not self.valid(k, level - 1):
                continue
            for x in itertools.product(*axis_ranges):
                wrapped = tuple(c % nb for c in x)
                if self.verdict(BlockId(wrapped, k), level - 1) == "bad":
                    return True
        return False


def classify_block(trace: EnvTrace, spec: BlockSpec, block: BlockId) -> str:
    """Exact good/bad verdict for one block (see module docstring)."""
    return BlockClassifier(trace, spec).verdict(block)


def count_bad_blocks(trace: EnvTrace, spec: BlockSpec, window=None) -> int:
    """Number of bad R-blocks whose inner time window intersects ``window``
    (default: the whole simulated horizon)."""
    cls = BlockClassifier(trace, spec)
    level = spec.R
    s = spec.scale(level)
    nb = cls.n_block_coords(level)
    t_lo, t_hi = (0.0, trace.horizon) if window is None else window
    count = 0
    for k in cls.time_indices(level):
        if k * s >= t_hi or (k + 1) * s <= t_lo:
            continue
        for x in itertools.product(range(nb), repeat=trace.lattice.d):
            if cls.verdict(BlockId(x, k), level) == "bad":
                count += 1
    return count


# -- path crossing --------------------------------------------------------

def _path_segments(path):
    """(site_coords, s0, s1, closed) per constancy segment; only the last
    segment is closed at its right endpoint (the path's end time)."""
    lattice = path.lattice
    edges = np.concatenate(([0.0], path.jump_times, [path.t]))
    out = []
    for j in range(len(path.sites)):
        s0, s1 = edges[j], edges[j + 1]
        closed = j == len(path.sites) - 1
        if s1 > s0 or closed:
            out.append((lattice.site_coords(int(path.sites[j])), s0, s1, closed))
    return out


def _candidate_coords(z: int, scale: int, nb: int):
    base = z // scale
    return (base % nb, (base + 1) % nb)


def _blocks_crossed(cls: BlockClassifier, segments, level: int):
    """Distinct valid level-blocks whose space-time box the path graph meets."""
    spec = cls.spec
    s = _int_scale(spec.width_multiplier * spec.scale(level))
    nb = cls.n_block_coords(level)
    d = cls.lattice.d
    crossed = set()
    for coords, s0, s1, closed in segments:
        k_first = int(math.floor(s0 / spec.scale(level)))
        k_last = int(math.floor(min(s1, cls.trace.horizon) / spec.scale(level)))
        for k in range(k_first, k_last + 1):
            w0, w1 = k * spec.scale(level), (k + 1) * spec.scale(level)
            # segments are half-open except the final one, which includes
            # its right endpoint (the path is defined on closed [0, t])
            if not (s0 < w1 and (s1 > w0 or (closed and s1 >= w0))):
                continue
            if not cls.valid(k, level):
                continue
            axis_candidates = [_candidate_coords(coords[j], s, nb) for j in range(d)]
            for x in itertools.product(*axis_candidates):
                crossed.add(BlockId(tuple(x), k))
    return crossed


def xi_psi_for_path(trace: EnvTrace, spec: BlockSpec, path):
    """(Xi, Psi): bad R-blocks crossed, and good (R+1)-blocks crossed that
    contain a bad R-block."""
    cls = BlockClassifier(trace, spec)
    segments = _path_segments(path)
    xi = sum(
        1 for blk in _blocks_crossed(cls, segments, spec.R)
        if cls.verdict(blk, spec.R) == "bad"
    )
    psi = 0
    for blk in _blocks_crossed(cls, segments, spec.R + 1):
        if cls.verdict(blk, spec.R + 1) == "good" and cls.contains_bad(blk):
            psi += 1
    return xi, psi


# -- suprema over path families -------------------------------------------

def _family_box_bound(family: JumpPathFamily) -> int:
    if family.t <= 1.0:
        return max(1, int(math.floor(family.c1 * family.t)))
    return int(math.floor(family.c1 * family.t * math.log(family.t)))


def _abstract_path_count(n_starts: int, deg: int, j: int, k_cells: int) -> int:
    return n_starts * deg ** j * math.comb(j + k_cells - 1, j)


def _abstract_paths(lattice: LatticeTorus, family: JumpPathFamily, scale: float):
    """Yield (positions, cell_runs): unwrapped positions p_0..p_j and, per
    time cell, the inclusive index range of positions visited in it.

    Only the assignment of jumps to cells matters for block crossing, so
    the continuum of jump times collapses to compositions of j over the
    cells, with the supremum attained at interior placements.
    """
    bound = _family_box_bound(family)
    k_cells = max(1, math.ceil(family.t / scale - 1e-9))
    offsets = range(-bound, bound + 1)
    steps = []
    for axis in range(lattice.d):
        e = [0] * lattice.d
        e[axis] = 1
        steps.append(tuple(e))
        steps.append(tuple(-v for v in e))
    for start in itertools.product(offsets, repeat=lattice.d):
        for dirs in itertools.product(range(2 * lattice.d), repeat=family.j):
            positions = [start]
            ok = True
            for dcol in dirs:
                nxt = tuple(p + s for p, s in zip(positions[-1], steps[dcol]))
                if any(abs(c) > bound for c in nxt):
                    ok = False
                    break
                positions.append(nxt)
            if not ok:
                continue
            for assign in itertools.combinations_with_replacement(range(k_cells), family.j):
                runs = []
                first = 0
                for cell in range(k_cells):
                    jumps_here = sum(1 for a in assign if a == cell)
                    runs.append((first, first + jumps_here))
                    first += jumps_here
                yield positions, runs


def _crossed_from_abstract(cls: BlockClassifier, positions, runs, level: int, t_end: float):
    spec = cls.spec
    stride = _int_scale(spec.width_multiplier * spec.scale(level))
    nb = cls.n_block_coords(level)
    a = _int_scale(spec.A)
    ratio = a ** (level - spec.R)
    d = cls.lattice.d

    def add(crossed, p, k):
        axis_candidates = [_candidate_coords(p[j], stride, nb) for j in range(d)]
        for x in itertools.product(*axis_candidates):
            crossed.add(BlockId(tuple(x), k))

    crossed = set()
    for cell, (lo, hi) in enumerate(runs):
        k = cell // ratio
        if not cls.valid(k, level):
            continue
        for p in positions[lo:hi + 1]:
            add(crossed, p, k)
    # the path is closed at t_end: when t_end sits exactly on a window
    # boundary, the endpoint also touches the next window
    scale = spec.scale(level)
    boundary = t_end / scale
    k_end = round(boundary)
    if abs(boundary - k_end) < 1e-9 and cls.valid(k_end, level):
        add(crossed, positions[-1], k_end)
    return crossed


def _xi_psi_abstract(cls: BlockClassifier, positions, runs, t_end: float):
    spec = cls.spec
    xi = sum(
        1 for blk in _crossed_from_abstract(cls, positions, runs, spec.R, t_end)
        if cls.verdict(blk, spec.R) == "bad"
    )
    psi = sum(
        1 for blk in _crossed_from_abstract(cls, positions, runs, spec.R + 1, t_end)
        if cls.verdict(blk, spec.R + 1) == "good" and cls.contains_bad(blk)
    )
    return xi, psi


def sup_xi_psi(trace: EnvTrace, spec: BlockSpec, family: JumpPathFamily,
               mode: str = "exhaustive", n_sampled: int = 1000, seed: int = 0):
    """(sup Xi, sup Psi, exact) over the j-jump path family.

    Exhaustive mode enumerates every abstract path (exact supremum) and
    refuses families larger than the enumeration bound; sampled mode
    returns a lower bound flagged exact=False.
    """
    cls = BlockClassifier(trace, spec)
    scale = spec.scale(spec.R)
    if mode == "exhaustive":
        bound = _family_box_bound(family)
        k_cells = max(1, math.ceil(family.t / scale - 1e-9))
        n_paths = _abstract_path_count(
            (2 * bound + 1) ** trace.lattice.d, 2 * trace.lattice.d, family.j, k_cells
        )
        if n_paths > ENUMERATION_BOUND:
            raise ValueError(
                f"exhaustive enumeration of {n_paths} paths exceeds bound {ENUMERATION_BOUND}"
            )
        best = (0, 0)
        for positions, runs in _abstract_paths(trace.lattice, family, scale):
            xi, psi = _xi_psi_abstract(cls, positions, runs, family.t)
            best = (max(best[0], xi), max(best[1], psi))
        return best[0], best[1], True
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    rng = stream(seed, "sup-xi-psi")
    bound = _family_box_bound(family)
    k_cells = max(1, math.ceil(family.t / scale - 1e-9))
    best = (0, 0)
    for _ in range(n_sampled):
        start = tuple(int(v) for v in rng.integers(-bound, bound + 1, trace.lattice.d))
        positions = [start]
        for _ in range(family.j):
            axis = int(rng.integers(0, trace.lattice.d))
            delta = 1 if rng.random() < 0.5 else -1
            nxt = list(positions[-1])
            nxt[axis] += delta
            if abs(nxt[axis]) > bound:
                nxt[axis] -= 2 * delta
            positions.append(tuple(nxt))
        assign = tuple(sorted(int(v) for v in rng.integers(0, k_cells, family.j)))
        runs = []
        first = 0
        for cell in range(k_cells):
            jumps_here = sum(1 for a in assign if a == cell)
            runs.append((first, first + jumps_here))
            first += jumps_here
        xi, psi = _xi_psi_abstract(cls, positions, runs, family.t)
        best = (max(best[0], xi), max(best[1], psi))
    return best[0], best[1], False


# -- mixing frequency and tail condition ----------------------------------

@dataclass(frozen=True)
class MixingFrequencyRow:
    A: float
    R: int
    C: float
    b: int
    c: int
    n_env: int
    frequency: float
    ci_low: float
    ci_high: float
    reference_bound: float


def mixing_event_frequency(spec: BlockSpec, env_spec: EnvModelSpec, lattice: LatticeTorus,
                           horizon: float, n_env: int, blocks_per_env: int,
                           seed: int) -> MixingFrequencyRow:
    """Empirical frequency of {B_{R+1} good but containing a bad R-block}
    over independent environments, with a binomial CI and the type-I
    mixing reference bound (n=1, K=1) for comparison only."""
    if n_env < 1:
        raise ValueError("n_env must be >= 1")
    hits = 0
    total = 0
    rng = stream(seed, "mixing-block-choice")
    for i in range(n_env):
        trace = sample_env(env_spec, lattice, horizon, replica_seed(seed, i))
        cls = BlockClassifier(trace, spec)
        level = spec.R + 1
        nb = cls.n_block_coords(level)
        ids = [
            BlockId(x, k)
            for k in cls.time_indices(level)
            for x in itertools.product(range(nb), repeat=lattice.d)
        ]
        if not ids:
            raise ValueError("no valid (R+1)-blocks fit the horizon")
        if len(ids) > blocks_per_env:
            picks = rng.choice(len(ids), size=blocks_per_env, replace=False)
            ids = [ids[int(p)] for p in picks]
        for blk in ids:
            total += 1
            if cls.verdict(blk, level) == "good" and cls.contains_bad(blk):
                hits += 1
    freq = hits / total
    half = 1.96 * math.sqrt(max(freq * (1 - freq), 1e-12) / total)
    d = lattice.d
    bound = (spec.A ** (1 + 2 * d)) ** (-spec.R * (1 + d))
    return MixingFrequencyRow(
        A=spec.A, R=spec.R, C=spec.C, b=spec.b, c=spec.c, n_env=n_env,
        frequency=freq, ci_low=max(0.0, freq - half), ci_high=min(1.0, freq + half),
        reference_bound=bound,
    )


def tail_condition_check(env_spec: EnvModelSpec, lattice: LatticeTorus, R_list, C_list,
                         alpha: float, n_samples: int, seed: int):
    """Empirical P(sup_{s in [0,1]} |B_R|^-1 sum_{B_R} xi(y,s) >= C) vs the
    reference bound |B_R|^-alpha, for B_R = [-R,R]^d.  Report-only."""
    rows = []
    sups = {}
    for i in range(n_samples):
        trace = sample_env(env_spec, lattice, 1.0, replica_seed(seed, i))
        for R in R_list:
            if 2 * R + 1 > lattice.L:
                raise ValueError(f"B_{R} does not fit in the torus (L={lattice.L})")
            sites = [
                lattice.site_index(coords)
                for coords in itertools.product(range(-R, R + 1), repeat=lattice.d)
            ]
            n_box = len(sites)
            # exact sup over [0,1] via constancy intervals of the box sites
            mask = np.isin(trace.event_sites, sites)
            breaks = np.concatenate(([0.0], np.unique(trace.event_times[mask])))
            best = -math.inf
            for t in breaks[breaks <= 1.0]:
                snap = trace.snapshot(float(t)).values
                best = max(best, float(snap[sites].sum()) / n_box)
            sups.setdefault(R, []).append(best)
    for R in R_list:
        n_box = (2 * R + 1) ** lattice.d
        for C in C_list:
            emp = float(np.mean([s >= C for s in sups[R]]))
            rows.append((R, C, emp, n_box ** (-alpha)))
    return rows


# -- N-sufficiency --------------------------------------------------------

def _clamped(trace: EnvTrace, N: float) -> EnvTrace:
    from dataclasses import replace
    return replace(
        trace,
        initial=np.clip(trace.initial, -N, N),
        event_values=np.clip(trace.event_values, -N, N),
    )


def classify_sufficient(trace: EnvTrace, spec: BlockSpec, block: BlockId, N: float,
                        lambda_ref: float, eps: float, M: float, kappa: float,
                        n_samples: int, seed: int) -> str:
    """'sufficient' when the truncated, jump-capped FK expectation started
    at every subpedestal site stays below exp((lambda_ref+eps)*A^R), using
    the MC upper 95% bound; otherwise 'insufficient'."""
    lattice = trace.lattice
    s = spec.scale(spec.R)
    width_half = 4.0 * M * s  # pedestal block half-width per the 4M convention
    lows = [math.ceil((block.x[j] - 1) * width_half) for j in range(lattice.d)]
    highs = [math.ceil((block.x[j] + 1) * width_half) for j in range(lattice.d)]
    margin = 2.0 * M * s
    t_start = block.k * s
    if t_start < 0 or t_start + s > trace.horizon + 1e-9:
        raise ValueError("sufficiency window outside simulated horizon")
    sub_ranges = [
        range(math.ceil(lows[j] + margin), highs[j] - math.ceil(margin))
        for j in range(lattice.d)
    ]
    if any(len(r) == 0 for r in sub_ranges):
        raise ValueError("empty subpedestal: block too small for margin 2*M*A^R")
    clamped = _clamped(trace, N)
    jump_cap = M * s
    threshold_log = (lambda_ref + eps) * s
    rng = stream(seed, "sufficiency")
    for coords in itertools.product(*sub_ranges):
        site = lattice.site_index(lattice.wrap(coords))
        integrals, _, counts = _ensemble_integrals(
            clamped, kappa, site, s, n_samples, rng, forward=True,
            anchor=t_start, return_counts=True,
        )
        keep = counts <= jump_cap
        if not keep.any():
            raise DegenerateEstimateError("all sampled paths exceed the jump cap")
        lw = integrals[keep]
        m = float(lw.max())
        a = np.exp(lw - m)
        mean_a = float(a.sum()) / n_samples
        padded = np.zeros(n_samples)
        padded[keep] = a
        se_log = float(np.std(padded, ddof=1)) / (mean_a * math.sqrt(n_samples))
        upper = m + math.log(mean_a) + 1.96 * se_log
        if upper > threshold_log:
            return "insufficient"
    return "sufficient"


# -- regularity statistic --------------------------------------------------

def regularity_statistic(trace: EnvTrace, family: RegularityFamily,
                         mode: str = "exhaustive", n_sampled: int = 1000, seed: int = 0):
    """sup over the frozen-window path family of
    (1/nt) * sum_j int_{(j-1)t+1}^{jt} xi(x_j, s) ds, and an exactness flag.

    The statistic only depends on the frozen sites x_1..x_n, so the
    supremum is a shortest-path style dynamic program over (site, jumps
    used); sampled mode draws random admissible sequences instead.
    """
    lattice = trace.lattice
    n, t = family.n, family.t
    if t <= 1.0:
        raise ValueError("window length t must exceed 1")
    if n * t > trace.horizon + 1e-9:
        raise ValueError("family horizon n*t exceeds the trace horizon")
    cap = family.cap()
    origin = (0,) * lattice.d
    sites = [
        coords for coords in itertools.product(range(lattice.L), repeat=lattice.d)
        if lattice.torus_distance(coords, origin) <= cap
    ]
    flat = [lattice.site_index(c) for c in sites]
    # per window integral of xi at each admissible site
    window_vals = np.empty((n, len(sites)))
    for j in range(1, n + 1):
        lo, hi = (j - 1) * t + 1.0, j * t
        for i, f in enumerate(flat):
            window_vals[j - 1, i] = trace.occupation_integral(f, lo, hi)

    if mode == "exhaustive":
        n_sites = len(sites)
        # DP over (site, jumps used); moving between consecutive frozen
        # sites costs their torus l1 distance in jumps
        dist = np.array(
            [[lattice.torus_distance(a, b) for b in sites] for a in sites]
        )
        neg_inf = -math.inf
        value = np.full((n_sites, cap + 1), neg_inf)
        for i in range(n_sites):
            value[i, 0] = window_vals[0, i]
        for j in range(1, n):
            nxt = np.full((n_sites, cap + 1), neg_inf)
            for i_prev in range(n_sites):
                for used in range(cap + 1):
                    v = value[i_prev, used]
                    if v == neg_inf:
                        continue
                    for i_new in range(n_sites):
                        used_new = used + int(dist[i_prev, i_new])
                        if used_new > cap:
                            continue
                        cand = v + window_vals[j, i_new]
                        if cand > nxt[i_new, used_new]:
                            nxt[i_new, used_new] = cand
            value = nxt
        best = float(value.max())
        if best == neg_inf:
            raise ValueError("no admissible path in the family")
        return best / (n * t), True

    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    rng = stream(seed, "regularity")
    best = -math.inf
    for _ in range(n_sampled):
        used = 0
        i = int(rng.integers(0, len(sites)))
        total = window_vals[0, i]
        feasible = True
        for j in range(1, n):
            options = [
                i_new for i_new in range(len(sites))
                if used + lattice.torus_distance(sites[i], sites[i_new]) <= cap
            ]
            if not options:
                feasible = False
                break
            i_new = options[int(rng.integers(0, len(options)))]
            used += lattice.torus_distance(sites[i], sites[i_new])
            i = i_new
            total += window_vals[j, i]
        if feasible:
            best = max(best, total)
    return best / (n * t), False
