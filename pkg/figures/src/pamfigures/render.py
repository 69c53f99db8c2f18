"""Batch figure rendering for the laboratory's CSV outputs.

Every renderer writes the image plus a *sidecar* CSV next to it holding
exactly the plotted series (the consumed input columns, in input row
order, byte for byte), so tests and downstream checks can assert on the
data instead of diffing pixels.  Rendering never mutates its inputs and
embeds no timestamps, so identical inputs give identical output bytes.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "pamfigures"  # deterministic SVG ids

import matplotlib.pyplot as plt  # noqa: E402


class FigureError(ValueError):
    """Bad request or malformed input data."""


@dataclass(frozen=True)
class FigureRequest:
    """One figure to produce from one or two input CSV files."""

    kind: str
    inputs: tuple
    out: str
    title: str | None = None


@dataclass(frozen=True)
class RenderResult:
    image: Path
    sidecar: Path
    n_points: int


# per kind: required input columns (the plotted series for echo kinds)
SCHEMAS = {
    "lyapunov-curve": ("kappa", "p", "estimate", "ci_half_width"),
    "gap-curve": ("kappa", "p", "estimate", "ci_half_width"),
    "mixing-frequency": ("R", "frequency", "ci_low", "ci_high", "reference_bound"),
    "percolation-profile": ("alpha", "largest_fraction", "spanning"),
    "volatility": ("t", "statistic", "ci_half_width"),
}


def read_rows(path, required):
    """List of string-valued row dicts; errors name missing columns."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise FigureError(f"{path}: missing column(s): {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise FigureError(f"{path}: no data rows")
    return rows


def _write_sidecar(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _series(rows, x_col, key_col=None):
    """Rows grouped by key_col (input order keys), each sorted by x."""
    keys = []
    groups = {}
    for row in rows:
        key = row[key_col] if key_col else ""
        if key not in groups:
            keys.append(key)
            groups[key] = []
        groups[key].append(row)
    for key in keys:
        groups[key].sort(key=lambda r: float(r[x_col]))
    return [(key, groups[key]) for key in keys]


def _p_label(p):
    return "quenched" if int(p) == 0 else f"annealed p={p}"


def _draw_lyapunov(ax, inputs_rows, labels):
    n_points = 0
    for rows, label in zip(inputs_rows, labels):
        for p, group in _series(rows, "kappa", "p"):
            x = [float(r["kappa"]) for r in group]
            y = [float(r["estimate"]) for r in group]
            hw = [float(r["ci_half_width"]) for r in group]
            name = _p_label(p) if len(inputs_rows) == 1 else f"{label} {_p_label(p)}"
            ax.plot(x, y, marker="o", label=name)
            ax.fill_between(x, [a - b for a, b in zip(y, hw)],
                            [a + b for a, b in zip(y, hw)], alpha=0.2)
            n_points += len(group)
    ax.axhline(0.0, color="0.4", linewidth=0.8, linestyle="--")
    ax.set_xlabel("kappa")
    ax.set_ylabel("Lyapunov exponent estimate")
    header = SCHEMAS["lyapunov-curve"]
    side = [tuple(r[c] for c in header) for rows in inputs_rows for r in rows]
    return n_points, header, side


def _draw_gap(ax, rows):
    quenched = {}
    for row in rows:
        if int(row["p"]) == 0:
            quenched[row["kappa"]] = float(row["estimate"])
    gap_rows = []
    for row in rows:
        if int(row["p"]) >= 1 and row["kappa"] in quenched:
            gap = float(row["estimate"]) - quenched[row["kappa"]]
            gap_rows.append({"kappa": row["kappa"], "p": row["p"], "gap": repr(gap)})
    if not gap_rows:
        raise FigureError("gap-curve needs quenched (p=0) and annealed rows "
                          "at matching kappa values")
    n_points = 0
    for p, group in _series(gap_rows, "kappa", "p"):
        x = [float(r["kappa"]) for r in group]
        y = [float(r["gap"]) for r in group]
        ax.plot(x, y, marker="o", label=f"p={p}")
        n_points += len(group)
    ax.axhline(0.0, color="0.4", linewidth=0.8, linestyle="--")
    ax.set_xlabel("kappa")
    ax.set_ylabel("annealed - quenched gap")
    header = ("kappa", "p", "gap")
    return n_points, header, [tuple(r[c] for c in header) for r in gap_rows]


def _draw_mixing(ax, rows):
    x = [int(r["R"]) for r in rows]
    y = [float(r["frequency"]) for r in rows]
    lo = [f - float(r["ci_low"]) for f, r in zip(y, rows)]
    hi = [float(r["ci_high"]) - f for f, r in zip(y, rows)]
    ax.errorbar(x, y, yerr=[lo, hi], fmt="o", capsize=3, label="observed frequency")
    ax.plot(x, [float(r["reference_bound"]) for r in rows],
            linestyle="--", marker="s", label="reference bound")
    ax.set_xlabel("R")
    ax.set_ylabel("bad-in-good block frequency")
    header = SCHEMAS["mixing-frequency"]
    return len(rows), header, [tuple(r[c] for c in header) for r in rows]


def _draw_percolation(ax, rows):
    ordered = sorted(rows, key=lambda r: float(r["alpha"]))
    x = [float(r["alpha"]) for r in ordered]
    y = [float(r["largest_fraction"]) for r in ordered]
    ax.plot(x, y, marker="o", label="largest component fraction")
    span = [(a, b) for a, b, r in zip(x, y, ordered) if r["spanning"] == "true"]
    if span:
        ax.scatter([a for a, _ in span], [b for _, b in span],
                   marker="s", zorder=3, label="spanning")
    ax.set_xlabel("alpha")
    ax.set_ylabel("largest component fraction")
    header = SCHEMAS["percolation-profile"]
    return len(rows), header, [tuple(r[c] for c in header) for r in rows]


def _draw_volatility(ax, rows):
    ordered = sorted(rows, key=lambda r: float(r["t"]))
    x = [float(r["t"]) for r in ordered]
    y = [float(r["statistic"]) for r in ordered]
    hw = [float(r["ci_half_width"]) for r in ordered]
    ax.plot(x, y, marker="o", label="volatility statistic")
    ax.fill_between(x, [a - b for a, b in zip(y, hw)],
                    [a + b for a, b in zip(y, hw)], alpha=0.2)
    ax.set_xlabel("t")
    ax.set_ylabel("E|occupation difference| / log t")
    header = SCHEMAS["volatility"]
    return len(rows), header, [tuple(r[c] for c in header) for r in rows]


def render(request: FigureRequest) -> RenderResult:
    """Write the figure and its data sidecar; returns their paths."""
    if request.kind not in SCHEMAS:
        raise FigureError(f"unknown figure kind {request.kind!r}")
    max_inputs = 2 if request.kind == "lyapunov-curve" else 1
    if not 1 <= len(request.inputs) <= max_inputs:
        raise FigureError(
            f"{request.kind} takes 1"
            + (" or 2" if max_inputs == 2 else "")
            + f" input file(s), got {len(request.inputs)}"
        )
    required = SCHEMAS[request.kind]
    inputs_rows = [read_rows(p, required) for p in request.inputs]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    try:
        if request.kind == "lyapunov-curve":
            labels = [Path(p).stem for p in request.inputs]
            n_points, header, side = _draw_lyapunov(ax, inputs_rows, labels)
        elif request.kind == "gap-curve":
            n_points, header, side = _draw_gap(ax, inputs_rows[0])
        elif request.kind == "mixing-frequency":
            n_points, header, side = _draw_mixing(ax, inputs_rows[0])
        elif request.kind == "percolation-profile":
            n_points, header, side = _draw_percolation(ax, inputs_rows[0])
        else:
            n_points, header, side = _draw_volatility(ax, inputs_rows[0])
        ax.set_title(request.title or request.kind)
        ax.legend(loc="best", fontsize="small")
        fig.tight_layout()
        out = Path(request.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        metadata = {"Date": None} if out.suffix == ".svg" else None
        fig.savefig(out, dpi=150, metadata=metadata)
    finally:
        plt.close(fig)

    sidecar = out.with_suffix(".csv")
    _write_sidecar(sidecar, header, side)
    return RenderResult(image=out, sidecar=sidecar, n_points=n_points)
