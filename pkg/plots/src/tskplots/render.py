"""Render figures from tskfuzz diagnostics CSVs.

The input contract is the tidy schema written by the training CLI and the
sweep drivers: one row per observation with columns
(variant, dim, rules, h, epoch, repeat, metric, value). Batch-level rows
reuse the epoch column as a running batch index. Extra columns are ignored;
missing ones are an error.
"""

import argparse
import csv
import sys
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

COLUMNS = ("variant", "dim", "rules", "h", "epoch", "repeat", "metric", "value")

KINDS = ("fired-rules", "firing-percentiles", "grad-norms", "landscape", "acc-vs-h")

PERCENTILE_METRICS = ("a_r_p5", "a_r_p25", "a_r_p50", "a_r_p75", "a_r_p95")


class RenderError(Exception):
    """Bad figure request or malformed input data."""


@dataclass
class FigureSpec:
    inputs: tuple[str, ...]
    kind: str
    output: str | None = None
    log_x: bool = False
    log_y: bool = False
    title: str | None = None

    def __post_init__(self):
        # Validated here so an unknown kind fails before any file is opened.
        if self.kind not in KINDS:
            raise RenderError(
                f"unknown figure kind {self.kind!r}; expected one of {', '.join(KINDS)}"
            )
        self.inputs = tuple(self.inputs)
        if not self.inputs:
            raise RenderError("at least one input CSV is required")


_FIELD_TYPES = {
    "variant": str,
    "dim": int,
    "rules": int,
    "h": float,
    "epoch": int,
    "repeat": int,
    "metric": str,
    "value": float,
}


def read_rows(path) -> list[dict]:
    """Read one tidy CSV; extra columns are dropped, missing ones raise."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise RenderError(
                f"{path}: missing columns {', '.join(missing)}; "
                f"expected schema: {', '.join(COLUMNS)}"
            )
        rows = []
        for i, raw in enumerate(reader, start=2):
            try:
                rows.append({c: _FIELD_TYPES[c](raw[c]) for c in COLUMNS})
            except (TypeError, ValueError) as exc:
                raise RenderError(f"{path} line {i}: {exc}") from exc
    return rows


def _series_key(row, fields):
    return tuple(row[f] for f in fields)


def _series_label(key, fields, varying):
    parts = []
    for f, v in zip(fields, key):
        if f not in varying:
            continue
        if f == "variant":
            parts.append(str(v))
        else:
            parts.append(f"{f}={v:g}" if isinstance(v, float) else f"{f}={v}")
    return ", ".join(parts) or "all"


def _varying(rows, fields):
    return {f for f in fields if len({r[f] for r in rows}) > 1}


def _group_series(rows, fields):
    """(key -> rows) in first-seen order, plus the set of fields that vary."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault(_series_key(row, fields), []).append(row)
    return groups, _varying(rows, fields)


def _mean_by(rows, x_field):
    """Sorted (x, mean value) pairs, averaging over repeats and duplicates."""
    acc: dict[float, list[float]] = {}
    for row in rows:
        acc.setdefault(row[x_field], []).append(row["value"])
    xs = sorted(acc)
    return np.array(xs), np.array([np.mean(acc[x]) for x in xs])


def _require_metric(rows, predicate, what):
    picked = [r for r in rows if predicate(r["metric"])]
    if not picked:
        raise RenderError(f"no rows with {what} metrics in the input")
    return picked


def _draw_fired_rules(ax, rows, spec):
    rows = _require_metric(rows, lambda m: m == "mean_fired_rules", "mean_fired_rules")
    fields = ("variant", "rules", "h", "epoch")
    groups, varying = _group_series(rows, fields)
    for key, grp in groups.items():
        xs, ys = _mean_by(grp, "dim")
        ax.plot(xs, ys, marker="o", label=_series_label(key, fields, varying))
    ax.set_xlabel("input dimension")
    ax.set_ylabel("mean fired rules")


def _draw_firing_percentiles(ax, rows, spec):
    rows = _require_metric(rows, lambda m: m in PERCENTILE_METRICS, "firing percentile")
    x_field = "dim" if len({r["dim"] for r in rows}) > 1 else "epoch"
    fields = ("variant", "rules", "h") + (("epoch",) if x_field == "dim" else ("dim",))
    groups, varying = _group_series(rows, fields)
    for key, grp in groups.items():
        by_metric = {
            m: dict(zip(*_mean_by([r for r in grp if r["metric"] == m], x_field)))
            for m in ("a_r_p5", "a_r_p50", "a_r_p95")
        }
        xs = sorted(set(by_metric["a_r_p50"]) & set(by_metric["a_r_p5"]) & set(by_metric["a_r_p95"]))
        if not xs:
            raise RenderError("percentile series needs a_r_p5, a_r_p50 and a_r_p95 at common points")
        xs = np.array(xs)
        label = _series_label(key, fields, varying)
        (line,) = ax.plot(xs, [by_metric["a_r_p50"][x] for x in xs], marker="o", label=label)
        ax.fill_between(
            xs,
            [by_metric["a_r_p5"][x] for x in xs],
            [by_metric["a_r_p95"][x] for x in xs],
            alpha=0.25,
            color=line.get_color(),
        )
    ax.set_xlabel("input dimension" if x_field == "dim" else "epoch")
    ax.set_ylabel("average firing level per rule")


def _draw_grad_norms(ax, rows, spec):
    rows = _require_metric(rows, lambda m: m.startswith("grad_l1_"), "grad_l1_*")
    fields = ("variant", "metric", "rules", "h", "dim")
    groups, varying = _group_series(rows, fields)
    varying.add("metric")  # always split the label by parameter group
    for key, grp in groups.items():
        xs, ys = _mean_by(grp, "epoch")
        label = _series_label(key, fields, varying | {"variant"})
        ax.plot(xs, ys, label=label.replace("metric=", "").replace("grad_l1_", ""))
    ax.set_xlabel("batch")
    ax.set_ylabel("gradient L1 norm")


def _draw_landscape(ax, rows, spec):
    rows = _require_metric(rows, lambda m: m.startswith("landscape_loss_s"), "landscape_loss_s*")
    fields = ("variant", "rules", "h", "dim")
    groups, varying = _group_series(rows, fields)
    for key, grp in groups.items():
        # Spread of the probed losses along the descent ray, per probe point.
        per_x: dict[float, list[float]] = {}
        for row in grp:
            per_x.setdefault(row["epoch"], []).append(row["value"])
        xs = sorted(per_x)
        ys = [float(np.std(per_x[x])) for x in xs]
        ax.plot(xs, ys, marker=".", label=_series_label(key, fields, varying | {"variant"}))
    ax.set_xlabel("batch")
    ax.set_ylabel("loss spread along descent ray")


def _draw_acc_vs_h(ax, rows, spec):
    rows = _require_metric(rows, lambda m: m == "test_accuracy", "test_accuracy")
    fields = ("variant", "rules", "dim", "epoch")
    groups, varying = _group_series(rows, fields)
    for key, grp in groups.items():
        xs, ys = _mean_by(grp, "h")
        ax.plot(xs, ys, marker="o", label=_series_label(key, fields, varying | {"variant"}))
    ax.set_xlabel("initial width location h")
    ax.set_ylabel("test accuracy")


_DRAWERS = {
    "fired-rules": _draw_fired_rules,
    "firing-percentiles": _draw_firing_percentiles,
    "grad-norms": _draw_grad_norms,
    "landscape": _draw_landscape,
    "acc-vs-h": _draw_acc_vs_h,
}


def render(spec: FigureSpec):
    """Draw the requested figure; saves to spec.output when set.

    Returns the matplotlib Figure so callers (and tests) can inspect the
    plotted data. Inputs are read-only.
    """
    rows = []
    for path in spec.inputs:
        rows.extend(read_rows(path))
    if not rows:
        raise RenderError("input CSVs contain no data rows")
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    try:
        _DRAWERS[spec.kind](ax, rows, spec)
        if spec.log_x:
            ax.set_xscale("log")
        if spec.log_y:
            ax.set_yscale("log")
        ax.set_title(spec.title or spec.kind)
        ax.legend(fontsize=8)
        fig.tight_layout()
        if spec.output:
            fig.savefig(spec.output, dpi=120)
    except Exception:
        plt.close(fig)
        raise
    return fig


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="tskplot", description=__doc__)
    ap.add_argument("--input", action="append", required=True,
                    help="tidy CSV path (repeatable)")
    ap.add_argument("--kind", required=True,
                    help=f"figure kind: one of {', '.join(KINDS)}")
    ap.add_argument("--output", required=True, help="image path to write")
    ap.add_argument("--log-x", action="store_true", dest="log_x")
    ap.add_argument("--log-y", action="store_true", dest="log_y")
    ap.add_argument("--title")
    args = ap.parse_args(argv)
    try:
        spec = FigureSpec(
            inputs=tuple(args.input),
            kind=args.kind,
            output=args.output,
            log_x=args.log_x,
            log_y=args.log_y,
            title=args.title,
        )
        fig = render(spec)
        plt.close(fig)
    except (RenderError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(args.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
