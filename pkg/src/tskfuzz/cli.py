"""Command line entry points.

Subcommands: synth, train, eval, sweep, hsweep, gradcheck. Settings resolve
in three layers: built-in defaults, then an INI config file (sections match
the setting groups below), then command line flags. Every run writes the
fully resolved configuration next to its outputs.

Exit codes: 0 success, 1 user/config error, 2 numeric or internal error.
"""

from __future__ import annotations

import argparse
import configparser
import datetime
import json
import os
import sys
import time

import numpy as np

from .data import (
    Dataset,
    NormStats,
    SplitSpec,
    load_dense,
    load_sparse_index_value,
    save_dense,
    split,
    synth_gaussian,
    zscore_fit_transform,
)
from .diagnostics import (
    DiagnosticsCollector,
    SweepSpec,
    make_row,
    saturation_sweep,
    write_rows_csv,
    write_summary_json,
)
from .errors import ConfigError, NumericError, TskError
from .gradients import Loss, finite_diff_grad, loss_and_grad, relative_error
from .initializers import InitSpec, init_model
from .model import Defuzz, TskModel
from .seeding import rng as substream_rng
from .seeding import substream_seed
from .trainer import TrainConfig, effective_batch_size, evaluate, train

# l1/l2 defuzzification stays library-only; it is exploratory and its firing
# levels are not convex weights, so the CLI exposes the supported three.
VARIANT_CHOICES = ("vanilla", "htsk", "logtsk")

DEFAULTS: dict[str, dict] = {
    "run": {"variant": "htsk", "seed": 0},
    "data": {"path": "", "format": "csv", "label_column": ""},
    "split": {"train_fraction": 0.7, "val_fraction": 0.1},
    "init": {"rules": 10, "h": 1.0, "sigma_spread": 0.2, "kmeans_iters": 100,
             "kmeans_restarts": 10},
    "train": {"learning_rate": 0.01, "batch_size": 512, "max_epochs": 200, "patience": 20},
    "diag": {"landscape": False, "landscape_every": 1, "landscape_eta": 0.01},
    "sweep": {"dims": "5,10,20,50,100,200", "rule_counts": "10", "h_values": "1.0",
              "epochs_at": "0,30", "repeats": 10, "n_samples": 500, "num_classes": 2,
              "kmeans_iters": 25, "kmeans_restarts": 1, "jobs": 1},
    "hsweep": {"h_values": "0.1,0.25,0.5,1.0,2.0,5.0"},
    "synth": {"n": 1000, "d": 10, "c": 2, "labeling": "cluster-separable", "mu": 3.0},
    "gradcheck": {"checks": 20, "step": 1e-5, "tol": 1e-4, "dims": "1,5,50",
                  "rules": "1,3,10", "classes": "2,5"},
}


class _Parser(argparse.ArgumentParser):
    # argparse would exit(2) on bad flags; route through the error taxonomy
    def error(self, message):
        raise ConfigError(message)


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in str(text).split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in str(text).split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _read_config_file(path: str | None) -> dict[str, dict[str, str]]:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    out: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"{path}: unknown config section [{section}]")
        out[section] = {}
        for key, value in parser.items(section):
            if key not in DEFAULTS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            out[section][key] = value
    return out


def _coerce(value, template):
    if isinstance(template, bool):
        if isinstance(value, bool):
            return value
        if str(value).strip().lower() in ("1", "true", "yes", "on"):
            return True
        if str(value).strip().lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(template, int):
        try:
            return int(str(value))
        except ValueError:
            raise ConfigError(f"expected an integer, got {value!r}") from None
    if isinstance(template, float):
        try:
            return float(str(value))
        except ValueError:
            raise ConfigError(f"expected a number, got {value!r}") from None
    return str(value)


class Settings:
    """Layered settings: defaults, then config file, then flags."""

    def __init__(self, args: argparse.Namespace):
        self.file_cfg = _read_config_file(getattr(args, "config", None))
        self.args = args
        self.resolved: dict[str, dict] = {}

    def get(self, section: str, key: str, flag: str | None = None):
        value = DEFAULTS[section][key]
        if section in self.file_cfg and key in self.file_cfg[section]:
            value = _coerce(self.file_cfg[section][key], DEFAULTS[section][key])
        if flag is not None:
            flag_value = getattr(self.args, flag, None)
            if flag_value is not None:
                value = _coerce(flag_value, DEFAULTS[section][key])
        self.resolved.setdefault(section, {})[key] = value
        return value

    def write_resolved(self, out_dir: str, command: str, extra: dict | None = None) -> None:
        doc = {"command": command, "settings": self.resolved}
        if extra:
            doc.update(extra)
        _write_json(os.path.join(out_dir, "config.json"), doc)


def _write_json(path: str, doc) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_dataset(path: str, fmt: str, label_column: str) -> Dataset:
    if not path:
        raise ConfigError("no input data given; pass --data or set [data] path")
    if not os.path.exists(path):
        raise ConfigError(f"data file not found: {path}")
    if fmt == "sparse":
        return load_sparse_index_value(path)
    if fmt not in ("csv", "csv-noheader"):
        raise ConfigError(f"unknown data format {fmt!r}")
    col: int | str | None = None
    if label_column:
        try:
            col = int(label_column)
        except ValueError:
            col = label_column
    return load_dense(path, has_header=(fmt == "csv"), label_column=col)


def _require_out(args) -> str:
    out = getattr(args, "out", None)
    if not out:
        raise ConfigError("this command requires --out DIR")
    os.makedirs(out, exist_ok=True)
    return out


# ---- subcommands -----------------------------------------------------------


def cmd_synth(args) -> int:
    st = Settings(args)
    out = _require_out(args)
    n = st.get("synth", "n", "n")
    d = st.get("synth", "d", "d")
    c = st.get("synth", "c", "c")
    labeling = st.get("synth", "labeling", "labeling")
    mu = st.get("synth", "mu", "mu")
    seed = st.get("run", "seed", "seed")
    ds = synth_gaussian(n, d, c, seed=substream_seed(seed, "synth"), labeling=labeling, mu=mu)
    path = os.path.join(out, "synthetic.csv")
    save_dense(ds, path)
    st.write_resolved(out, "synth")
    print(json.dumps({"path": path, "n": n, "d": d, "c": c}, sort_keys=True))
    return 0


def _train_pipeline(st: Settings, args, variant: Defuzz, h_override: float | None = None):
    """Shared by train and hsweep: load, split, normalize, init, train, test."""
    ds = _load_dataset(
        st.get("data", "path", "data"),
        st.get("data", "format", "data_format"),
        st.get("data", "label_column", "label_column"),
    )
    seed = st.get("run", "seed", "seed")
    split_spec = SplitSpec(
        st.get("split", "train_fraction", "train_fraction"),
        st.get("split", "val_fraction", "val_fraction"),
        seed=substream_seed(seed, "split"),
    )
    raw_train, raw_val, raw_test = split(ds, split_spec)
    norm_train, (norm_val, norm_test), stats = zscore_fit_transform(
        raw_train, [raw_val, raw_test]
    )

    rules = st.get("init", "rules", "rules")
    h = st.get("init", "h", "h") if h_override is None else h_override
    init_spec = InitSpec(
        h=h,
        sigma_spread=st.get("init", "sigma_spread", "sigma_spread"),
        kmeans_iters=st.get("init", "kmeans_iters", "kmeans_iters"),
        kmeans_restarts=st.get("init", "kmeans_restarts", "kmeans_restarts"),
        seed=substream_seed(seed, "init"),
    )
    model = init_model(norm_train, rules, variant, init_spec)

    cfg = TrainConfig(
        learning_rate=st.get("train", "learning_rate", "lr"),
        batch_size=st.get("train", "batch_size", "batch_size"),
        max_epochs=st.get("train", "max_epochs", "max_epochs"),
        patience=st.get("train", "patience", "patience"),
        seed=substream_seed(seed, "train"),
    )
    eff_bs = effective_batch_size(cfg.batch_size, norm_train.n_samples)
    landscape = st.get("diag", "landscape", "landscape")
    collector = DiagnosticsCollector(
        norm_train.features,
        variant=variant.value,
        dim=norm_train.n_features,
        rules=rules,
        h=h,
        landscape=landscape,
        landscape_every=st.get("diag", "landscape_every", "landscape_every"),
        landscape_batch=(norm_train.features[:eff_bs], norm_train.labels[:eff_bs])
        if landscape
        else None,
        landscape_eta=st.get("diag", "landscape_eta", "landscape_eta"),
    )
    collector.measure_model(model, 0)
    best, report = train(model, norm_train, norm_val, cfg, hooks=[collector])
    test_acc, test_loss = evaluate(best, norm_test)
    return {
        "raw_test": raw_test,
        "stats": stats,
        "label_values": ds.label_values,
        "model": best,
        "report": report,
        "collector": collector,
        "test_accuracy": test_acc,
        "test_loss": test_loss,
        "h": h,
        "rules": rules,
        "dim": norm_train.n_features,
        "sizes": (norm_train.n_samples, norm_val.n_samples, norm_test.n_samples),
    }


def cmd_train(args) -> int:
    st = Settings(args)
    out = _require_out(args)
    started = time.perf_counter()
    variant = Defuzz(st.get("run", "variant", "variant"))
    res = _train_pipeline(st, args, variant)

    res["model"].save(
        os.path.join(out, "checkpoint.json"),
        norm_stats=res["stats"].to_dict(),
        label_values=list(res["label_values"]) if res["label_values"] else None,
    )
    save_dense(res["raw_test"], os.path.join(out, "test_data.csv"))
    write_rows_csv(res["collector"].rows, os.path.join(out, "diagnostics.csv"))

    report = res["report"]
    report_doc = report.to_dict()
    report_doc.update(
        {
            "test_accuracy": res["test_accuracy"],
            "test_loss": res["test_loss"],
            "n_train": res["sizes"][0],
            "n_val": res["sizes"][1],
            "n_test": res["sizes"][2],
            "variant": variant.value,
        }
    )
    _write_json(os.path.join(out, "train_report.json"), report_doc)
    st.write_resolved(out, "train")
    # timing lives outside the deterministic report so reruns byte-match
    _write_json(
        os.path.join(out, "metadata.json"),
        {
            "wall_time_s": time.perf_counter() - started,
            "written_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        },
    )
    print(
        json.dumps(
            {
                "out": out,
                "best_epoch": report.best_epoch,
                "val_accuracy": report.val_accuracy[report.best_epoch - 1],
                "test_accuracy": res["test_accuracy"],
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_eval(args) -> int:
    st = Settings(args)
    if not args.checkpoint:
        raise ConfigError("eval requires --checkpoint")
    if not os.path.exists(args.checkpoint):
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    model, extras = TskModel.load(args.checkpoint)
    ds = _load_dataset(
        st.get("data", "path", "data"),
        st.get("data", "format", "data_format"),
        st.get("data", "label_column", "label_column"),
    )
    if ds.n_features != model.input_dim:
        raise ConfigError(
            f"data has {ds.n_features} features but the model expects {model.input_dim}"
        )

    labels = ds.labels
    if extras.get("label_values") and ds.label_values:
        lookup = {v: i for i, v in enumerate(extras["label_values"])}
        missing = [v for v in ds.label_values if v not in lookup]
        if missing:
            raise ConfigError(f"labels {missing} were not present at training time")
        labels = np.array([lookup[ds.label_values[y]] for y in ds.labels], dtype=np.int64)
    if labels.max() >= model.num_classes:
        raise ConfigError("data contains labels beyond the model's classes")

    feats = ds.features
    if extras.get("norm_stats"):
        feats = NormStats.from_dict(extras["norm_stats"]).transform(feats)
    normalized = Dataset(feats, labels, model.num_classes)
    acc, loss = evaluate(model, normalized)
    doc = {"accuracy": acc, "loss": loss, "n_samples": ds.n_samples}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, "eval.json"), doc)
        st.write_resolved(args.out, "eval")
    print(json.dumps(doc, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    st = Settings(args)
    out = _require_out(args)
    variant = Defuzz(st.get("run", "variant", "variant"))
    spec = SweepSpec(
        dims=_ints(st.get("sweep", "dims", "dims")),
        rule_counts=_ints(st.get("sweep", "rule_counts", "rule_counts")),
        h_values=_floats(st.get("sweep", "h_values", "h_values")),
        epochs_at=_ints(st.get("sweep", "epochs_at", "epochs_at")),
        repeats=st.get("sweep", "repeats", "repeats"),
        n_samples=st.get("sweep", "n_samples", "n_samples"),
        num_classes=st.get("sweep", "num_classes", "num_classes"),
        kmeans_iters=st.get("sweep", "kmeans_iters", "kmeans_iters"),
        kmeans_restarts=st.get("sweep", "kmeans_restarts", "kmeans_restarts"),
        seed=substream_seed(st.get("run", "seed", "seed"), "sweep"),
    )
    rows = saturation_sweep(spec, variant, jobs=st.get("sweep", "jobs", "jobs"))
    write_rows_csv(rows, os.path.join(out, "sweep.csv"))
    write_summary_json(rows, os.path.join(out, "sweep_summary.json"))
    st.write_resolved(out, "sweep")
    print(json.dumps({"out": out, "rows": len(rows)}, sort_keys=True))
    return 0


def cmd_hsweep(args) -> int:
    """Train HTSK and LogTSK across initial width locations h on one dataset."""
    st = Settings(args)
    out = _require_out(args)
    h_values = _floats(st.get("hsweep", "h_values", "h_values"))
    variants = (
        (Defuzz(args.variant),) if args.variant else (Defuzz.HTSK, Defuzz.LOGTSK)
    )
    rows = []
    results = []
    for variant in variants:
        for h in h_values:
            res = _train_pipeline(st, args, variant, h_override=h)
            rows.append(
                make_row(
                    variant=variant.value,
                    dim=res["dim"],
                    rules=res["rules"],
                    h=h,
                    epoch=res["report"].best_epoch,
                    repeat=0,
                    metric="test_accuracy",
                    value=res["test_accuracy"],
                )
            )
            results.append({"variant": variant.value, "h": h,
                            "test_accuracy": res["test_accuracy"]})
    write_rows_csv(rows, os.path.join(out, "hsweep.csv"))
    write_summary_json(rows, os.path.join(out, "hsweep_summary.json"))
    st.write_resolved(out, "hsweep")
    print(json.dumps({"out": out, "results": results}, sort_keys=True))
    return 0


def cmd_gradcheck(args) -> int:
    """Analytic vs finite-difference gradients on random small models."""
    st = Settings(args)
    checks = st.get("gradcheck", "checks", "checks")
    step = st.get("gradcheck", "step", "step")
    tol = st.get("gradcheck", "tol", "tol")
    dims = _ints(st.get("gradcheck", "dims", "dims"))
    rules = _ints(st.get("gradcheck", "rules", "rules"))
    classes = _ints(st.get("gradcheck", "classes", "classes"))
    seed = st.get("run", "seed", "seed")
    variants = (Defuzz(args.variant),) if args.variant else tuple(Defuzz)

    worst = 0.0
    ran = 0
    gen = substream_rng(seed, "gradcheck")
    for i in range(checks):
        variant = variants[i % len(variants)]
        d = int(gen.choice(dims))
        r = int(gen.choice(rules))
        c = int(gen.choice(classes))
        model = TskModel(
            centers=gen.standard_normal((r, d)),
            widths=1.0 + 0.2 * gen.standard_normal((r, d)),
            consequents=gen.standard_normal((r, d + 1, c)) * np.sqrt(2.0 / (d + 1)),
            variant=variant,
        )
        xs = gen.standard_normal((4, d))
        ys = gen.integers(0, c, size=4)
        _, analytic = loss_and_grad(model, xs, ys, Loss.CROSS_ENTROPY)
        fd = finite_diff_grad(model, xs, ys, Loss.CROSS_ENTROPY, step=step)
        worst = max(worst, relative_error(analytic, fd))
        ran += 1
    doc = {"checks": ran, "max_relative_error": worst, "tolerance": tol}
    print(json.dumps(doc, sort_keys=True))
    if worst > tol:
        raise NumericError(f"gradient check failed: {worst:.3e} > {tol:.1e}")
    return 0


# ---- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tskfuzz", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("synth", help="generate a synthetic gaussian dataset CSV")
    common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--c", type=int)
    p.add_argument("--labeling", choices=("random", "cluster-separable"))
    p.add_argument("--mu", type=float)
    p.set_defaults(func=cmd_synth)

    def data_flags(p):
        p.add_argument("--data", help="input data file")
        p.add_argument("--data-format", dest="data_format",
                       choices=("csv", "csv-noheader", "sparse"))
        p.add_argument("--label-column", dest="label_column")

    p = sub.add_parser("train", help="split, normalize, initialize and train a model")
    common(p)
    data_flags(p)
    p.add_argument("--variant", choices=VARIANT_CHOICES)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--rules", type=int)
    p.add_argument("--h", type=float)
    p.add_argument("--sigma-spread", dest="sigma_spread", type=float)
    p.add_argument("--kmeans-iters", dest="kmeans_iters", type=int)
    p.add_argument("--kmeans-restarts", dest="kmeans_restarts", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--landscape", action="store_const", const=True)
    p.add_argument("--landscape-every", dest="landscape_every", type=int)
    p.add_argument("--landscape-eta", dest="landscape_eta", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a labelled dataset")
    common(p)
    data_flags(p)
    p.add_argument("--checkpoint", help="checkpoint JSON written by train")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="fired-rule saturation sweep on synthetic data")
    common(p)
    p.add_argument("--variant", choices=VARIANT_CHOICES)
    p.add_argument("--dims")
    p.add_argument("--rule-counts", dest="rule_counts")
    p.add_argument("--h-values", dest="h_values")
    p.add_argument("--epochs-at", dest="epochs_at")
    p.add_argument("--repeats", type=int)
    p.add_argument("--sweep-samples", dest="n_samples", type=int)
    p.add_argument("--num-classes", dest="num_classes", type=int)
    p.add_argument("--kmeans-iters", dest="kmeans_iters", type=int)
    p.add_argument("--kmeans-restarts", dest="kmeans_restarts", type=int)
    p.add_argument("--jobs", type=int, help="grid points to run in parallel")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("hsweep", help="accuracy across initial width locations h")
    common(p)
    data_flags(p)
    p.add_argument("--variant", choices=VARIANT_CHOICES,
                   help="restrict to one variant (default: htsk and logtsk)")
    p.add_argument("--h-values", dest="h_values")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--rules", type=int)
    p.add_argument("--sigma-spread", dest="sigma_spread", type=float)
    p.add_argument("--kmeans-iters", dest="kmeans_iters", type=int)
    p.add_argument("--kmeans-restarts", dest="kmeans_restarts", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.set_defaults(func=cmd_hsweep)

    p = sub.add_parser("gradcheck", help="verify analytic gradients numerically")
    common(p)
    p.add_argument("--variant", choices=VARIANT_CHOICES + ("l1", "l2"))
    p.add_argument("--checks", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--dims")
    p.add_argument("--rules")
    p.add_argument("--classes")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 2
    except TskError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - internal bug path
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
