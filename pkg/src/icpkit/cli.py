"""Command-line interface: ``icpkit synth | run | trials | compare``.

Every output file is a deterministic function of the resolved configuration,
so repeating a command reproduces its outputs byte for byte.
"""
from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .dataset import DataError, save_csv
from .diagnostics import (
    histogram_table,
    ks_statistic_vs_beta,
    ks_statistic_vs_beta_binomial,
    ks_two_sample_vs_beta,
    qq_pairs,
)
from .pipeline import SCHEMA_VERSION, ConfigError, PipelineConfig, fit_pipeline, make_synthetic


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def _parse_fractions(text):
    if text is None:
        return None
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from None


def _resolve_config(config_path, **overrides) -> PipelineConfig:
    base = {}
    if config_path:
        try:
            base = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from None
    csv_path, target = overrides.pop("csv_path", None), overrides.pop("target", None)
    if csv_path:
        base["data"] = {"csv": csv_path, "target": target or "y"}
    base.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig.from_dict(base)


def _common_options(f):
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False),
                     help="JSON pipeline configuration."),
        click.option("--method", type=click.Choice(
            ["naive-reg", "crf", "cqr", "naive-cls", "class-balanced", "aps"])),
        click.option("--alpha", type=float, help="Miscoverage level in (0, 1)."),
        click.option("--seed", type=int, help="Unsigned 64-bit seed."),
        click.option("--fractions", help="Split fractions a,b,c[,d]."),
        click.option("--csv", "csv_path", type=click.Path(dir_okay=False),
                     help="Read data from this CSV instead of the config."),
        click.option("--target", help="Target column of --csv (default y)."),
        click.option("--out", type=click.Path(file_okay=False), help="Output directory."),
    ]
    for opt in reversed(options):
        f = opt(f)
    return f


@click.group()
@click.version_option(__version__, prog_name="icpkit")
def cli():
    """Inductive conformal prediction with coverage-law diagnostics."""


@cli.command()
@click.option("--kind", type=click.Choice(["regression", "classification"]),
              default="regression", show_default=True)
@click.option("--n", type=int, default=2000, show_default=True)
@click.option("--noise", type=click.Choice(["homoscedastic", "heteroscedastic"]),
              default="homoscedastic", show_default=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--n-classes", type=int, default=5, show_default=True)
@click.option("--priors", help="Comma-separated class priors.")
@click.option("--separation", type=float, default=4.0, show_default=True)
@click.option("--weak-class", type=int)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="CSV to write.")
def synth(kind, n, noise, sigma, n_classes, priors, separation, weak_class, seed, out):
    """Write a synthetic dataset as CSV, plus its generator settings as OUT.meta.json."""
    if kind == "regression":
        spec = {"kind": kind, "n": n, "noise": noise, "sigma": sigma, "seed": seed}
    else:
        spec = {"kind": kind, "n": n, "n_classes": n_classes, "separation": separation,
                "seed": seed}
        if priors:
            spec["priors"] = [float(p) for p in priors.split(",")]
        if weak_class is not None:
            spec["weak_class"] = weak_class
    ds = make_synthetic(spec)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(ds, out)
    _dump_json({"schema_version": SCHEMA_VERSION, "generator": spec,
                "task": ds.task, "target": ds.target_name}, Path(f"{out}.meta.json"))
    click.echo(f"wrote {len(ds)} rows x {ds.n_features} features to {out}")


@cli.command()
@_common_options
def run(config_path, method, alpha, seed, fractions, csv_path, target, out):
    """Split, fit, calibrate, predict and report once."""
    config = _resolve_config(config_path, method=method, alpha=alpha, seed=seed,
                             fractions=_parse_fractions(fractions), csv_path=csv_path,
                             target=target, out=out)
    pipe = fit_pipeline(config)
    report, rows = pipe.evaluate()
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"schema_version": SCHEMA_VERSION, "config": config.to_dict(),
               **report.to_dict()}
    _dump_json(payload, out_dir / "report.json")
    _dump_json({"schema_version": SCHEMA_VERSION, "method": config.method,
                "alpha": config.alpha, "q_hat": payload["q_hat"],
                "degenerate": report.degenerate}, out_dir / "qhat.json")
    if config.task == "regression":
        header = ["index", "lower", "upper", "truth", "covered"]
    else:
        header = ["index", "set", "truth", "covered"]
    _write_csv(out_dir / "predictions.csv", header, rows)
    size = (f"mean width {report.mean_width:.4f}" if report.mean_width is not None
            else f"mean set size {report.mean_set_size:.4f}")
    click.echo(f"{config.method}: alpha={config.alpha} n_cal={report.n_cal} "
               f"n_val={report.n_val} coverage={report.empirical_coverage:.4f} {size}")


@cli.command()
@_common_options
@click.option("--trials", "T", type=int, default=1000, show_default=True,
              help="Number of re-calibration trials.")
@click.option("--two-sample", is_flag=True,
              help="Also run the two-sample KS test against simulated Beta draws.")
def trials(config_path, method, alpha, seed, fractions, csv_path, target, out, T, two_sample):
    """Repeat calibration on fresh cal/val draws and compare with the Beta law."""
    if T < 20:
        raise click.UsageError(f"T too small for KS: need at least 20 trials, got {T}")
    config = _resolve_config(config_path, method=method, alpha=alpha, seed=seed,
                             fractions=_parse_fractions(fractions), csv_path=csv_path,
                             target=target, out=out)
    pipe = fit_pipeline(config)
    dist = pipe.trials(T)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(out_dir / "coverages.csv", ["trial", "coverage"],
               ((j + 1, float(c)) for j, c in enumerate(dist.coverages)))
    _dump_json({"schema_version": SCHEMA_VERSION, **dist.beta.to_dict()}, out_dir / "beta.json")
    ks = ks_statistic_vs_beta(dist)
    ks_doc = {"schema_version": SCHEMA_VERSION, **ks.to_dict(),
              "beta_binomial": ks_statistic_vs_beta_binomial(dist).to_dict()}
    if two_sample:
        ks_doc["two_sample"] = ks_two_sample_vs_beta(dist, seed=config.seed).to_dict()
    _dump_json(ks_doc, out_dir / "ks.json")
    _write_csv(out_dir / "histogram.csv", ["bin_left", "bin_right", "count",
                                           "beta_pdf_at_midpoint"], histogram_table(dist))
    _write_csv(out_dir / "qq.csv", ["level", "empirical", "beta"], qq_pairs(dist))
    _dump_json({
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "T": dist.T,
        "n_cal": pipe.n_cal,
        "n_val": pipe.n_val,
        "trial_mean": dist.mean,
        "trial_se": dist.standard_error,
        "expected_mean": float(np.mean(dist.expected)),
    }, out_dir / "summary.json")
    click.echo(f"{config.method}: T={dist.T} n_cal={pipe.n_cal} n_val={pipe.n_val} "
               f"mean coverage {dist.mean:.5f} (Beta mean {dist.beta.mean:.5f}), "
               f"KS D={ks.D:.4f} crit={ks.critical_5pct:.4f} "
               f"{'pass' if ks.passed else 'fail'}")


@cli.command()
@click.argument("reports", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(dir_okay=False), help="Also write the table as CSV.")
def compare(reports, out):
    """Side-by-side table of report.json files, in argument order."""
    header = ["method", "coverage", "mean_width_or_set_size", "min_class_coverage"]
    rows = []
    for path in reports:
        p = Path(path)
        if p.is_dir():
            p = p / "report.json"
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
            size = doc.get("mean_width", doc.get("mean_set_size"))
            rows.append((doc["method"], float(doc["empirical_coverage"]),
                         None if size is None else float(size),
                         doc.get("min_class_coverage")))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise click.ClickException(f"malformed report {p}: {exc}") from None
    widths = [max(len(header[i]), *(len(_fmt(r[i])) for r in rows)) for i in range(4)]
    click.echo("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for r in rows:
        click.echo("  ".join(_fmt(v).ljust(w) for v, w in zip(r, widths)))
    if out:
        _write_csv(Path(out), header, ([("" if v is None else v) for v in r] for r in rows))


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="icpkit", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except (ConfigError, DataError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
