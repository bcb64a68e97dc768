"""Experiment orchestration: config files, the runner, and the CLI.

A config file describes one experiment end to end: where the data comes
from (a built-in graph, a graph file, or a CSV), which model to fit or
load, which sampler to use, and the list of (feature, conditioning set)
jobs to evaluate. Running it produces a results CSV in the engine's
schema, a grouped bar chart as a standalone SVG, and a small manifest.
Outputs are byte-identical across reruns with the same config and seed.

Command line verbs: ``run``, ``validate``, ``simulate``, ``fit``. Exit
codes: 0 on success, 2 for config or input-file problems, 3 for runtime
or numeric failures.
"""

from __future__ import annotations

import argparse
import csv as _csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml
from scipy import stats

from . import engine
from .core import (
    TEST,
    TRAIN,
    Dataset,
    InvalidPartitionError,
    SchemaError,
    empirical_risk,
    get_loss,
    load_csv,
    save_csv,
)
from .inference import DEFAULT_ALPHA, get_test
from .models import FitError, LinearModel, fit_from_dataset, load_model, save_model
from .samplers import SAMPLER_KINDS, CovarianceError, KnockoffError, fit_sampler
from .scm import BUILTIN_GRAPHS, GraphError, ScmGraph, builtin_graph, load_graph, sample_scm

BUNDLED_CONFIGS = ("experiment_a", "experiment_b")
TEST_KINDS = ("paired-t", "sign-flip")

_PALETTE = (
    "#4c72b0", "#dd8452", "#55a868", "#c44e52",
    "#8172b3", "#937860", "#da8bc3", "#8c8c8c",
)


class ConfigError(ValueError):
    """Config file missing, unreadable, or schema-invalid."""


class RunError(RuntimeError):
    """A job failed during execution; partial results were flushed."""


@dataclass(frozen=True)
class Job:
    feature: str
    conditioning: tuple[str, ...]
    extension: tuple[str, ...] | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to run one experiment deterministically."""

    target: str
    features: tuple[str, ...]
    jobs: tuple[Job, ...]
    output: str
    data_graph: str | None = None
    data_n: int | None = None
    data_csv: str | None = None
    split_column: str | None = None
    test_fraction: float = 0.10
    seed: int = 0
    model: str = "ols"
    loss: str = "squared"
    sampler_kind: str = "gaussian"
    ridge: float | None = None
    replications: int = 30
    form: str = engine.DIFFERENCE
    test_kind: str = "paired-t"
    alpha: float = DEFAULT_ALPHA


def config_to_mapping(config: ExperimentConfig) -> dict:
    data: dict = {}
    if config.data_csv is not None:
        data["csv"] = config.data_csv
        if config.split_column is not None:
            data["split_column"] = config.split_column
    else:
        data["graph"] = config.data_graph
        data["n"] = config.data_n
    return {
        "data": data,
        "target": config.target,
        "features": list(config.features),
        "test_fraction": config.test_fraction,
        "seed": config.seed,
        "model": config.model,
        "loss": config.loss,
        "sampler": {"kind": config.sampler_kind, "ridge": config.ridge},
        "replications": config.replications,
        "form": config.form,
        "test": {"kind": config.test_kind, "alpha": config.alpha},
        "jobs": [
            {
                "feature": job.feature,
                "conditioning": list(job.conditioning),
                **({"extension": list(job.extension)} if job.extension is not None else {}),
            }
            for job in config.jobs
        ],
        "output": config.output,
    }


def config_hash(config: ExperimentConfig) -> str:
    """Hash of the semantically meaningful fields (the output path is not one)."""
    mapping = config_to_mapping(config)
    mapping.pop("output")
    blob = json.dumps(mapping, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _name_list(raw, where: str, problems: list[str]) -> tuple[str, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list) or not all(isinstance(v, (str, int)) for v in raw):
        problems.append(f"{where}: expected a list of names")
        return ()
    return tuple(str(v) for v in raw)


def _parse_jobs(raw, problems: list[str]) -> tuple[Job, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        problems.append("jobs: expected a list")
        return ()
    jobs: list[Job] = []
    for k, item in enumerate(raw):
        where = f"jobs[{k}]"
        if not isinstance(item, dict) or "feature" not in item:
            problems.append(f"{where}: each job needs at least a 'feature'")
            continue
        unknown = set(item) - {"feature", "conditioning", "extension"}
        if unknown:
            problems.append(f"{where}: unknown keys {', '.join(sorted(unknown))}")
        conditioning = _name_list(item.get("conditioning"), f"{where}.conditioning", problems)
        extension = None
        if "extension" in item:
            extension = _name_list(item.get("extension"), f"{where}.extension", problems)
        jobs.append(Job(str(item["feature"]), conditioning, extension))
    return tuple(jobs)


def config_from_mapping(mapping) -> tuple[ExperimentConfig | None, list[str]]:
    """Parse a raw mapping; returns (config, problems).

    A config object is returned only when no problems were found, so the
    two outcomes cannot be mixed up.
    """
    problems: list[str] = []
    if not isinstance(mapping, dict):
        return None, ["config must be a YAML mapping"]
    known = {
        "data", "target", "features", "test_fraction", "seed", "model", "loss",
        "sampler", "replications", "form", "test", "jobs", "output",
    }
    for key in set(mapping) - known:
        problems.append(f"unknown top-level key {key!r}")

    data = mapping.get("data")
    data_graph = data_n = data_csv = split_column = None
    if not isinstance(data, dict):
        problems.append("data: required mapping with 'graph' + 'n', or 'csv'")
    else:
        unknown = set(data) - {"graph", "n", "csv", "split_column"}
        if unknown:
            problems.append(f"data: unknown keys {', '.join(sorted(unknown))}")
        has_graph, has_csv = "graph" in data, "csv" in data
        if has_graph == has_csv:
            problems.append("data: give exactly one of 'graph' or 'csv'")
        elif has_graph:
            data_graph = str(data["graph"])
            if not isinstance(data.get("n"), int) or data["n"] < 1:
                problems.append("data.n: required positive integer with 'graph'")
            else:
                data_n = data["n"]
            if "split_column" in data:
                problems.append("data.split_column: only valid with 'csv'")
        else:
            data_csv = str(data["csv"])
            if "n" in data:
                problems.append("data.n: only valid with 'graph'")
            if "split_column" in data:
                split_column = str(data["split_column"])

    target = mapping.get("target")
    if not isinstance(target, str) or not target:
        problems.append("target: required non-empty string")
        target = "?"
    features = _name_list(mapping.get("features"), "features", problems)
    if not features:
        problems.append("features: required non-empty list")
    if len(set(features)) != len(features):
        problems.append("features: names must be unique")
    if target in features:
        problems.append("features: the target cannot be a feature")

    test_fraction = mapping.get("test_fraction", 0.10)
    if not isinstance(test_fraction, (int, float)) or not 0.0 < float(test_fraction) < 1.0:
        problems.append("test_fraction: must be a number strictly between 0 and 1")
        test_fraction = 0.10
    seed = mapping.get("seed", 0)
    if not isinstance(seed, int):
        problems.append("seed: must be an integer")
        seed = 0
    model = mapping.get("model", "ols")
    if not isinstance(model, str) or not model:
        problems.append("model: must be 'ols' or a model file path")
        model = "ols"
    loss = mapping.get("loss", "squared")
    try:
        get_loss(str(loss))
    except ValueError as exc:
        problems.append(f"loss: {exc}")

    sampler = mapping.get("sampler") or {}
    sampler_kind, ridge = "gaussian", None
    if not isinstance(sampler, dict):
        problems.append("sampler: expected a mapping with 'kind' and optional 'ridge'")
    else:
        unknown = set(sampler) - {"kind", "ridge"}
        if unknown:
            problems.append(f"sampler: unknown keys {', '.join(sorted(unknown))}")
        sampler_kind = str(sampler.get("kind", "gaussian"))
        if sampler_kind not in SAMPLER_KINDS:
            problems.append(
                f"sampler.kind: must be one of {', '.join(SAMPLER_KINDS)}"
            )
        raw_ridge = sampler.get("ridge")
        if raw_ridge is not None:
            if not isinstance(raw_ridge, (int, float)) or float(raw_ridge) < 0:
                problems.append("sampler.ridge: must be null or a number >= 0")
            else:
                ridge = float(raw_ridge)

    replications = mapping.get("replications", 30)
    if not isinstance(replications, int) or replications < 1:
        problems.append("replications: must be an integer >= 1")
        replications = 30
    form = str(mapping.get("form", engine.DIFFERENCE))
    if form not in engine.FORMS:
        problems.append(f"form: must be one of {', '.join(engine.FORMS)}")

    test = mapping.get("test") or {}
    test_kind, alpha = "paired-t", DEFAULT_ALPHA
    if not isinstance(test, dict):
        problems.append("test: expected a mapping with 'kind' and 'alpha'")
    else:
        unknown = set(test) - {"kind", "alpha"}
        if unknown:
            problems.append(f"test: unknown keys {', '.join(sorted(unknown))}")
        test_kind = str(test.get("kind", "paired-t"))
        if test_kind not in TEST_KINDS:
            problems.append(f"test.kind: must be one of {', '.join(TEST_KINDS)}")
        raw_alpha = test.get("alpha", DEFAULT_ALPHA)
        if not isinstance(raw_alpha, (int, float)) or not 0.0 < float(raw_alpha) < 1.0:
            problems.append("test.alpha: must lie strictly between 0 and 1")
        else:
            alpha = float(raw_alpha)

    jobs = _parse_jobs(mapping.get("jobs", []), problems)
    for k, job in enumerate(jobs):
        where = f"jobs[{k}] (feature={job.feature})"
        if job.feature not in features:
            problems.append(f"{where}: feature is not in the feature list")
        if target in job.conditioning:
            problems.append(f"{where}: the target may not appear in the conditioning set")
        if job.extension is not None:
            if target in job.extension:
                problems.append(f"{where}: the target may not appear in the extension set")
            if set(job.extension) & set(job.conditioning):
                problems.append(f"{where}: extension overlaps the conditioning set")
            if job.feature in job.extension:
                problems.append(f"{where}: the feature may not appear in the extension set")

    output = mapping.get("output")
    if not isinstance(output, str) or not output:
        problems.append("output: required non-empty directory path")
        output = "?"

    if problems:
        return None, problems
    return (
        ExperimentConfig(
            target=target,
            features=features,
            jobs=jobs,
            output=output,
            data_graph=data_graph,
            data_n=data_n,
            data_csv=data_csv,
            split_column=split_column,
            test_fraction=float(test_fraction),
            seed=seed,
            model=model,
            loss=str(loss),
            sampler_kind=sampler_kind,
            ridge=ridge,
            replications=replications,
            form=form,
            test_kind=test_kind,
            alpha=alpha,
        ),
        [],
    )


def _resolve_config_text(ref: str) -> str:
    """Config text for a path or a bundled config name."""
    if os.path.exists(ref):
        try:
            with open(ref) as fp:
                return fp.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {ref!r}: {exc}") from None
    if ref in BUNDLED_CONFIGS:
        return resources.files(__package__).joinpath("configs", f"{ref}.yaml").read_text()
    raise ConfigError(
        f"no config file {ref!r}; bundled configs: {', '.join(BUNDLED_CONFIGS)}"
    )


def load_config(ref: str) -> ExperimentConfig:
    config, problems = parse_config_text(_resolve_config_text(ref), ref)
    if problems:
        raise ConfigError("\n".join(problems))
    assert config is not None
    return config


def parse_config_text(text: str, where: str) -> tuple[ExperimentConfig | None, list[str]]:
    try:
        mapping = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        return None, [f"{where}: not valid YAML ({exc})"]
    return config_from_mapping(mapping)


def _resolve_graph(ref: str) -> ScmGraph:
    if ref in BUILTIN_GRAPHS:
        return builtin_graph(ref)
    if os.path.exists(ref):
        return load_graph(ref)
    raise GraphError(
        f"no graph file or built-in named {ref!r}; "
        f"built-ins: {', '.join(sorted(BUILTIN_GRAPHS))}"
    )


def _csv_header(path: str) -> list[str]:
    with open(path, newline="") as fp:
        row = next(_csv.reader(fp), None)
    if not row:
        raise SchemaError(f"{path}: empty file")
    return [h.strip() for h in row]


def validate_config(ref: str) -> list[str]:
    """All schema violations in the config, without running anything.

    Where the data source is resolvable the variable names referenced by
    jobs, features and target are checked against it as well.
    """
    config, problems = parse_config_text(_resolve_config_text(ref), ref)
    if config is None:
        return problems
    available: tuple[str, ...] | None = None
    if config.data_graph is not None:
        try:
            available = _resolve_graph(config.data_graph).nodes
        except GraphError as exc:
            problems.append(f"data.graph: {exc}")
    else:
        assert config.data_csv is not None
        if not os.path.exists(config.data_csv):
            problems.append(f"data.csv: no file {config.data_csv!r}")
        else:
            try:
                header = _csv_header(config.data_csv)
            except (OSError, SchemaError) as exc:
                problems.append(f"data.csv: {exc}")
            else:
                if config.split_column is not None:
                    if config.split_column not in header:
                        problems.append(
                            f"data.split_column: no column {config.split_column!r}"
                        )
                    header = [h for h in header if h != config.split_column]
                available = tuple(header)
    if available is not None:
        known = set(available)
        if config.target not in known:
            problems.append(f"target: {config.target!r} is not a data variable")
        for name in config.features:
            if name not in known:
                problems.append(f"features: {name!r} is not a data variable")
        for k, job in enumerate(config.jobs):
            for name in job.conditioning + (job.extension or ()):
                if name not in known:
                    problems.append(
                        f"jobs[{k}] (feature={job.feature}): "
                        f"{name!r} is not a data variable"
                    )
    if config.model != "ols" and not os.path.exists(config.model):
        problems.append(f"model: no file {config.model!r} (and it is not 'ols')")
    return problems


def _load_data(config: ExperimentConfig) -> Dataset:
    if config.data_csv is not None:
        try:
            return load_csv(
                config.data_csv,
                config.target,
                split_column=config.split_column,
                test_fraction=config.test_fraction,
                seed=config.seed,
            )
        except OSError as exc:
            raise ConfigError(f"cannot read {config.data_csv!r}: {exc}") from None
    assert config.data_graph is not None and config.data_n is not None
    graph = _resolve_graph(config.data_graph)
    return sample_scm(
        graph, config.data_n, config.seed, config.target, config.test_fraction
    )


def _load_model(config: ExperimentConfig, data: Dataset) -> LinearModel:
    if config.model == "ols":
        return fit_from_dataset(data, config.features)
    model = load_model(config.model)
    if set(model.feature_order) != set(config.features):
        raise ConfigError(
            f"model file {config.model!r} was fit on features "
            f"{sorted(model.feature_order)}, config expects {sorted(config.features)}"
        )
    return model


def _expand_cells(jobs) -> list[tuple[str, tuple[str, ...]]]:
    """Job list -> deduplicated (feature, conditioning) cells, in order.

    A job carrying an extension contributes the base cell and the
    extended cell; the importance change is then the difference of the
    two corresponding CSV rows.
    """
    cells: list[tuple[str, tuple[str, ...]]] = []
    seen = set()
    for job in jobs:
        base = tuple(sorted(set(job.conditioning)))
        variants = [base]
        if job.extension is not None:
            variants.append(tuple(sorted(set(job.conditioning) | set(job.extension))))
        for cond in variants:
            cell = (job.feature, cond)
            if cell not in seen:
                seen.add(cell)
                cells.append(cell)
    return cells


@dataclass(frozen=True)
class RunResult:
    csv_path: str
    svg_path: str
    manifest_path: str
    rows: int
    seconds: float


def run_experiment(config: ExperimentConfig, workers: int = 1) -> RunResult:
    """Execute every job and write results.csv, figure.svg, manifest.yaml.

    Cells run concurrently up to ``workers``; assembly order, and
    therefore every output byte, does not depend on scheduling. On a
    failing cell the rows completed before it are still written.
    """
    started = time.perf_counter()
    data = _load_data(config)
    model = _load_model(config, data)
    loss = get_loss(config.loss)
    test = get_test(config.test_kind)
    cells = _expand_cells(config.jobs)
    os.makedirs(config.output, exist_ok=True)
    csv_path = os.path.join(config.output, "results.csv")
    svg_path = os.path.join(config.output, "figure.svg")
    manifest_path = os.path.join(config.output, "manifest.yaml")

    def evaluate(cell: tuple[str, tuple[str, ...]]):
        feature, cond = cell
        sampler = None
        if feature not in cond:
            sampler = fit_sampler(
                data, feature, cond, kind=config.sampler_kind, ridge=config.ridge
            )
        estimate = engine.compute_rfi(
            model, loss, data, feature, cond, sampler,
            replications=config.replications, base_seed=config.seed,
        )
        result = test(estimate.first_differences, alpha=config.alpha)
        return estimate, result

    results: list[tuple] = []
    rows: list[list[str]] = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [pool.submit(evaluate, cell) for cell in cells]
        for k, future in enumerate(futures):
            try:
                results.append(future.result())
            except Exception as exc:
                for pending in futures[k + 1:]:
                    pending.cancel()
                engine.write_results_csv(csv_path, rows)
                feature, cond = cells[k]
                raise RunError(
                    f"job {k} (feature={feature}, "
                    f"G={engine.format_conditioning(cond) or '{}'}) failed: {exc}"
                ) from exc
            rows.append(engine.result_row(results[k][0], results[k][1], config.form))
    engine.write_results_csv(csv_path, rows)
    # titled after the data source, not the output path, so redirecting
    # the output directory cannot change a single output byte
    title = config.data_graph or os.path.basename(config.data_csv or "")
    svg = render_figure([r[0] for r in results], config.form, title=title)
    with open(svg_path, "w", newline="") as fp:
        fp.write(svg)
    seconds = time.perf_counter() - started
    manifest = {
        "config_hash": config_hash(config),
        "seed": config.seed,
        "replications": config.replications,
        "rows": len(rows),
        "wall_time_seconds": round(seconds, 3),
        "results_csv": "results.csv",
        "figure_svg": "figure.svg",
    }
    with open(manifest_path, "w") as fp:
        yaml.safe_dump(manifest, fp, sort_keys=False)
    return RunResult(csv_path, svg_path, manifest_path, len(rows), seconds)


def _nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    span = hi - lo
    raw = span / max(target - 1, 1)
    magnitude = 10.0 ** math.floor(math.log10(raw))
    step = 10.0 * magnitude
    for mult in (1.0, 2.0, 2.5, 5.0):
        if span / (mult * magnitude) <= target - 1:
            step = mult * magnitude
            break
    first = math.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * span:
        ticks.append(round(v, 12))
        v += step
    return ticks


def render_figure(estimates, form: str = engine.DIFFERENCE, title: str = "") -> str:
    """Grouped bar chart of the estimates with 95% CI whiskers, as SVG text.

    Groups are features, bars within a group are conditioning sets, both
    in first-appearance order. Rendering is fully deterministic: fixed
    geometry, fixed palette, fixed-precision coordinates.
    """
    features: list[str] = []
    cond_labels: list[tuple[str, ...]] = []
    for est in estimates:
        if est.feature not in features:
            features.append(est.feature)
        if est.conditioning not in cond_labels:
            cond_labels.append(est.conditioning)
    values = {}
    for est in estimates:
        half = math.nan
        if est.replications >= 2 and math.isfinite(est.value_se(form)):
            half = est.value_se(form) * float(stats.t.ppf(0.975, est.replications - 1))
        values[(est.feature, est.conditioning)] = (est.value(form), half)

    reference = 0.0 if form == engine.DIFFERENCE else 1.0
    lo, hi = reference, reference
    for value, half in values.values():
        spread = half if math.isfinite(half) else 0.0
        lo = min(lo, value - spread)
        hi = max(hi, value + spread)
    if hi - lo <= 0:
        lo, hi = reference - 1.0, reference + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    bar_w, bar_gap, group_pad = 22.0, 4.0, 18.0
    group_w = len(cond_labels) * (bar_w + bar_gap) - bar_gap + 2 * group_pad
    left, top, plot_h, bottom = 70.0, 46.0, 280.0, 52.0
    plot_w = max(group_w * len(features), 120.0)
    legend_w = 14 + 8 * max(
        [len(_cond_text(c)) for c in cond_labels] + [6]
    )
    width = left + plot_w + 24 + legend_w + 12
    height = top + plot_h + bottom

    def y_of(v: float) -> float:
        return top + (hi - v) / (hi - lo) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="#ffffff"/>',
        f'<text x="{left:.2f}" y="24" font-family="sans-serif" font-size="15" '
        f'fill="#222222">Relative feature importance{(" (" + title + ")") if title else ""}</text>',
    ]
    for tick in _nice_ticks(lo, hi):
        y = y_of(tick)
        out.append(
            f'<line x1="{left:.2f}" y1="{y:.2f}" x2="{left + plot_w:.2f}" y2="{y:.2f}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{left - 8:.2f}" y="{y + 4:.2f}" font-family="sans-serif" '
            f'font-size="11" fill="#444444" text-anchor="end">{tick:g}</text>'
        )
    y_ref = y_of(reference)
    out.append(
        f'<line x1="{left:.2f}" y1="{y_ref:.2f}" x2="{left + plot_w:.2f}" '
        f'y2="{y_ref:.2f}" stroke="#555555" stroke-width="1.2"/>'
    )
    for fi, feature in enumerate(features):
        gx = left + fi * group_w + group_pad
        for ci, cond in enumerate(cond_labels):
            if (feature, cond) not in values:
                continue
            value, half = values[(feature, cond)]
            x = gx + ci * (bar_w + bar_gap)
            y0, y1 = sorted((y_of(value), y_ref))
            color = _PALETTE[ci % len(_PALETTE)]
            out.append(
                f'<rect x="{x:.2f}" y="{y0:.2f}" width="{bar_w:.2f}" '
                f'height="{max(y1 - y0, 0.5):.2f}" fill="{color}"/>'
            )
            if math.isfinite(half):
                cx = x + bar_w / 2
                y_lo, y_hi = y_of(value - half), y_of(value + half)
                out.append(
                    f'<line x1="{cx:.2f}" y1="{y_hi:.2f}" x2="{cx:.2f}" '
                    f'y2="{y_lo:.2f}" stroke="#222222" stroke-width="1.2"/>'
                )
                for yy in (y_lo, y_hi):
                    out.append(
                        f'<line x1="{cx - 5:.2f}" y1="{yy:.2f}" x2="{cx + 5:.2f}" '
                        f'y2="{yy:.2f}" stroke="#222222" stroke-width="1.2"/>'
                    )
        out.append(
            f'<text x="{gx + (group_w - 2 * group_pad) / 2:.2f}" '
            f'y="{top + plot_h + 20:.2f}" font-family="sans-serif" font-size="12" '
            f'fill="#222222" text-anchor="middle">{feature}</text>'
        )
    out.append(
        f'<line x1="{left:.2f}" y1="{top:.2f}" x2="{left:.2f}" '
        f'y2="{top + plot_h:.2f}" stroke="#222222" stroke-width="1"/>'
    )
    axis_label = "risk difference" if form == engine.DIFFERENCE else "risk ratio"
    out.append(
        f'<text x="16" y="{top + plot_h / 2:.2f}" font-family="sans-serif" '
        f'font-size="12" fill="#222222" '
        f'transform="rotate(-90 16 {top + plot_h / 2:.2f})" '
        f'text-anchor="middle">{axis_label}</text>'
    )
    lx = left + plot_w + 24
    for ci, cond in enumerate(cond_labels):
        ly = top + ci * 20
        color = _PALETTE[ci % len(_PALETTE)]
        out.append(f'<rect x="{lx:.2f}" y="{ly:.2f}" width="12" height="12" fill="{color}"/>')
        out.append(
            f'<text x="{lx + 18:.2f}" y="{ly + 10:.2f}" font-family="sans-serif" '
            f'font-size="11" fill="#222222">{_cond_text(cond)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _cond_text(conditioning: tuple[str, ...]) -> str:
    return "G = {" + ", ".join(conditioning) + "}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relfi",
        description="Relative feature importance experiments on tabular data.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="config file path or bundled name "
                       f"({', '.join(BUNDLED_CONFIGS)})")
    p_run.add_argument("--output", help="override the output directory")
    p_run.add_argument("--seed", type=int, help="override the base seed")
    p_run.add_argument("--replications", type=int, help="override the replication count")
    p_run.add_argument("--sampler", choices=SAMPLER_KINDS, help="override the sampler kind")
    p_run.add_argument("--form", choices=engine.FORMS, help="override the estimate form")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="max concurrent jobs (default 1)")

    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")

    p_sim = sub.add_parser("simulate", help="sample a dataset from a graph")
    p_sim.add_argument("graph", help="graph file path or built-in name "
                       f"({', '.join(sorted(BUILTIN_GRAPHS))})")
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--target", default=None)
    p_sim.add_argument("--test-fraction", type=float, default=0.10)
    p_sim.add_argument("--out", required=True, help="CSV path to write")

    p_fit = sub.add_parser("fit", help="fit the built-in least-squares model on a CSV")
    p_fit.add_argument("csv")
    p_fit.add_argument("--target", required=True)
    p_fit.add_argument("--features", default=None,
                       help="comma-separated names (default: all non-target columns)")
    p_fit.add_argument("--split-column", default=None)
    p_fit.add_argument("--test-fraction", type=float, default=0.10)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--out", default=None, help="model file to write")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.output is not None:
        overrides["output"] = args.output
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replications is not None:
        if args.replications < 1:
            raise ConfigError("--replications must be >= 1")
        overrides["replications"] = args.replications
    if args.sampler is not None:
        overrides["sampler_kind"] = args.sampler
    if args.form is not None:
        overrides["form"] = args.form
    if overrides:
        config = dataclasses.replace(config, **overrides)
    result = run_experiment(config, workers=args.jobs)
    print(
        f"wrote {result.csv_path}, {result.svg_path}, {result.manifest_path} "
        f"({result.rows} rows, {result.seconds:.1f}s)"
    )
    return 0


def _cmd_validate(args) -> int:
    problems = validate_config(args.config)
    if problems:
        for line in problems:
            print(line)
        return 2
    print("ok")
    return 0


def _cmd_simulate(args) -> int:
    try:
        graph = _resolve_graph(args.graph)
    except GraphError as exc:
        raise ConfigError(str(exc)) from None
    data = sample_scm(graph, args.n, args.seed, args.target, args.test_fraction)
    save_csv(data, args.out)
    print(f"wrote {args.out} ({data.n} rows, {len(data.variable_names)} variables)")
    return 0


def _cmd_fit(args) -> int:
    features = None
    if args.features is not None:
        features = [f.strip() for f in args.features.split(",") if f.strip()]
        if not features:
            raise ConfigError("--features must name at least one column")
    try:
        data = load_csv(
            args.csv,
            args.target,
            split_column=args.split_column,
            test_fraction=args.test_fraction,
            seed=args.seed,
        )
    except OSError as exc:
        raise ConfigError(f"cannot read {args.csv!r}: {exc}") from None
    except SchemaError as exc:
        raise ConfigError(str(exc)) from None
    model = fit_from_dataset(data, features)
    loss = get_loss("squared")
    train_risk = empirical_risk(model, data, loss, TRAIN)
    test_risk = empirical_risk(model, data, loss, TEST)
    terms = " + ".join(
        f"{c:.4g}*{n}" for n, c in zip(model.feature_order, model.coefficients)
    )
    print(f"fit: {args.target} = {model.intercept:.4g} + {terms}")
    print(f"train risk {train_risk:.6g}, test risk {test_risk:.6g}")
    if args.out is not None:
        save_model(model, args.out)
        print(f"wrote {args.out}")
    return 0


_HANDLERS = {
    "run": _cmd_run,
    "validate": _cmd_validate,
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (
        RunError,
        FitError,
        CovarianceError,
        KnockoffError,
        GraphError,
        SchemaError,
        InvalidPartitionError,
        np.linalg.LinAlgError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def console_main() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
