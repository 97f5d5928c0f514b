"""Command-line entry point.

Subcommands: simulate, train, predict, evaluate, explain. Every flag has a
config-file equivalent (JSON, keys named like the flags with underscores);
explicit flags win over the file. Each run writes a manifest holding the
fully resolved config, the seed, and sha256 hashes of inputs and outputs, so
a run can be reproduced from the manifest alone (`--config manifest.json`).
All outputs are written atomically: a failed run leaves no partial files.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .errors import InputError, SchemaMismatchError, SingularityError
from .fairmetrics import adjustment_tree, bootstrap_ci, cf_error, group_stats
from .learners import FOREST, LINEAR, RIDGE, TREE, LearnerSpec
from .pipeline import (
    BaseCase,
    DecisionRule,
    DmlFairModel,
    RULE_MAX_FLOOR,
    RULE_NONE,
    UnawareModel,
    apply_decision_rule,
    train,
    train_unaware,
)
from .simlab import LatentTable, SimConfig, counterfactual_copy, generate, sim_schema
from .tabular import (
    CATEGORICAL,
    Column,
    ColumnRole,
    Dataset,
    Schema,
    infer_schema,
    load_csv,
    schema_from_json,
    schema_to_json,
    write_csv,
)

# ---------------------------------------------------------------------------
# small utilities


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_csv_dataset(path: Path, data: Dataset) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        write_csv(data, tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    import numba

    numba.set_num_threads(int(n))


class _Run:
    """Collects resolved config plus input/output hashes for the manifest."""

    def __init__(self, subcommand: str, config: dict):
        self.subcommand = subcommand
        self.config = config
        self.inputs: dict[str, str] = {}
        self.outputs: list[Path] = []

    def record_input(self, path: str | Path | None) -> None:
        if path is None:
            return
        p = Path(path)
        if p.is_file():
            self.inputs[str(p)] = _sha256(p)

    def record_output(self, path: str | Path) -> None:
        self.outputs.append(Path(path))

    def write_manifest(self, path: Path) -> None:
        manifest = {
            "tool": "dmlfair",
            "version": __version__,
            "subcommand": self.subcommand,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": {str(p): _sha256(p) for p in self.outputs if p.is_file()},
        }
        _atomic_write_text(path, _json_dumps(manifest))


# ---------------------------------------------------------------------------
# config/flag resolution

_DEFAULTS: dict[str, dict] = {
    "simulate": {
        "n": 7000, "seed": 0, "out": None, "latent": None, "schema_out": None,
        "rating_scale_all": False, "split_train": None, "threads": None,
        "manifest": None,
    },
    "train": {
        "data": None, "schema": None, "sensitive": None, "outcome": None,
        "identifier": None, "learner": "forest", "trees": 500, "mtry": None,
        "min_leaf": 5, "max_depth": None, "alpha": 0.0, "folds": 10,
        "base": None, "seed": 0, "model": None, "unaware_model": None,
        "warn_small_groups": 50, "threads": None, "manifest": None,
    },
    "predict": {
        "model": None, "data": None, "out": None, "relative": False,
        "rule": "none", "unaware_model": None, "lower_is_better": False,
        "threads": None, "manifest": None,
    },
    "evaluate": {
        "model": None, "data": None, "unaware_model": None, "latent": None,
        "sim_config": None, "cf_gender": None, "cf_race": None,
        "subgroup": None, "report": None, "plots": None, "bins": 40,
        "bootstrap": None, "seed": 0, "threads": None, "manifest": None,
    },
    "explain": {
        "model": None, "data": None, "unaware_model": None, "group_col": None,
        "levels": None, "max_depth": 6, "min_leaf": 5, "out": None,
        "threads": None, "manifest": None,
    },
}


def _resolve(sub: str, args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    resolved = dict(_DEFAULTS[sub])
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}: not valid JSON ({exc})") from exc
        if "config" in raw and "subcommand" in raw:  # a manifest; reuse its config
            if raw["subcommand"] != sub:
                raise InputError(
                    f"manifest {args.config} is for {raw['subcommand']!r}, not {sub!r}"
                )
            raw = raw["config"]
        unknown = set(raw) - set(resolved)
        if unknown:
            raise InputError(f"{args.config}: unknown config keys {sorted(unknown)}")
        resolved.update(raw)
    for key in resolved:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _require(cfg: dict, *keys: str) -> None:
    for key in keys:
        if cfg[key] is None:
            raise InputError(f"missing required option --{key.replace('_', '-')}")


def _split_list(value: str | None) -> tuple[str, ...]:
    if not value:
        return ()
    return tuple(s.strip() for s in str(value).split(",") if s.strip())


def _parse_base(text: str) -> dict[str, str]:
    out = {}
    for part in _split_list(text):
        if "=" not in part:
            raise InputError(f"base case entries look like column=value, got {part!r}")
        name, value = part.split("=", 1)
        out[name.strip()] = value.strip()
    if not out:
        raise InputError("empty base case")
    return out


def _learner_from_config(cfg: dict) -> LearnerSpec:
    kind = cfg["learner"]
    if kind == LINEAR:
        return LearnerSpec.linear()
    if kind == RIDGE:
        return LearnerSpec.ridge(float(cfg["alpha"]))
    if kind == TREE:
        return LearnerSpec.tree(
            max_depth=cfg["max_depth"], min_leaf=int(cfg["min_leaf"]), seed=int(cfg["seed"])
        )
    if kind == FOREST:
        return LearnerSpec.forest(
            n_trees=int(cfg["trees"]),
            mtry=None if cfg["mtry"] is None else int(cfg["mtry"]),
            min_leaf=int(cfg["min_leaf"]),
            seed=int(cfg["seed"]),
        )
    raise InputError(f"unknown learner {kind!r}")


def _load_schema_for(cfg: dict) -> Schema:
    data_path = Path(cfg["data"])
    schema_path = cfg["schema"]
    if schema_path is None:
        sidecar = data_path.with_suffix(data_path.suffix + ".schema.json")
        if sidecar.is_file():
            schema_path = sidecar
    sensitive = _split_list(cfg.get("sensitive"))
    identifier = _split_list(cfg.get("identifier"))
    if schema_path is not None:
        schema = schema_from_json(Path(schema_path).read_text(encoding="utf-8"))
        return _apply_roles(schema, sensitive, cfg.get("outcome"), identifier)
    if not sensitive or not cfg.get("outcome"):
        raise InputError(
            "no schema sidecar found; pass --schema, or --sensitive and --outcome "
            "so the schema can be inferred from the CSV"
        )
    return infer_schema(data_path, cfg["outcome"], sensitive, identifier)


def _apply_roles(
    schema: Schema,
    sensitive: tuple[str, ...],
    outcome: str | None,
    identifier: tuple[str, ...],
) -> Schema:
    if not sensitive and outcome is None and not identifier:
        return schema
    names = set(schema.names)
    for name in (*sensitive, *identifier, *((outcome,) if outcome else ())):
        if name not in names:
            raise SchemaMismatchError(f"role override names unknown column {name!r}")
    columns = []
    for col in schema.columns:
        if outcome is not None:
            if col.name == outcome:
                role = ColumnRole.OUTCOME
            elif col.name in sensitive:
                role = ColumnRole.SENSITIVE
            elif col.name in identifier:
                role = ColumnRole.IDENTIFIER
            else:
                role = ColumnRole.NON_SENSITIVE
        else:
            if col.role is ColumnRole.OUTCOME:
                role = col.role
            elif col.name in sensitive:
                role = ColumnRole.SENSITIVE
            elif col.name in identifier:
                role = ColumnRole.IDENTIFIER
            elif sensitive:
                role = ColumnRole.NON_SENSITIVE if col.role is ColumnRole.SENSITIVE else col.role
            else:
                role = col.role
        columns.append(Column(col.name, col.kind, role, col.levels))
    return Schema(tuple(columns))


# ---------------------------------------------------------------------------
# subgroup expressions: OR over '|', AND over '&', atoms col=value / col!=value


def subgroup_mask(data: Dataset, expr: str) -> np.ndarray:
    def atom_mask(token: str) -> np.ndarray:
        token = token.strip()
        if "!=" in token:
            name, value = token.split("!=", 1)
            negate = True
        elif "=" in token:
            name, value = token.split("=", 1)
            negate = False
        else:
            raise InputError(f"cannot parse subgroup clause {token!r} (use col=value or col!=value)")
        name, value = name.strip(), value.strip()
        col = data.schema.column(name)
        if col.kind == CATEGORICAL:
            if value not in col.levels:
                raise InputError(
                    f"{value!r} is not a level of {name!r} (levels: {list(col.levels)})"
                )
            mask = data.column_values(name) == col.levels.index(value)
        else:
            from .tabular import coerce_value

            mask = data.column_values(name) == coerce_value(col, value)
        return ~mask if negate else mask

    or_mask = np.zeros(data.n_rows, dtype=bool)
    for clause in expr.split("|"):
        and_mask = np.ones(data.n_rows, dtype=bool)
        for token in clause.split("&"):
            and_mask &= atom_mask(token)
        or_mask |= and_mask
    return or_mask


# ---------------------------------------------------------------------------
# plot emission: binned-histogram CSV always, static SVG alongside


def _histogram_rows(
    series: Mapping[str, np.ndarray], bins: int
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    merged = np.concatenate([v for v in series.values()]) if series else np.zeros(1)
    lo, hi = float(merged.min()), float(merged.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    return edges, {name: np.histogram(v, bins=edges)[0] for name, v in series.items()}


def write_histogram_csv(path: Path, series: Mapping[str, np.ndarray], bins: int) -> None:
    edges, counts = _histogram_rows(series, bins)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["series", "bin_left", "bin_right", "count"])
    for name in series:
        for i in range(len(edges) - 1):
            writer.writerow([name, repr(float(edges[i])), repr(float(edges[i + 1])),
                             int(counts[name][i])])
    _atomic_write_text(path, buf.getvalue())


_SVG_COLORS = ("#4477aa", "#ee6677", "#228833", "#ccbb44")


def write_svg_histogram(path: Path, series: Mapping[str, np.ndarray], bins: int,
                        title: str) -> None:
    edges, counts = _histogram_rows(series, bins)
    width, height, pad = 720, 420, 48
    peak = max(1, max(int(c.max()) for c in counts.values()))
    plot_w, plot_h = width - 2 * pad, height - 2 * pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{title}</text>',
    ]
    n_series = len(counts)
    bar_span = plot_w / (len(edges) - 1)
    for s_idx, (name, cnt) in enumerate(counts.items()):
        color = _SVG_COLORS[s_idx % len(_SVG_COLORS)]
        bar_w = bar_span / n_series
        for i, c in enumerate(cnt):
            h = plot_h * (int(c) / peak)
            x = pad + i * bar_span + s_idx * bar_w
            y = height - pad - h
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{h:.2f}" '
                f'fill="{color}" fill-opacity="0.75"/>'
            )
        parts.append(
            f'<rect x="{pad + 12}" y="{pad + 18 * s_idx}" width="12" height="12" fill="{color}"/>'
            f'<text x="{pad + 30}" y="{pad + 18 * s_idx + 11}" font-family="sans-serif" '
            f'font-size="12">{name}</text>'
        )
    axis = (
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        f'stroke="black"/>'
        f'<text x="{pad}" y="{height - pad + 18}" font-family="sans-serif" font-size="11">'
        f'{edges[0]:.3g}</text>'
        f'<text x="{width - pad}" y="{height - pad + 18}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{edges[-1]:.3g}</text>'
        f'<text x="{pad - 6}" y="{pad + 4}" text-anchor="end" font-family="sans-serif" '
        f'font-size="11">{peak}</text>'
    )
    parts.append(axis)
    parts.append("</svg>")
    _atomic_write_text(path, "\n".join(parts))


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_simulate(cfg: dict) -> _Run:
    _require(cfg, "out")
    run = _Run("simulate", cfg)
    config = SimConfig(
        n=int(cfg["n"]), seed=int(cfg["seed"]),
        rating_scale_all=bool(cfg["rating_scale_all"]),
    )
    data, latents = generate(config)
    out = Path(cfg["out"])
    _atomic_write_csv_dataset(out, data)
    run.record_output(out)
    schema_out = Path(cfg["schema_out"]) if cfg["schema_out"] else out.with_suffix(
        out.suffix + ".schema.json"
    )
    _atomic_write_text(schema_out, schema_to_json(data.schema) + "\n")
    run.record_output(schema_out)
    if cfg["latent"]:
        latent_path = Path(cfg["latent"])
        latent_path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=latent_path.parent, suffix=".tmp")
        os.close(fd)
        latents.to_csv(tmp)
        os.replace(tmp, latent_path)
        run.record_output(latent_path)
        config_path = latent_path.with_suffix(latent_path.suffix + ".config.json")
        _atomic_write_text(config_path, config.to_json() + "\n")
        run.record_output(config_path)
    if cfg["split_train"] is not None:
        n_train = int(cfg["split_train"])
        if not 0 < n_train < config.n:
            raise InputError(f"--split-train must be in (0, {config.n})")
        train_rows = np.arange(n_train)
        test_rows = np.arange(n_train, config.n)
        stem = out.with_suffix("")
        for tag, rows in (("train", train_rows), ("test", test_rows)):
            part = Path(f"{stem}.{tag}{out.suffix}")
            _atomic_write_csv_dataset(part, data.take(rows))
            run.record_output(part)
            if cfg["latent"]:
                latent_part = Path(f"{Path(cfg['latent']).with_suffix('')}.{tag}.csv")
                fd, tmp = tempfile.mkstemp(dir=latent_part.parent, suffix=".tmp")
                os.close(fd)
                latents.take(rows).to_csv(tmp)
                os.replace(tmp, latent_part)
                run.record_output(latent_part)
    return run


def _cmd_train(cfg: dict) -> _Run:
    _require(cfg, "data", "base", "model")
    run = _Run("train", cfg)
    schema = _load_schema_for(cfg)
    run.record_input(cfg["data"])
    if cfg["schema"]:
        run.record_input(cfg["schema"])
    data = load_csv(cfg["data"], schema)
    base_values = cfg["base"] if isinstance(cfg["base"], dict) else _parse_base(cfg["base"])
    base = BaseCase(base_values)
    learner = _learner_from_config(cfg)
    model = train(
        data,
        learner_nuisance=learner,
        learner_final=learner,
        k=int(cfg["folds"]),
        base=base,
        seed=int(cfg["seed"]),
        small_group_threshold=int(cfg["warn_small_groups"]),
    )
    model_path = Path(cfg["model"])
    model_path.parent.mkdir(parents=True, exist_ok=True)
    model.save(model_path)
    run.record_output(model_path)
    if cfg["unaware_model"]:
        unaware = train_unaware(data, learner, seed=int(cfg["seed"]))
        unaware_path = Path(cfg["unaware_model"])
        unaware_path.parent.mkdir(parents=True, exist_ok=True)
        unaware.save(unaware_path)
        run.record_output(unaware_path)
    return run


def _cmd_predict(cfg: dict) -> _Run:
    _require(cfg, "model", "data", "out")
    run = _Run("predict", cfg)
    run.record_input(cfg["model"])
    run.record_input(cfg["data"])
    model = DmlFairModel.load(cfg["model"])
    data = load_csv(cfg["data"], model.schema)
    preds = model.predict(data, relative=bool(cfg["relative"]))
    if cfg["rule"] != RULE_NONE:
        if cfg["rule"] != RULE_MAX_FLOOR:
            raise InputError(
                f"rule {cfg['rule']!r} is not available from the CLI; use the API "
                "for group-specific base cases"
            )
        if not cfg["unaware_model"]:
            raise InputError("--rule max_floor requires --unaware-model")
        run.record_input(cfg["unaware_model"])
        unaware = UnawareModel.load(cfg["unaware_model"])
        rule = DecisionRule(RULE_MAX_FLOOR, higher_is_better=not cfg["lower_is_better"])
        preds = apply_decision_rule(rule, preds, unaware.predict(data))
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["row", "prediction"])
    for i, value in enumerate(preds):
        writer.writerow([i, repr(float(value))])
    out = Path(cfg["out"])
    _atomic_write_text(out, buf.getvalue())
    run.record_output(out)
    return run


def _cmd_evaluate(cfg: dict) -> _Run:
    _require(cfg, "model", "data", "report")
    run = _Run("evaluate", cfg)
    for key in ("model", "data", "unaware_model", "latent", "sim_config"):
        run.record_input(cfg.get(key))
    model = DmlFairModel.load(cfg["model"])
    data = load_csv(cfg["data"], model.schema)
    preds = {"dmlfair": model.predict(data)}
    if cfg["unaware_model"]:
        unaware = UnawareModel.load(cfg["unaware_model"])
        preds["unaware"] = unaware.predict(data)

    report: dict = {
        "n_rows": data.n_rows,
        "models": {name: True for name in preds},
        "prediction_summary": {
            name: {
                "mean": float(p.mean()),
                "sd": float(np.std(p, ddof=1)) if p.shape[0] > 1 else 0.0,
            }
            for name, p in preds.items()
        },
    }

    sensitive_cats = [
        c for c in model.schema.by_role(ColumnRole.SENSITIVE) if c.kind == CATEGORICAL
    ]
    stats_block: dict = {}
    for name, p in preds.items():
        per_column = {}
        for col in sensitive_cats:
            stats = group_stats(p, data.labels(col.name), level_order=col.levels)
            per_column[col.name] = [
                {"group": s.group, "count": s.count, "mean": s.mean,
                 "half_width": s.half_width}
                for s in stats
            ]
        stats_block[name] = per_column
    report["group_stats"] = stats_block

    if cfg["bootstrap"] is not None:
        b = int(cfg["bootstrap"])
        ci_block = {}
        for name, p in preds.items():
            lo, hi = bootstrap_ci(lambda v: float(v.mean()), p, b, seed=int(cfg["seed"]))
            ci_block[name] = {"mean_lo": lo, "mean_hi": hi, "resamples": b}
        report["bootstrap_mean_ci"] = ci_block

    plots_dir = Path(cfg["plots"]) if cfg["plots"] else None
    if plots_dir:
        plots_dir.mkdir(parents=True, exist_ok=True)

    if cfg["latent"]:
        sim_config_path = cfg["sim_config"] or str(
            Path(cfg["latent"]).with_suffix(Path(cfg["latent"]).suffix + ".config.json")
        )
        sim_config = SimConfig.from_json(Path(sim_config_path).read_text(encoding="utf-8"))
        latents = LatentTable.from_csv(cfg["latent"], sim_config)
        if latents.n != data.n_rows:
            raise InputError(
                f"latent table has {latents.n} rows, data has {data.n_rows}"
            )
        cf_data = counterfactual_copy(latents, cfg["cf_gender"], cfg["cf_race"])
        cf_preds = {"dmlfair": model.predict(cf_data)}
        if cfg["unaware_model"]:
            cf_preds["unaware"] = unaware.predict(cf_data)
        subgroups = cfg["subgroup"] or []
        if isinstance(subgroups, str):
            subgroups = [subgroups]
        cf_block: dict = {}
        for expr in subgroups:
            mask = subgroup_mask(data, expr)
            per_model = {}
            series = {}
            for name in preds:
                rep = cf_error(preds[name], cf_preds[name], mask, name=expr)
                per_model[name] = {"mean": rep.mean, "sd": rep.sd, "count": rep.count}
                series[name] = rep.errors
            cf_block[expr] = per_model
            if plots_dir:
                safe = "".join(ch if ch.isalnum() else "_" for ch in expr)
                write_histogram_csv(plots_dir / f"cf_error_{safe}.csv", series,
                                    int(cfg["bins"]))
                write_svg_histogram(plots_dir / f"cf_error_{safe}.svg", series,
                                    int(cfg["bins"]), f"counterfactual error: {expr}")
                run.record_output(plots_dir / f"cf_error_{safe}.csv")
                run.record_output(plots_dir / f"cf_error_{safe}.svg")
        report["cf_error"] = cf_block

    if plots_dir:
        for col in sensitive_cats:
            labels = data.labels(col.name)
            for name, p in preds.items():
                series = {
                    level: p[labels == level]
                    for level in col.levels
                    if (labels == level).any()
                }
                write_histogram_csv(
                    plots_dir / f"pred_{col.name}_{name}.csv", series, int(cfg["bins"])
                )
                write_svg_histogram(
                    plots_dir / f"pred_{col.name}_{name}.svg", series, int(cfg["bins"]),
                    f"{name} predictions by {col.name}",
                )
                run.record_output(plots_dir / f"pred_{col.name}_{name}.csv")
                run.record_output(plots_dir / f"pred_{col.name}_{name}.svg")

    report_path = Path(cfg["report"])
    _atomic_write_text(report_path, _json_dumps(report))
    run.record_output(report_path)
    return run


def _cmd_explain(cfg: dict) -> _Run:
    _require(cfg, "model", "unaware_model", "data", "group_col", "out")
    run = _Run("explain", cfg)
    run.record_input(cfg["model"])
    run.record_input(cfg["unaware_model"])
    run.record_input(cfg["data"])
    model = DmlFairModel.load(cfg["model"])
    unaware = UnawareModel.load(cfg["unaware_model"])
    data = load_csv(cfg["data"], model.schema)
    delta = unaware.predict(data) - model.predict(data)
    col = model.schema.column(cfg["group_col"])
    if col.kind != CATEGORICAL:
        raise InputError(f"--group-col must name a categorical column, got {col.kind}")
    levels = _split_list(cfg["levels"]) or col.levels
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = data.labels(col.name)
    for level in levels:
        if level not in col.levels:
            raise InputError(f"{level!r} is not a level of {col.name!r}")
        mask = labels == level
        if not mask.any():
            continue
        tree = adjustment_tree(
            data, delta, mask, max_depth=int(cfg["max_depth"]),
            min_leaf=int(cfg["min_leaf"]),
        )
        text_path = out_dir / f"{col.name}_{level}.txt"
        json_path = out_dir / f"{col.name}_{level}.json"
        _atomic_write_text(text_path, tree.render() + "\n")
        _atomic_write_text(json_path, _json_dumps(tree.to_dict()))
        run.record_output(text_path)
        run.record_output(json_path)
    return run


_HANDLERS = {
    "simulate": _cmd_simulate,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "explain": _cmd_explain,
}


# ---------------------------------------------------------------------------
# argument parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmlfair",
        description="Fair regression by partialling sensitive attributes out of "
        "predictors and outcomes, with simulation-based counterfactual evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"dmlfair {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file (or a previous run manifest); "
                                        "explicit flags override it")
        p.add_argument("--threads", type=int, help="worker thread count (never changes results)")
        p.add_argument("--manifest", help="manifest output path "
                                          "(default: alongside the primary output)")

    p = sub.add_parser("simulate", help="generate the hiring simulation dataset")
    add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="dataset CSV path (schema sidecar written next to it)")
    p.add_argument("--latent", help="latent-table CSV path (enables counterfactual evaluation)")
    p.add_argument("--schema-out", dest="schema_out")
    p.add_argument("--rating-scale-all", dest="rating_scale_all",
                   action=argparse.BooleanOptionalAction,
                   help="scale the entire rating equation by 3.1 instead of only the age term")
    p.add_argument("--split-train", dest="split_train", type=int,
                   help="also write <out>.train/.test splits with the first N rows training")

    p = sub.add_parser("train", help="train the fair model (and optionally the unaware baseline)")
    add_common(p)
    p.add_argument("--data")
    p.add_argument("--schema", help="schema sidecar JSON (default: <data>.schema.json)")
    p.add_argument("--sensitive", help="comma-separated sensitive columns (role override)")
    p.add_argument("--outcome", help="outcome column (role override)")
    p.add_argument("--identifier", help="comma-separated identifier columns")
    p.add_argument("--learner", choices=["forest", "tree", "linear", "ridge"])
    p.add_argument("--trees", type=int)
    p.add_argument("--mtry", type=int)
    p.add_argument("--min-leaf", dest="min_leaf", type=int)
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--folds", type=int)
    p.add_argument("--base", help="base case, e.g. age=18,gender=male,race=white")
    p.add_argument("--seed", type=int)
    p.add_argument("--model", help="output model file")
    p.add_argument("--unaware-model", dest="unaware_model",
                   help="also fit and save the drop-sensitive-columns baseline")
    p.add_argument("--warn-small-groups", dest="warn_small_groups", type=int,
                   help="warn for sensitive levels with fewer rows than this")

    p = sub.add_parser("predict", help="score a dataset with a trained model")
    add_common(p)
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--out", help="predictions CSV path")
    p.add_argument("--relative", action=argparse.BooleanOptionalAction,
                   help="skip the base-case recentering offset")
    p.add_argument("--rule", choices=["none", "max_floor"])
    p.add_argument("--unaware-model", dest="unaware_model")
    p.add_argument("--lower-is-better", dest="lower_is_better",
                   action=argparse.BooleanOptionalAction)

    p = sub.add_parser("evaluate", help="group statistics and counterfactual-error reports")
    add_common(p)
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--unaware-model", dest="unaware_model")
    p.add_argument("--latent", help="latent CSV aligned with --data rows")
    p.add_argument("--sim-config", dest="sim_config",
                   help="simulation config JSON (default: <latent>.config.json)")
    p.add_argument("--cf-gender", dest="cf_gender", help="counterfactual gender level")
    p.add_argument("--cf-race", dest="cf_race", help="counterfactual race level")
    p.add_argument("--subgroup", action="append",
                   help="subgroup expression over sensitive columns, e.g. "
                        "'race!=white&gender!=male'; repeatable; & binds tighter than |")
    p.add_argument("--report", help="report JSON path")
    p.add_argument("--plots", help="directory for histogram CSV/SVG emission")
    p.add_argument("--bins", type=int)
    p.add_argument("--bootstrap", type=int, help="resamples for bootstrap mean CIs")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("explain", help="surrogate trees over who the adjustment helps or harms")
    add_common(p)
    p.add_argument("--model")
    p.add_argument("--unaware-model", dest="unaware_model")
    p.add_argument("--data")
    p.add_argument("--group-col", dest="group_col")
    p.add_argument("--levels", help="comma-separated levels (default: all)")
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--min-leaf", dest="min_leaf", type=int)
    p.add_argument("--out", help="output directory")

    return parser


def _default_manifest_path(sub: str, cfg: dict) -> Path:
    primary = {
        "simulate": "out", "train": "model", "predict": "out",
        "evaluate": "report", "explain": "out",
    }[sub]
    base = Path(cfg[primary])
    if base.suffix:
        return base.with_suffix(base.suffix + ".manifest.json")
    return base / "manifest.json"


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args.subcommand, args)
        _set_threads(cfg.get("threads"))
        run = _HANDLERS[args.subcommand](cfg)
        manifest_path = (
            Path(cfg["manifest"]) if cfg.get("manifest")
            else _default_manifest_path(args.subcommand, cfg)
        )
        run.write_manifest(manifest_path)
        return 0
    except SchemaMismatchError as exc:  # includes ParseError
        print(f"dmlfair: schema error: {exc}", file=sys.stderr)
        return 3
    except (SingularityError, FloatingPointError) as exc:
        print(f"dmlfair: numeric failure: {exc}", file=sys.stderr)
        return 4
    except (InputError, OSError, json.JSONDecodeError) as exc:
        print(f"dmlfair: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
