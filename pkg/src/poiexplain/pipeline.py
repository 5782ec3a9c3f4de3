"""Stage orchestration with file-based resumability.

A run directory holds ``config.yaml`` (provenance), ``manifest.json`` (stage
status and timings) and each stage's outputs.  A stage marked done is skipped
on rerun unless ``force`` is set.
"""
from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import pandas as pd
import yaml

from . import report as rep
from .config import dump_config, validate_data_paths
from .data import (CANONICAL_COLUMNS, VenueCatalog, build_matrix, detect_homes, in_bbox, parse_canonical_csv,
                   parse_tist2015, preprocess, write_canonical_csv)
from .explain import eliminate_collinear, normalize_frame, regress_all
from .features import EV_NAMES, compute_all
from .metrics import METRICS, evaluate, exclusion_filter, select_best
from .recommenders import derive_seed, expand_grid, fit_model, hyperkey, recommend_all
from .subsample import generate_grid, load_split, materialize, save_subsample, top_venue_share

_logger = logging.getLogger(__name__)

STAGES = ("ingest", "subsample", "featurize", "recommend", "evaluate", "exclude", "eliminate", "regress", "report")
FLOAT_FORMAT = "%.10g"


class StageError(RuntimeError):
    pass


def _write_csv(frame: pd.DataFrame, path: Path, index: bool = False) -> None:
    frame.to_csv(path, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")


def _write_json(obj: Any, path: Path) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


class RunManifest:
    """Per-stage status, wall clock, subsample keys and the degenerate-skip list."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.data: dict[str, Any] = {"stages": {}, "subsamples": [], "degenerate": []}
        if self.path.exists():
            self.data.update(json.loads(self.path.read_text()))

    def done(self, stage: str) -> bool:
        return self.data["stages"].get(stage, {}).get("status") == "done"

    def mark(self, stage: str, status: str, seconds: float | None = None) -> None:
        entry = {"status": status}
        if seconds is not None:
            entry["seconds"] = round(seconds, 3)
        self.data["stages"][stage] = entry
        self.save()

    def reset(self) -> None:
        self.data = {"stages": {}, "subsamples": [], "degenerate": []}
        self.save()

    def save(self) -> None:
        _write_json(self.data, self.path)


# ---------------------------------------------------------------------------
# stage bodies (module level so worker processes can import them)


def load_checkins(cfg: dict) -> pd.DataFrame:
    """Global cleaned check-ins with city labels; venues in the bbox carry the target city."""
    data = cfg["data"]
    if data.get("format", "canonical") == "tist2015":
        frame = parse_tist2015(data["checkins"], data["pois"], None, cfg["target_city"], data.get("cities"))
        inside = in_bbox(frame["lat"].to_numpy(), frame["lon"].to_numpy(), cfg["bbox"])
        frame.loc[inside, "city"] = cfg["target_city"]
    elif data.get("format", "canonical") == "canonical":
        frame = parse_canonical_csv(data["checkins"])
    else:
        raise ValueError(f"unknown data format {data.get('format')!r}")
    return preprocess(frame, cfg["residence_category_names"])


def _load_subsample(sub_dir: Path):
    train_frame, test_frame = load_split(sub_dir)
    train = build_matrix(train_frame)
    catalog = VenueCatalog.from_checkins(train_frame)
    test: dict[str, set[str]] = {}
    for u, v in zip(test_frame["user_id"], test_frame["venue_id"]):
        test.setdefault(u, set()).add(v)
    return train, catalog, test


def recommend_job(run_dir: str, key: str, model: str, grid: dict, seed: int, depth: int,
                  force: bool) -> list[tuple[str, str]]:
    """Train every configuration of ``model`` on one subsample and write top-``depth`` lists."""
    run = Path(run_dir)
    out_dir = run / "recs" / key / model
    out_dir.mkdir(parents=True, exist_ok=True)
    pending = [(p, hyperkey(p)) for p in expand_grid(grid)]
    if not force:
        pending = [(p, h) for p, h in pending if not (out_dir / f"{h}.csv").exists()]
    status = []
    if not pending:
        return status
    train, catalog, test = _load_subsample(run / "subsamples" / key)
    users = sorted(u for u, items in test.items() if items)
    for params, hk in pending:
        try:
            fitted = fit_model(model, train, catalog, params, seed=derive_seed(seed, key, model, hk))
            recs = recommend_all(fitted, depth, users)
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            _logger.warning("%s %s %s failed: %s", key, model, hk, exc)
            status.append((hk, f"failed: {exc}"))
            continue
        rows = [(u, rank, v, s) for u in users for rank, (v, s) in enumerate(recs.get(u, []), start=1)]
        frame = pd.DataFrame(rows, columns=["user_id", "rank", "venue_id", "score"])
        _write_csv(frame, out_dir / f"{hk}.csv")
        status.append((hk, "ok"))
    return status


# ---------------------------------------------------------------------------
# orchestrator


class Pipeline:
    def __init__(self, cfg: dict, out: str | os.PathLike | None = None, force: bool = False,
                 jobs: int | None = None):
        self.cfg = cfg
        self.run_dir = Path(out or cfg["out"])
        self.force = force
        self.jobs = max(1, int(jobs or cfg.get("jobs", 1)))
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(self.run_dir / "manifest.json")
        self._check_provenance()

    def _check_provenance(self) -> None:
        path = self.run_dir / "config.yaml"
        comparable = {k: v for k, v in self.cfg.items() if k not in ("out", "jobs")}
        if path.exists():
            old = yaml.safe_load(path.read_text()) or {}
            old = {k: v for k, v in old.items() if k not in ("out", "jobs")}
            if old != comparable and self.manifest.data["stages"]:
                _logger.warning("config changed since the last run in %s; recomputing all stages", self.run_dir)
                self.manifest.reset()
        dump_config(self.cfg, path)

    # -- driver --------------------------------------------------------------

    def run(self, stages: Sequence[str] = STAGES) -> None:
        bodies: dict[str, Callable[[], None]] = {s: getattr(self, f"stage_{s}") for s in STAGES}
        for stage in stages:
            if stage not in bodies:
                raise ValueError(f"unknown stage {stage!r}")
            prior = STAGES[:STAGES.index(stage)]
            missing = [s for s in prior if not self.manifest.done(s) and s not in stages]
            if missing:
                raise StageError(f"stage {stage!r} needs {missing[-1]!r} to be completed first")
            if self.manifest.done(stage) and not self.force:
                _logger.info("stage %s already done; skipped", stage)
                continue
            _logger.info("stage %s: start", stage)
            self.manifest.mark(stage, "running")
            t0 = time.perf_counter()
            try:
                bodies[stage]()
            except Exception:
                self.manifest.mark(stage, "failed", time.perf_counter() - t0)
                raise
            self.manifest.mark(stage, "done", time.perf_counter() - t0)
            _logger.info("stage %s: done in %.1fs", stage, time.perf_counter() - t0)

    def path(self, *parts: str) -> Path:
        return self.run_dir.joinpath(*parts)

    def _keys(self) -> list[str]:
        return [k for k in self.manifest.data["subsamples"] if k not in set(self.manifest.data["degenerate"])]

    def _metric_names(self) -> list[str]:
        return [f"{m}@{k}" for k in self.cfg["cutoffs"] for m in METRICS]

    # -- stages --------------------------------------------------------------

    def stage_ingest(self) -> None:
        validate_data_paths(self.cfg)
        global_frame = load_checkins(self.cfg)
        labels = detect_homes(global_frame, self.cfg["target_city"], self.cfg["target_country"])
        target = global_frame.loc[in_bbox(global_frame["lat"].to_numpy(), global_frame["lon"].to_numpy(),
                                          self.cfg["bbox"])]
        if target.empty:
            raise StageError("no check-ins inside the configured bounding box")
        out = self.path("ingest")
        out.mkdir(exist_ok=True)
        write_canonical_csv(target, out / "checkins.csv")
        _write_csv(labels, out / "home_labels.csv")
        summary = {
            "users": int(target["user_id"].nunique()),
            "venues": int(target["venue_id"].nunique()),
            "checkins": int(len(target)),
            "global_checkins": int(len(global_frame)),
            "top1pct_share": top_venue_share(target, 0.01),
            "top2pct_share": top_venue_share(target, 0.02),
            "origin_counts": labels["origin_class"].value_counts().sort_index().to_dict(),
        }
        _write_json(summary, out / "summary.json")

    def stage_subsample(self) -> None:
        checkins = parse_canonical_csv(self.path("ingest", "checkins.csv"))
        labels = pd.read_csv(self.path("ingest", "home_labels.csv"), dtype=str, keep_default_na=False)
        catalog = VenueCatalog.from_checkins(checkins)
        out = self.path("subsamples")
        out.mkdir(exist_ok=True)
        bins = int(self.cfg["heatmap_bins"])
        rows, keys, degenerate = [], [], []
        for spec in generate_grid(self.cfg["grids"]):
            sub = materialize(spec, checkins, labels, self.cfg["train_fraction"])
            sub_dir = save_subsample(sub, out, catalog)
            raw = sub.full.to_frame()
            coords = catalog.coords(raw["venue_id"]) if len(raw) else np.zeros((0, 2))
            _write_csv(rep.density_grid(coords[:, 0], coords[:, 1], self.cfg["bbox"], bins), sub_dir / "heatmap.csv")
            keys.append(spec.key)
            if sub.degenerate:
                degenerate.append(spec.key)
            rows.append({"subsample": spec.key, "origin": spec.origin, "season": spec.season, "k_core": spec.k_core,
                         "drop_top_pct": spec.drop_top_pct, "degenerate": sub.degenerate, **sub.counts()})
        _write_csv(pd.DataFrame(rows), out / "index.csv")
        self.manifest.data["subsamples"] = keys
        self.manifest.data["degenerate"] = degenerate
        self.manifest.save()
        _logger.info("%d subsamples, %d degenerate", len(keys), len(degenerate))

    def stage_featurize(self) -> None:
        center = (self.cfg["city_center_lat"], self.cfg["city_center_lon"])
        rows = {}
        for key in self._keys():
            train, catalog, _ = _load_subsample(self.path("subsamples", key))
            rows[key] = compute_all(train, catalog, center)
        evs = pd.DataFrame.from_dict(rows, orient="index", columns=list(EV_NAMES))
        evs.index.name = "subsample"
        _write_csv(evs, self.path("evs.csv"), index=True)
        # published EV listings label both ev14 and ev15 as StLT; ev14 is taken to be the long-tail median
        _logger.info("%d EVs per subsample; ev14 is MedLT (some EV listings label it StLT)", len(EV_NAMES))

    def stage_recommend(self) -> None:
        depth = max(self.cfg["cutoffs"])
        grids = self.cfg["hypergrids"]
        tasks = [(str(self.run_dir), key, model, grids.get(model, {}), int(self.cfg["seed"]), depth, self.force)
                 for key in self._keys() for model in self.cfg["models"]]
        if self.jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                results = list(pool.map(recommend_job, *zip(*tasks)))
        else:
            results = [recommend_job(*t) for t in tasks]
        failures = [(t[1], t[2], h, s) for t, res in zip(tasks, results) for h, s in res if s != "ok"]
        if failures:
            _logger.warning("%d model configurations failed", len(failures))

    def stage_evaluate(self) -> None:
        cutoffs = list(self.cfg["cutoffs"])
        all_rows, best_rows = [], []
        for key in self._keys():
            train, _, test = _load_subsample(self.path("subsamples", key))
            n_users = sum(1 for v in test.values() if v)
            for model in self.cfg["models"]:
                configs = []
                for params in expand_grid(self.cfg["hypergrids"].get(model, {})):
                    hk = hyperkey(params)
                    path = self.path("recs", key, model, f"{hk}.csv")
                    if not path.exists():
                        continue
                    frame = pd.read_csv(path, dtype={"user_id": str, "venue_id": str})
                    recs: dict[str, list[str]] = {}
                    for u, v in zip(frame["user_id"], frame["venue_id"]):
                        recs.setdefault(u, []).append(v)
                    metrics = evaluate(recs, test, train, cutoffs)
                    configs.append((params, metrics))
                    all_rows.append({"subsample": key, "model": model, "hyperparams": hk, **metrics,
                                     "n_users": n_users})
                best = select_best(configs)
                if best < 0:
                    _logger.warning("%s %s: no evaluable configuration", key, model)
                    continue
                params, metrics = configs[best]
                best_rows.append({"subsample": key, "model": model, "hyperparams": hyperkey(params), **metrics,
                                  "n_users": n_users})
        cols = ["subsample", "model", "hyperparams", *self._metric_names(), "n_users"]
        _write_csv(pd.DataFrame(all_rows, columns=cols), self.path("metrics_all.csv"))
        _write_csv(pd.DataFrame(best_rows, columns=cols), self.path("metrics.csv"))

    def stage_exclude(self) -> None:
        metrics = pd.read_csv(self.path("metrics.csv"))
        means = metrics.groupby("model", sort=False)["ndcg@5"].mean().to_dict()
        if "Pop" in means:
            retained = exclusion_filter(means)
        else:
            _logger.warning("Pop baseline not in the run; no model excluded")
            retained = list(means)
        order = [m for m in self.cfg["models"] if m in retained]
        _write_json({"baseline": "Pop", "mean_ndcg@5": means, "retained": order,
                     "excluded": [m for m in self.cfg["models"] if m in means and m not in retained]},
                    self.path("retained_models.json"))

    def _normalized_evs(self) -> pd.DataFrame:
        evs = pd.read_csv(self.path("evs.csv"), index_col="subsample")
        normalized, _ = normalize_frame(evs)
        return normalized

    def stage_eliminate(self) -> None:
        normalized = self._normalized_evs()
        vif = eliminate_collinear(normalized, float(self.cfg["vif_threshold"]))
        frame = vif.frame()
        evs = pd.read_csv(self.path("evs.csv"), index_col="subsample")
        constant = [c for c in evs.columns if c not in normalized.columns]
        if constant:
            frame = pd.concat([frame, pd.DataFrame({"ev": constant, "vif_before": np.nan, "vif_after": np.nan,
                                                    "retained": False})], ignore_index=True)
        _write_csv(frame, self.path("vif_report.csv"))
        _logger.info("retained EVs at VIF %.3g: %s", vif.threshold, ", ".join(vif.retained))

    def stage_regress(self) -> None:
        normalized = self._normalized_evs()
        vif = pd.read_csv(self.path("vif_report.csv"))
        retained_evs = vif.loc[vif["retained"].astype(bool), "ev"].tolist()
        models = json.loads(self.path("retained_models.json").read_text())["retained"]
        metrics = pd.read_csv(self.path("metrics.csv"))
        fits = regress_all(normalized[retained_evs], metrics, models, self.cfg["cutoffs"])
        summary = []
        for fit in fits:
            _write_csv(fit.table(), self.path(f"regression_{fit.model}_{fit.target}.csv"))
            summary.append({"model": fit.model, "target": fit.target, "n": fit.n, "dof": fit.dof,
                            "r2": fit.r2, "adj_r2": fit.adj_r2})
        _write_csv(pd.DataFrame(summary, columns=["model", "target", "n", "dof", "r2", "adj_r2"]),
                   self.path("model_summary.csv"))

    def stage_report(self) -> None:
        write_report(self.run_dir, self.cfg)


def write_report(run_dir: str | os.PathLike, cfg: dict | None = None) -> Path:
    """Markdown tables, SVG coefficient plots and heat-map grids under ``<run>/report``."""
    run = Path(run_dir)
    cfg = cfg or yaml.safe_load((run / "config.yaml").read_text())
    summary_path = run / "model_summary.csv"
    summary = pd.read_csv(summary_path) if summary_path.exists() else pd.DataFrame()
    if summary.empty:
        raise StageError(f"no regression results in {run}")
    out = run / "report"
    out.mkdir(exist_ok=True)

    metrics = pd.read_csv(run / "metrics.csv")
    parts = ["# Results\n"]
    for k in cfg["cutoffs"]:
        table = rep.metric_summary(metrics, k)
        _write_csv(table, out / f"metric_summary@{k}.csv", index=True)
        parts += [f"## Metrics @{k} across subsamples\n", rep.markdown_table(table)]

    vif = pd.read_csv(run / "vif_report.csv").set_index("ev")
    parts += ["## Variance inflation before and after elimination\n", rep.markdown_table(vif)]

    for target in summary["target"].unique():
        rows = summary.loc[summary["target"] == target]
        tables = {m: pd.read_csv(run / f"regression_{m}_{target}.csv") for m in rows["model"]}
        dofs = dict(zip(rows["model"], rows["dof"].astype(int)))
        coef = rep.coefficient_matrix(tables)
        r2 = pd.DataFrame([rows.set_index("model")["r2"].map(lambda v: f"{v:.3f}")], index=["R2"])
        coef = pd.concat([coef, r2])
        coef.index.name = "ev"
        _write_csv(coef, out / f"coefficients_{target}.csv", index=True)
        metric, _, k = target.partition("@")
        label = f"{rep.METRIC_LABELS.get(metric, metric)}@{k}"
        parts += [f"## Coefficients for {label}\n", rep.markdown_table(coef),
                  f"\n![{label}](coefficients_{target}.svg)\n"]
        rep.coefficient_plot(tables, dofs, out / f"coefficients_{target}.svg", title=label)
    parts.append("\nSignificance: *** p<0.001, ** p<0.01, * p<0.05\n")
    (out / "report.md").write_text("\n".join(parts))

    # per-subsample density grids, plus a figure of the full data per origin class
    heat_dir = out / "heatmaps"
    heat_dir.mkdir(exist_ok=True)
    for grid in sorted((run / "subsamples").glob("*/heatmap.csv")):
        (heat_dir / f"{grid.parent.name}.csv").write_bytes(grid.read_bytes())
    checkins_path = run / "ingest" / "checkins.csv"
    if checkins_path.exists():
        checkins = parse_canonical_csv(checkins_path, CANONICAL_COLUMNS)
        labels = pd.read_csv(run / "ingest" / "home_labels.csv", dtype=str, keep_default_na=False)
        origin = checkins["user_id"].map(dict(zip(labels["user_id"], labels["origin_class"])))
        grids = {}
        for name in ("NYC", "US", "OTHER"):
            part = checkins.loc[(origin == name).to_numpy()]
            if len(part):
                grids[name] = rep.density_grid(part["lat"], part["lon"], cfg["bbox"], int(cfg["heatmap_bins"]))
        if grids:
            rep.heatmap_figure(grids, out / "heatmap_origins.svg")
    return out
