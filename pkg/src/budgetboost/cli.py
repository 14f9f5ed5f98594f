"""Command-line surface: generate / train / infer / profile / eval.

Configuration comes from a JSON file (``--config``), overridable by
environment variables with the ``BUDGETBOOST_`` prefix
(e.g. BUDGETBOOST_TRAIN_ITERATIONS=5) and then by command-line flags.
Unknown config keys are rejected.

Exit codes: 0 success, 2 I/O error, 3 config/data mismatch, 4 invalid
argument.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import io as bbio
from .boosting import TrainConfig, train
from .features import default_feature_groups
from .runtime import evaluate, infer, profile_corpus
from .scenes import SyntheticSceneConfig, generate_scene

EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_ARGUMENT = 4

DEFAULT_CONFIG = {
    "scene": {
        "width": 64, "height": 64, "num_classes": 5, "num_shapes": 4,
        "noise_level": 0.2, "hierarchy_levels": 4,
    },
    "generate": {"count": 10, "seed": 0, "out": "data"},
    "train": {
        "dataset": "data", "out": "run", "iterations": 20,
        "thresholds": [0.1, 0.3, 0.5, 0.8, 1.2], "depths": [0, 1, 2, 3, 4],
        "lambda0": 0.01, "lambdas": None, "folds": 10,
        "selector_cost": 1.0, "prediction_cost": 1.0, "alpha_max": 10.0,
        "line_search_tol": 1e-4, "min_improvement": 1e-9,
        "dict_size": 16, "dict_samples_per_instance": 64, "kmeans_iters": 25,
        "cost_table": None, "seed": 0,
    },
    "infer": {"model": "run/model.json", "dataset": "data",
              "budget": "unlimited", "out": "infer_out", "wallclock": False},
    "profile": {"model": "run/model.json", "dataset": "data",
                "budgets": [0.0, "unlimited"], "out": "profile.csv",
                "wallclock": False},
    "eval": {"model": "run/model.json", "dataset": "data",
             "budget": "unlimited", "out": "eval.csv"},
}


class ConfigError(ValueError):
    pass


def _merge_checked(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge_checked(base[key], val, where)
        else:
            out[key] = val
    return out


def _apply_env(cfg: dict, environ=os.environ) -> dict:
    for section, keys in cfg.items():
        if not isinstance(keys, dict):
            continue
        for key in keys:
            var = f"BUDGETBOOST_{section.upper()}_{key.upper()}"
            if var in environ:
                raw = environ[var]
                try:
                    cfg[section][key] = json.loads(raw)
                except json.JSONDecodeError:
                    cfg[section][key] = raw
    return cfg


def load_config(path=None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except OSError as e:
            raise e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}")
        if not isinstance(user, dict):
            raise ConfigError("config root must be an object")
        cfg = _merge_checked(cfg, user)
    return _apply_env(cfg)


def _parse_budget(raw):
    if raw is None or raw == "unlimited":
        return None
    budget = float(raw)
    if budget < 0:
        raise click.ClickException("budget must be nonnegative")
    return budget


def _config_hash(obj) -> str:
    return hashlib.sha256(bbio.dumps_canonical(obj).encode()).hexdigest()


def _load_dataset(dataset_dir):
    manifest_path = Path(dataset_dir) / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    instances = [bbio.load_instance(Path(dataset_dir) / f["name"])
                 for f in manifest["files"]]
    return instances, manifest


def _run(fn):
    """Execute a command body, mapping exceptions to the exit-code contract."""
    try:
        fn()
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except ValueError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except OSError as e:
        click.echo(f"I/O error: {e}", err=True)
        sys.exit(EXIT_IO)
    except click.ClickException as e:
        click.echo(f"invalid argument: {e.message}", err=True)
        sys.exit(EXIT_ARGUMENT)


@click.group()
def main():
    """Anytime structured scene labeling under inference cost budgets."""


_config_opt = click.option("--config", "config_path", type=click.Path(), default=None,
                           help="JSON config file (defaults built in).")
_seed_opt = click.option("--seed", type=int, default=None, help="Override the seed.")
_out_opt = click.option("--out", type=click.Path(), default=None,
                        help="Override the output path.")
_jobs_opt = click.option("--jobs", type=int, default=1,
                         help="Parallel workers for per-instance work.")


@main.command("generate")
@_config_opt
@_seed_opt
@_out_opt
def cmd_generate(config_path, seed, out):
    """Write a corpus of synthetic instances plus a manifest."""
    def body():
        cfg = load_config(config_path)
        gcfg = cfg["generate"]
        if seed is not None:
            gcfg["seed"] = seed
        out_dir = Path(out if out is not None else gcfg["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        scene = cfg["scene"]
        n = int(gcfg["count"])
        if n == 0:
            click.echo("warning: generating an empty corpus", err=True)
        files = []
        for i in range(n):
            rng_seed = int(np.random.SeedSequence([int(gcfg["seed"]), i]).generate_state(1)[0])
            inst = generate_scene(SyntheticSceneConfig(
                width=scene["width"], height=scene["height"],
                num_classes=scene["num_classes"], num_shapes=scene["num_shapes"],
                noise_level=scene["noise_level"],
                hierarchy_levels=scene["hierarchy_levels"], rng_seed=rng_seed,
            ))
            name = f"inst_{i:05d}.json"
            bbio.save_instance(inst, out_dir / name)
            digest = hashlib.sha256((out_dir / name).read_bytes()).hexdigest()
            files.append({"name": name, "sha256": digest})
        manifest = {
            "format": "budgetboost-manifest", "version": 1,
            "count": n, "seed": int(gcfg["seed"]),
            "scene": scene, "config_hash": _config_hash({"scene": scene, "generate": gcfg}),
            "files": files,
        }
        (out_dir / "manifest.json").write_text(bbio.dumps_canonical(manifest))
        click.echo(f"wrote {n} instances to {out_dir}")
    _run(body)


@main.command("train")
@_config_opt
@_seed_opt
@_out_opt
def cmd_train(config_path, seed, out):
    """Train a model on a generated corpus; write model + per-iteration log."""
    def body():
        cfg = load_config(config_path)
        tcfg = cfg["train"]
        if seed is not None:
            tcfg["seed"] = seed
        out_dir = Path(out if out is not None else tcfg["out"])
        instances, _ = _load_dataset(tcfg["dataset"])
        train_config = TrainConfig(
            iterations=int(tcfg["iterations"]),
            thresholds=tuple(tcfg["thresholds"]),
            depths=tuple(tcfg["depths"]),
            lambda0=float(tcfg["lambda0"]),
            lambdas=None if tcfg["lambdas"] is None else tuple(tcfg["lambdas"]),
            folds=int(tcfg["folds"]),
            selector_cost=float(tcfg["selector_cost"]),
            prediction_cost=float(tcfg["prediction_cost"]),
            alpha_max=float(tcfg["alpha_max"]),
            line_search_tol=float(tcfg["line_search_tol"]),
            min_improvement=float(tcfg["min_improvement"]),
            dict_size=int(tcfg["dict_size"]),
            dict_samples_per_instance=int(tcfg["dict_samples_per_instance"]),
            kmeans_iters=int(tcfg["kmeans_iters"]),
            seed=int(tcfg["seed"]),
        )
        cost_table = tcfg["cost_table"]
        groups = default_feature_groups(
            instances[0].num_classes,
            None if cost_table is None else {k: tuple(v) for k, v in cost_table.items()},
        )
        model = train(instances, train_config, groups=groups)
        rows = profile_corpus(model, instances, [None])
        model.metadata["config_hash"] = _config_hash(tcfg)
        model.metadata["final_train_metrics"] = rows[0]
        out_dir.mkdir(parents=True, exist_ok=True)
        bbio.save_model(model, out_dir / "model.json")
        with open(out_dir / "train_log.csv", "w") as fh:
            fh.write("iteration,selector,depth,lambda,alpha,delta_risk,stage_cost,ratio,risk\n")
            for r in model.metadata["log"]:
                fh.write(
                    f"{r['iteration']},{r['selector']},{r['depth']},{r['lam']},"
                    f"{r['alpha']},{r['delta_risk']},{r['stage_cost']},{r['ratio']},{r['risk']}\n"
                )
        click.echo(
            f"trained {len(model.stages)} stages ({model.metadata['termination']}); "
            f"train pixel acc {rows[0]['pixel_acc']:.4f}"
        )
    _run(body)


def _label_grid_text(scores, width, height) -> str:
    pred = np.asarray(scores).argmax(axis=1).reshape(height, width)
    return "\n".join(" ".join(str(v) for v in row) for row in pred) + "\n"


@main.command("infer")
@_config_opt
@_out_opt
@click.option("--budget", default=None, help="Cost budget (number or 'unlimited').")
def cmd_infer(config_path, out, budget):
    """Predicted label maps, per-stage selected-region masks, and ledgers."""
    def body():
        cfg = load_config(config_path)
        icfg = cfg["infer"]
        b = _parse_budget(budget if budget is not None else icfg["budget"])
        out_dir = Path(out if out is not None else icfg["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
        model = bbio.load_model(icfg["model"])
        instances, _ = _load_dataset(icfg["dataset"])
        for i, inst in enumerate(instances):
            t0 = time.perf_counter()
            sf, ledger, profile = infer(model, inst, b, record_masks=True)
            wall = time.perf_counter() - t0
            (out_dir / f"labels_{i:05d}.txt").write_text(
                _label_grid_text(sf.scores, inst.width, inst.height))
            mask_lines = []
            for t, mask in enumerate(profile.masks):
                mask_lines.append(f"stage {t}")
                grid = mask.reshape(inst.height, inst.width).astype(int)
                mask_lines.extend(" ".join(map(str, row)) for row in grid)
            (out_dir / f"masks_{i:05d}.txt").write_text("\n".join(mask_lines) + "\n")
            ledger_obj = {
                "total": ledger.total,
                "entries": ledger.entries,
                "checkpoints": profile.checkpoints,
            }
            if icfg["wallclock"]:
                ledger_obj["wall_clock_s"] = wall
            (out_dir / f"ledger_{i:05d}.json").write_text(
                bbio.dumps_canonical(bbio._jsonify(ledger_obj)))
        click.echo(f"inferred {len(instances)} instances to {out_dir}")
    _run(body)


@main.command("profile")
@_config_opt
@_out_opt
@_jobs_opt
def cmd_profile(config_path, out, jobs):
    """Accuracy-versus-budget curve over a corpus, as CSV."""
    def body():
        cfg = load_config(config_path)
        pcfg = cfg["profile"]
        out_path = Path(out if out is not None else pcfg["out"])
        model = bbio.load_model(pcfg["model"])
        instances, _ = _load_dataset(pcfg["dataset"])
        budgets = [_parse_budget(b) for b in pcfg["budgets"]]
        t0 = time.perf_counter()
        rows = profile_corpus(model, instances, budgets)
        wall = time.perf_counter() - t0
        with open(out_path, "w") as fh:
            header = "budget,pixel_acc,class_acc,risk"
            if pcfg["wallclock"]:
                header += ",wall_clock_s"
            fh.write(header + "\n")
            for r in rows:
                b = "unlimited" if r["budget"] is None else r["budget"]
                line = f"{b},{r['pixel_acc']},{r['class_acc']},{r['risk']}"
                if pcfg["wallclock"]:
                    line += f",{wall / len(rows)}"
                fh.write(line + "\n")
        click.echo(f"profiled {len(budgets)} budgets over {len(instances)} instances")
    _run(body)


@main.command("eval")
@_config_opt
@_out_opt
@click.option("--budget", default=None, help="Cost budget (number or 'unlimited').")
def cmd_eval(config_path, out, budget):
    """Per-class recall and pixel accuracy at one budget, as CSV."""
    def body():
        cfg = load_config(config_path)
        ecfg = cfg["eval"]
        b = _parse_budget(budget if budget is not None else ecfg["budget"])
        out_path = Path(out if out is not None else ecfg["out"])
        model = bbio.load_model(ecfg["model"])
        instances, _ = _load_dataset(ecfg["dataset"])
        per_class = {c: [] for c in range(model.num_classes)}
        accs, crecs, risks = [], [], []
        from .core import cross_entropy_risk
        for inst in instances:
            sf, _, _ = infer(model, inst, b)
            m = evaluate(sf, inst.labels)
            for c, r in m["per_class_recall"].items():
                per_class[c].append(r)
            accs.append(m["pixel_accuracy"])
            crecs.append(m["mean_class_recall"])
            risks.append(cross_entropy_risk(sf, inst.labels))
        with open(out_path, "w") as fh:
            fh.write("metric,value\n")
            for c in range(model.num_classes):
                if per_class[c]:
                    fh.write(f"class_{c}_recall,{float(np.mean(per_class[c]))}\n")
            fh.write(f"mean_class_recall,{float(np.mean(crecs))}\n")
            fh.write(f"pixel_accuracy,{float(np.mean(accs))}\n")
            fh.write(f"risk,{float(np.mean(risks))}\n")
        click.echo(f"evaluated {len(instances)} instances at budget "
                   f"{'unlimited' if b is None else b}")
    _run(body)


if __name__ == "__main__":
    main()
