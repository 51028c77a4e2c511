"""Command-line pipeline: simulate, changemask, dataset, train, despeckle, evaluate, quicklook.

Every subcommand reads one JSON manifest.  Relative paths inside a manifest
are resolved against the manifest's directory.  Each run also writes
``<output>.record.json`` with the manifest digest, seed and library versions.

Thread count for the BLAS pool comes from ``--threads`` or the
``POLSPECKLE_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import warnings
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .simulate import SCENE_SCHEMA, SCRIPT_SCHEMA

log = logging.getLogger("polspeckle")

THREADS_ENV = "POLSPECKLE_THREADS"

_SEED = {"type": "integer", "minimum": 0}
_PATH = {"type": "string", "minLength": 1}
_NORM = {
    "type": "object",
    "properties": {
        "x_min": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
        "x_max": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
    },
    "required": ["x_min", "x_max"],
    "additionalProperties": False,
}


def _obj(props: dict, required: list) -> dict:
    return {"type": "object", "properties": props, "required": required,
            "additionalProperties": False}


SCHEMAS = {
    "simulate": _obj({
        "seed": _SEED,
        "scene": SCENE_SCHEMA,
        "script": SCRIPT_SCHEMA,
        "output_dir": _PATH,
    }, ["seed", "scene", "output_dir"]),
    "changemask": _obj({
        "stack": _PATH,
        "window": {"type": "array", "items": {"type": "integer", "minimum": 1},
                   "minItems": 2, "maxItems": 2},
        "looks": {"type": "number", "exclusiveMinimum": 0},
        "correlation_factor": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "significance": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "output": _PATH,
        "probability": _PATH,
    }, ["stack", "output"]),
    "dataset": _obj({
        "seed": _SEED,
        "stacks": {"type": "array", "minItems": 1, "items": _obj(
            {"stack": _PATH, "mask": {"type": ["string", "null"]}}, ["stack"])},
        "count_per_stack": {"type": "integer", "minimum": 1},
        "patch": {"type": "integer", "minimum": 1},
        "max_change_ratio": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "lo_pct": {"type": "number", "minimum": 0, "maximum": 100},
        "hi_pct": {"type": "number", "minimum": 0, "maximum": 100},
        "output": _PATH,
    }, ["seed", "stacks", "count_per_stack", "output"]),
    "train": _obj({
        "seed": _SEED,
        "dataset": _PATH,
        "net": _obj({
            "depth": {"type": "integer", "minimum": 3},
            "width": {"type": "integer", "minimum": 1},
            "kernel": {"type": "integer", "minimum": 1},
            "bn_epsilon": {"type": "number", "exclusiveMinimum": 0},
            "bn_momentum": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        }, []),
        "train": _obj({
            "epochs": {"type": "integer", "minimum": 1},
            "batch_size": {"type": "integer", "minimum": 1},
            "lr0": {"type": "number", "exclusiveMinimum": 0},
            "lr_decay_every": {"type": "integer", "minimum": 1},
            "lr_decay_factor": {"type": "number", "exclusiveMinimum": 0},
            "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "adam_eps": {"type": "number", "exclusiveMinimum": 0},
            "validation_fraction": {"type": "number", "minimum": 0, "maximum": 0.5},
        }, []),
        "checkpoint": _PATH,
        "log": _PATH,
    }, ["seed", "dataset", "checkpoint", "log"]),
    "despeckle": _obj({
        "checkpoint": _PATH,
        "input": _PATH,
        "output": _PATH,
        "quicklook": _PATH,
        "tile": {"type": "integer", "minimum": 1},
        "overlap": {"type": "integer", "minimum": 0},
        "project_psd": {"type": "boolean"},
        "norm": _NORM,
    }, ["checkpoint", "input", "output"]),
    "evaluate": _obj({
        "original": _PATH,
        "filtered": _PATH,
        "reference": _PATH,
        "rois": {"type": "array", "minItems": 1, "items": _obj({
            "label": {"type": "string"},
            "row0": {"type": "integer"}, "col0": {"type": "integer"},
            "height": {"type": "integer"}, "width": {"type": "integer"},
        }, ["label", "row0", "col0", "height", "width"])},
        "ssim_window": {"type": "integer", "minimum": 1},
        "ssim_L": {"type": "number", "exclusiveMinimum": 0},
        "ssim_squared": {"type": "boolean"},
        "output": _PATH,
    }, ["original", "filtered", "rois", "output"]),
    "quicklook": _obj({"input": _PATH, "output": _PATH}, ["input", "output"]),
}


class ManifestError(ValueError):
    pass


def _json_path(path) -> str:
    out = "$"
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def validate_manifest(command: str, doc) -> None:
    """Raise :class:`ManifestError` listing every schema violation with its JSON path."""
    validator = jsonschema.Draft202012Validator(SCHEMAS[command])
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for e in errors:
            where = _json_path(e.absolute_path)
            if e.validator == "required":
                missing = [k for k in e.validator_value if k not in e.instance]
                where = ", ".join(_json_path(list(e.absolute_path) + [k]) for k in missing)
                lines.append(f"{where}: required key is missing")
            else:
                lines.append(f"{where}: {e.message}")
        raise ManifestError(f"invalid {command} manifest:\n  " + "\n  ".join(lines))


class Run:
    """Loaded manifest plus path resolution and the reproducibility record."""

    def __init__(self, command: str, path: str):
        self.command = command
        self.path = Path(path)
        try:
            self.raw = self.path.read_bytes()
            self.doc = json.loads(self.raw)
        except OSError as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from None
        validate_manifest(command, self.doc)
        self.base = self.path.resolve().parent

    def get(self, key, default=None):
        return self.doc.get(key, default)

    def file(self, key_or_value: str, from_doc: bool = True) -> Path:
        value = self.doc[key_or_value] if from_doc else key_or_value
        p = Path(value)
        return p if p.is_absolute() else self.base / p

    def write_record(self, primary: Path, outputs: list[Path]) -> Path:
        record = {
            "command": self.command,
            "manifest_sha256": hashlib.sha256(self.raw).hexdigest(),
            "seed": self.doc.get("seed"),
            "outputs": [str(p.name) for p in outputs],
            "versions": {
                "polspeckle": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
        }
        path = primary.with_name(primary.name + ".record.json")
        path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
        return path


# --- stack index files -------------------------------------------------------

def write_stack_index(path: Path, epochs: list[str], dates: list[str], **extra) -> None:
    doc = {"epochs": epochs, "dates": dates, **extra}
    path.write_text(json.dumps(doc, indent=2) + "\n")


def load_stack(path: Path):
    from .raster import RasterFormatError, TemporalStack, read_raster

    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read stack index {path}: {exc}") from None
    if not isinstance(doc, dict) or "epochs" not in doc:
        raise ManifestError(f"stack index {path} lists no epochs")
    epochs = []
    for name in doc["epochs"]:
        p = path.parent / name
        try:
            epochs.append(read_raster(p, kind="c2"))
        except (OSError, RasterFormatError) as exc:
            raise ManifestError(f"{p}: {exc}") from None
    return TemporalStack(epochs, doc.get("dates"))


def _read(path: Path, kind: str):
    from .raster import RasterFormatError, read_raster

    try:
        return read_raster(path, kind=kind)
    except (OSError, RasterFormatError) as exc:
        raise ManifestError(f"{path}: {exc}") from None


# --- subcommands -------------------------------------------------------------

def cmd_simulate(run: Run) -> list[Path]:
    from .raster import write_raster
    from .simulate import ChangeScript, scene_from_json, script_from_json, simulate_stack

    seed = run.get("seed")
    scene = scene_from_json(run.get("scene"))
    script = script_from_json(run.get("script")) if "script" in run.doc else ChangeScript(1)
    out = run.file("output_dir")
    out.mkdir(parents=True, exist_ok=True)
    stack, changed, truths = simulate_stack(scene, script, seed)
    names, tnames = [], []
    for i, (e, t) in enumerate(zip(stack.epochs, truths)):
        names.append(f"epoch_{i:03d}.psr")
        tnames.append(f"truth_{i:03d}.psr")
        write_raster(e, out / names[-1])
        write_raster(t, out / tnames[-1])
    write_raster(changed, out / "change_truth.psr")
    index = out / "stack.json"
    write_stack_index(index, names, stack.dates, truths=tnames, change_truth="change_truth.psr")
    print(f"simulated {len(stack)} epochs of {scene.height}x{scene.width} with seed {seed}")
    return [index] + [out / n for n in names + tnames] + [out / "change_truth.psr"]


def cmd_changemask(run: Run) -> list[Path]:
    from .omnibus import change_mask
    from .raster import write_raster

    stack = load_stack(run.file("stack"))
    win_az, win_rg = run.get("window", [4, 19])
    cm = change_mask(stack, win_az, win_rg, n=run.get("looks"),
                     significance=run.get("significance", 1e-10),
                     correlation_factor=run.get("correlation_factor", 1.0))
    out = run.file("output")
    write_raster(cm.mask, out)
    outputs = [out]
    if "probability" in run.doc:
        write_raster(cm.prob.astype(np.float64), run.file("probability"))
        outputs.append(run.file("probability"))
    print(f"changed fraction {cm.changed_fraction:.4f} ({cm.singular_count} singular pixels)")
    return outputs


def cmd_dataset(run: Run) -> list[Path]:
    from .dataset import compute_norm_stats, merge_datasets, sample_patches, write_dataset
    from .polsar import temporal_average, transform_raster

    entries = []
    for item in run.get("stacks"):
        stack = load_stack(run.file(item["stack"], from_doc=False))
        mask = item.get("mask")
        mask = _read(run.file(mask, from_doc=False), "mask") if mask else None
        entries.append((stack, mask))
    norm = compute_norm_stats(
        [transform_raster(e, check=False) for stack, _ in entries for e in stack.epochs],
        run.get("lo_pct", 0.0), run.get("hi_pct", 99.9),
    )
    parts = []
    for sid, (stack, mask) in enumerate(entries):
        parts.append(sample_patches(
            stack, temporal_average(stack), mask, norm, run.get("count_per_stack"),
            patch=run.get("patch", 64), max_change_ratio=run.get("max_change_ratio", 0.10),
            seed=run.get("seed"), stack_id=sid,
        ))
        print(f"stack {sid}: acceptance rate {parts[-1].acceptance_rate:.3f}")
    ds = merge_datasets(parts, metadata=hashlib.sha256(run.raw).hexdigest())
    out = run.file("output")
    write_dataset(ds, out)
    print(f"wrote {len(ds)} patch pairs")
    return [out]


def cmd_train(run: Run) -> list[Path]:
    from .dataset import DatasetError, read_dataset
    from .dncnn import NetConfig, TrainConfig, save_checkpoint, train, write_log

    try:
        ds = read_dataset(run.file("dataset"))
    except (OSError, DatasetError) as exc:
        raise ManifestError(f"{run.file('dataset')}: {exc}") from None
    net_cfg = NetConfig(**run.get("net", {}))
    train_cfg = TrainConfig(seed=run.get("seed"), **run.get("train", {}))
    model, history = train(ds, net_cfg, train_cfg,
                           on_epoch=lambda r: print(f"epoch {r.epoch}: train {r.train_loss:.5f} "
                                                    f"val {r.val_loss:.5f}", flush=True))
    ckpt, log_path = run.file("checkpoint"), run.file("log")
    save_checkpoint(model, ckpt)
    write_log(history, log_path)
    return [ckpt, log_path]


def cmd_despeckle(run: Run) -> list[Path]:
    from .dataset import NormStats
    from .dncnn import despeckle_raster, load_checkpoint
    from .dncnn.checkpoint import CheckpointError
    from .raster import export_quicklook, write_raster

    try:
        model = load_checkpoint(run.file("checkpoint"))
    except (OSError, CheckpointError) as exc:
        raise ManifestError(f"{run.file('checkpoint')}: {exc}") from None
    if model.norm is None:
        raise ManifestError(f"{run.file('checkpoint')}: checkpoint carries no normalisation")
    if "norm" in run.doc:
        given = NormStats(run.get("norm")["x_min"], run.get("norm")["x_max"])
        if given != model.norm:
            warnings.warn("manifest normalisation differs from the checkpoint's; "
                          "using the checkpoint statistics", UserWarning, stacklevel=2)
    c2 = _read(run.file("input"), "c2")
    out = despeckle_raster(c2, model, tile=run.get("tile", 256), overlap=run.get("overlap", 16),
                           project=run.get("project_psd", True))
    path = run.file("output")
    write_raster(out, path)
    outputs = [path]
    if "quicklook" in run.doc:
        export_quicklook(out, run.file("quicklook"))
        outputs.append(run.file("quicklook"))
    return outputs


def cmd_evaluate(run: Run) -> list[Path]:
    import csv

    from .metrics import RegionOfInterest, enl, epd_roa, span_ssim

    orig = _read(run.file("original"), "c2")
    filt = _read(run.file("filtered"), "c2")
    ref = _read(run.file("reference"), "c2") if "reference" in run.doc else None
    if filt.shape != orig.shape or (ref is not None and ref.shape != orig.shape):
        raise ManifestError("original, filtered and reference rasters differ in geometry")
    rois = [RegionOfInterest(r["row0"], r["col0"], r["height"], r["width"], r["label"])
            for r in run.get("rois")]
    for roi in rois:
        roi.check(orig.shape)
    rows = []
    for roi in rois:
        row = {"label": roi.label, "enl_original": enl(orig, roi), "enl_filtered": enl(filt, roi),
               "epd_roa": epd_roa(orig, filt, roi)}
        if ref is not None:
            row["ssim"] = span_ssim(ref, filt, window=run.get("ssim_window", 8),
                                    L=run.get("ssim_L"), squared=run.get("ssim_squared", False),
                                    roi=roi)
        rows.append(row)
    path = run.file("output")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
            print(", ".join(f"{k}={v}" for k, v in row.items()))
    return [path]


def cmd_quicklook(run: Run) -> list[Path]:
    from .raster import export_quicklook

    out = run.file("output")
    export_quicklook(_read(run.file("input"), "c2"), out)
    return [out]


HELP = {
    "simulate": "simulate a speckled temporal stack with truth and change mask",
    "changemask": "omnibus Wishart change mask of a stack",
    "dataset": "sample change-aware noisy/clean training patches",
    "train": "train the residual network, write checkpoint and CSV log",
    "despeckle": "filter a covariance raster with a trained checkpoint",
    "evaluate": "ENL, EPD-ROA and SSIM over regions of interest",
    "quicklook": "RGB PNG preview of a covariance raster",
}

COMMANDS = {
    "simulate": cmd_simulate,
    "changemask": cmd_changemask,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "despeckle": cmd_despeckle,
    "evaluate": cmd_evaluate,
    "quicklook": cmd_quicklook,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polspeckle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"cap on BLAS threads (default: ${THREADS_ENV} or library default)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("manifest", help="JSON manifest")
    return parser


def _thread_limit(n):
    if n is None:
        env = os.environ.get(THREADS_ENV)
        n = int(env) if env else None
    if n is None:
        return None
    if n < 1:
        raise ManifestError("--threads must be at least 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        limiter = _thread_limit(args.threads)
        try:
            run = Run(args.command, args.manifest)
            outputs = COMMANDS[args.command](run)
            run.write_record(outputs[0], outputs)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except ManifestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
