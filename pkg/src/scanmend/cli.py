"""Command line driver.

Every subcommand operates inside a run directory: it takes a lock file for
the duration of the invocation, writes the fully resolved config next to its
outputs, and produces only deterministic artifacts (no timestamps, fixed
float formats), so rerunning a command with the same config and seed yields
byte-identical files.

Layout under the run directory (overridable via the config "paths" section):

    config.resolved.json      resolved config the run was executed with
    dataset/                  PLY splits + manifest.json
    checkpoints/              clean_ae.json, partial_ae.json, gan_<mode>.json
    reports/                  loss curves, metrics, sweep and ablation CSVs
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys

from . import __version__
from .autoencoder import (
    AeTrainConfig,
    AutoencoderSpec,
    TrainingDivergedError,
    load_autoencoder,
    reconstruction_emd,
    save_autoencoder,
    train_ae,
)
from .config import ConfigError, PRESETS, load_config, override_seed, resolve_config
from .gan import (
    GanTrainConfig,
    TrainingMode,
    assemble_pipeline,
    load_gan,
    mode_settings,
    save_gan,
    train_gan,
)
from .metrics import evaluate_completions, incompleteness_sweep, jsd, mode_collapse_reference
from .nn.checkpoint import CheckpointError, content_hash
from .ply import read_ply, write_ply
from .rng import Rng
from .synth import DatasetConfig, load_dataset, make_dataset, save_dataset

LOCK_NAME = "run.lock"


class CliError(RuntimeError):
    """User-correctable failure; printed without a traceback."""


# ---- run directory plumbing ----


def _threads() -> int:
    raw = os.environ.get("SCANMEND_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise CliError(f"SCANMEND_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise CliError(f"SCANMEND_THREADS must be a positive integer, got {raw!r}")
    return n


def _paths(cfg: dict, run_dir: str) -> dict:
    over = cfg.get("paths", {})

    def resolve(key: str, default: str) -> str:
        val = over.get(key, default)
        return val if os.path.isabs(val) else os.path.join(run_dir, val)

    return {
        "dataset": resolve("dataset", "dataset"),
        "checkpoints": resolve("checkpoints", "checkpoints"),
        "reports": resolve("reports", "reports"),
    }


@contextlib.contextmanager
def run_lock(run_dir: str):
    """Exclusive single-owner lock on a run directory for one invocation."""
    os.makedirs(run_dir, exist_ok=True)
    lock_path = os.path.join(run_dir, LOCK_NAME)
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CliError(
            f"run directory {run_dir} is locked by another invocation"
            f" (remove {lock_path} if that process is gone)"
        ) from None
    try:
        os.write(fd, f"{os.getpid()}\n".encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.remove(lock_path)


def _write_resolved_config(cfg: dict, run_dir: str) -> None:
    path = os.path.join(run_dir, "config.resolved.json")
    with open(path, "w") as f:
        json.dump(cfg, f, sort_keys=True, indent=1)
        f.write("\n")


def _fmt(x) -> str:
    if isinstance(x, float):
        return "%.10g" % x
    return str(x)


def _write_csv(path: str, header: list, rows: list) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: str, obj: dict) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, sort_keys=True, indent=1)
        f.write("\n")


# ---- artifact loading ----


def _load_dataset(paths: dict):
    d = paths["dataset"]
    if not os.path.isfile(os.path.join(d, "manifest.json")):
        raise CliError(f"dataset not found at {d}: run the synth command first")
    return load_dataset(d)


def _require_checkpoint(path: str, hint: str) -> str:
    if not os.path.isfile(path):
        raise CliError(f"missing checkpoint: {path} ({hint})")
    return path


def _ae_path(paths: dict, target: str) -> str:
    return os.path.join(paths["checkpoints"], f"{target}_ae.json")


def _gan_path(paths: dict, mode: str) -> str:
    return os.path.join(paths["checkpoints"], f"gan_{mode}.json")


def _load_ae(paths: dict, target: str):
    path = _require_checkpoint(_ae_path(paths, target), f"run train-ae --target {target} first")
    return load_autoencoder(path)[0], path


def _load_pipeline(cfg: dict, paths: dict, mode: str):
    """GAN checkpoint + the autoencoders it was trained against."""
    gan_file = _require_checkpoint(_gan_path(paths, mode), f"run train-gan --mode {mode} first")
    bundle = load_gan(gan_file)
    clean_ae, clean_path = _load_ae(paths, "clean")
    expect = bundle.extra.get("clean_ae_hash")
    if expect and expect != content_hash(clean_path):
        raise CliError(
            f"checkpoint mismatch: {gan_file} was trained against a different"
            f" clean autoencoder than {clean_path}"
        )
    partial_ae = None
    if mode_settings(bundle.extra.get("mode", mode)).latent_source == "partial":
        partial_ae, partial_path = _load_ae(paths, "partial")
        expect = bundle.extra.get("partial_ae_hash")
        if expect and expect != content_hash(partial_path):
            raise CliError(
                f"checkpoint mismatch: {gan_file} was trained against a different"
                f" partial autoencoder than {partial_path}"
            )
    return assemble_pipeline(bundle, clean_ae, partial_ae)


def _read_ply_dir(d: str) -> tuple:
    if not os.path.isdir(d):
        raise CliError(f"not a directory: {d}")
    names = sorted(f for f in os.listdir(d) if f.endswith(".ply"))
    if not names:
        raise CliError(f"no .ply files found in {d}")
    clouds = []
    for name in names:
        path = os.path.join(d, name)
        try:
            clouds.append(read_ply(path))
        except ValueError as e:
            raise CliError(f"malformed PLY file: {e}") from e
    return names, clouds


# ---- subcommands ----


def cmd_synth(cfg: dict, run_dir: str) -> int:
    d = cfg["dataset"]
    r = tuple(d["r"]) if isinstance(d["r"], list) else d["r"]
    ds_cfg = DatasetConfig(
        families=tuple(d["families"]),
        n=d["n"],
        total=d["total"],
        train_fraction=d["train_fraction"],
        r=r,
        sigma=d["sigma"],
        seed=d["seed"],
        scan_resolution=d["scan_resolution"],
    )
    dataset = make_dataset(ds_cfg, threads=_threads())
    paths = _paths(cfg, run_dir)
    save_dataset(dataset, paths["dataset"])
    m = dataset.manifest
    print(
        f"dataset: {m['total']} shapes (n={m['n']}) ->"
        f" {dataset.clean_train.shape[0]} clean_train,"
        f" {dataset.partial_train.shape[0]} partial_train,"
        f" {dataset.clean_test.shape[0]} test at {paths['dataset']}"
    )
    return 0


def cmd_train_ae(cfg: dict, run_dir: str, target: str = "clean") -> int:
    paths = _paths(cfg, run_dir)
    dataset = _load_dataset(paths)
    clouds = dataset.clean_train if target == "clean" else dataset.partial_train
    if clouds.shape[0] == 0:
        raise CliError(f"dataset has no {target}_train shapes to train on")
    a = cfg["ae"]
    spec = AutoencoderSpec(n=dataset.manifest["n"], k=a["k"], linear=a["linear"])
    tcfg = AeTrainConfig(
        lr=a["lr"], beta1=a["beta1"], batch_size=a["batch_size"], epochs=a["epochs"], seed=a["seed"]
    )
    ae, losses = train_ae(clouds, spec, tcfg)
    out = _ae_path(paths, target)
    os.makedirs(paths["checkpoints"], exist_ok=True)
    save_autoencoder(out, ae, seed=a["seed"])
    _write_csv(
        os.path.join(paths["reports"], f"ae_{target}_loss.csv"),
        ["epoch", "loss"],
        [[i + 1, v] for i, v in enumerate(losses)],
    )
    held = dataset.clean_test if target == "clean" else dataset.partial_test
    held_emd = reconstruction_emd(ae, held) if held.shape[0] else float("nan")
    print(
        f"{target} autoencoder: loss {losses[0]:.4f} -> {losses[-1]:.4f}"
        f" over {len(losses)} epochs, held-out EMD {held_emd:.4f}, saved {out}"
    )
    return 0


def cmd_train_gan(cfg: dict, run_dir: str, mode: str | None = None, gan_loss: str | None = None) -> int:
    paths = _paths(cfg, run_dir)
    dataset = _load_dataset(paths)
    g = cfg["gan"]
    mode = TrainingMode(mode or g["mode"])
    gan_loss = gan_loss or g["gan_loss"]
    clean_ae, clean_path = _load_ae(paths, "clean")
    settings = mode_settings(mode)
    partial_ae = partial_path = None
    if settings.latent_source == "partial":
        partial_ae, partial_path = _load_ae(paths, "partial")
    partial_gt = dataset.partial_train_gt if settings.recon_target == "gt" else None
    tcfg = GanTrainConfig(
        lr=g["lr"],
        beta1=g["beta1"],
        batch_size=g["batch_size"],
        epochs=g["epochs"],
        seed=g["seed"],
        tau=g["tau"],
        gan_loss=gan_loss,
    )
    result = train_gan(
        dataset.clean_train,
        dataset.partial_train,
        mode,
        tcfg,
        clean_ae=clean_ae,
        partial_ae=partial_ae,
        partial_gt=partial_gt,
    )
    out = _gan_path(paths, mode.value)
    os.makedirs(paths["checkpoints"], exist_ok=True)
    save_gan(
        out,
        result,
        seed=g["seed"],
        clean_ae_hash=content_hash(clean_path),
        partial_ae_hash=content_hash(partial_path) if partial_path else None,
        gan_loss=gan_loss,
    )
    _write_csv(
        os.path.join(paths["reports"], f"gan_{mode.value}_loss.csv"),
        ["epoch", "L_F", "L_G", "hard_HL", "adv_term"],
        [[r["epoch"], r["L_F"], r["L_G"], r["hard_HL"], r["adv_term"]] for r in result.curves],
    )
    last = result.curves[-1]
    note = " (diverged, restored last finite snapshot)" if result.diverged else ""
    print(
        f"gan [{mode.value}]: epoch {last['epoch']}"
        f" L_F {last['L_F']:.4f} L_G {last['L_G']:.4f} HL {last['hard_HL']:.4f},"
        f" saved {out}{note}"
    )
    return 0


def cmd_complete(cfg: dict, run_dir: str, input_dir: str, output_dir: str, mode: str | None = None) -> int:
    paths = _paths(cfg, run_dir)
    mode = TrainingMode(mode or cfg["gan"]["mode"]).value
    pipeline = _load_pipeline(cfg, paths, mode)
    names, clouds = _read_ply_dir(input_dir)
    os.makedirs(output_dir, exist_ok=True)
    for name, cloud in zip(names, clouds):
        try:
            completed = pipeline.complete(cloud)
        except ValueError as e:
            raise CliError(f"cannot complete {name}: {e}") from e
        write_ply(os.path.join(output_dir, name), completed)
    print(f"completed {len(names)} clouds [{mode}] -> {output_dir}")
    return 0


def cmd_eval(cfg: dict, run_dir: str, completions_dir: str, gt_dir: str, label: str = "eval") -> int:
    paths = _paths(cfg, run_dir)
    comp_names, comps = _read_ply_dir(completions_dir)
    gt_names, gts = _read_ply_dir(gt_dir)
    if comp_names != gt_names:
        only_c = sorted(set(comp_names) - set(gt_names))[:3]
        only_g = sorted(set(gt_names) - set(comp_names))[:3]
        raise CliError(
            f"completion/ground-truth file names differ"
            f" (only in completions: {only_c}, only in gt: {only_g})"
        )
    e = cfg["eval"]
    report = evaluate_completions(comps, gts, eps=e["eps"])
    rows = [
        [comp_names[r["index"]]] + [r[c] for c in report.COLUMNS] for r in report.rows
    ]
    _write_csv(
        os.path.join(paths["reports"], f"{label}_per_shape.csv"),
        ["name", *report.COLUMNS],
        rows,
    )
    rng = Rng(e["seed"])
    summary = dict(report.aggregate)
    summary["jsd"] = jsd(comps, gts, g=e["jsd_grid"])
    summary["jsd_mode_collapse"] = jsd(mode_collapse_reference(gts, rng), gts, g=e["jsd_grid"])
    summary["count"] = len(comps)
    _write_json(os.path.join(paths["reports"], f"{label}_summary.json"), summary)
    print(
        f"eval [{label}]: f1 {summary['f1']:.2f} emd {summary['emd']:.4f}"
        f" jsd {summary['jsd']:.4f} over {summary['count']} shapes"
    )
    return 0


def cmd_sweep(cfg: dict, run_dir: str, mode: str | None = None) -> int:
    paths = _paths(cfg, run_dir)
    dataset = _load_dataset(paths)
    if dataset.clean_test.shape[0] == 0:
        raise CliError("dataset has no test shapes to sweep over")
    mode = TrainingMode(mode or cfg["gan"]["mode"]).value
    pipeline = _load_pipeline(cfg, paths, mode)
    clean_ae, _ = _load_ae(paths, "clean")
    e = cfg["eval"]
    rows = incompleteness_sweep(
        pipeline,
        clean_ae,
        dataset.clean_test,
        e["r_sweep"],
        sigma=cfg["dataset"]["sigma"],
        eps=e["eps"],
        seed=e["seed"],
    )
    _write_csv(
        os.path.join(paths["reports"], "sweep.csv"),
        ["r", "f1_ae", "emd_ae", "f1_ours", "emd_ours"],
        [[r["r"], r["f1_ae"], r["emd_ae"], r["f1_ours"], r["emd_ours"]] for r in rows],
    )
    for r in rows:
        print(
            f"r={r['r']:.2f}: f1 ae {r['f1_ae']:.2f} ours {r['f1_ours']:.2f},"
            f" emd ae {r['emd_ae']:.4f} ours {r['emd_ours']:.4f}"
        )
    return 0


def cmd_ablate(cfg: dict, run_dir: str) -> int:
    """Train and evaluate every mode variant with shared autoencoders.

    Missing autoencoder checkpoints are trained first; each mode's GAN is
    then trained from the configured seed, saved, and scored on the hidden
    test pairs.
    """
    paths = _paths(cfg, run_dir)
    dataset = _load_dataset(paths)
    if dataset.clean_test.shape[0] == 0:
        raise CliError("dataset has no test shapes to evaluate on")
    for target in ("clean", "partial"):
        if not os.path.isfile(_ae_path(paths, target)):
            cmd_train_ae(cfg, run_dir, target)
    clean_ae, clean_path = _load_ae(paths, "clean")
    partial_ae, partial_path = _load_ae(paths, "partial")
    g, e = cfg["gan"], cfg["eval"]
    tcfg = GanTrainConfig(
        lr=g["lr"],
        beta1=g["beta1"],
        batch_size=g["batch_size"],
        epochs=g["epochs"],
        seed=g["seed"],
        tau=g["tau"],
        gan_loss=g["gan_loss"],
    )
    table = []
    for mode in TrainingMode:
        settings = mode_settings(mode)
        uses_partial = settings.latent_source == "partial"
        result = train_gan(
            dataset.clean_train,
            dataset.partial_train,
            mode,
            tcfg,
            clean_ae=clean_ae,
            partial_ae=partial_ae if uses_partial else None,
            partial_gt=dataset.partial_train_gt if settings.recon_target == "gt" else None,
        )
        save_gan(
            _gan_path(paths, mode.value),
            result,
            seed=g["seed"],
            clean_ae_hash=content_hash(clean_path),
            partial_ae_hash=content_hash(partial_path) if uses_partial else None,
            gan_loss=g["gan_loss"],
        )
        _write_csv(
            os.path.join(paths["reports"], f"gan_{mode.value}_loss.csv"),
            ["epoch", "L_F", "L_G", "hard_HL", "adv_term"],
            [[r["epoch"], r["L_F"], r["L_G"], r["hard_HL"], r["adv_term"]] for r in result.curves],
        )
        completions = result.pipeline.complete_batch(dataset.partial_test)
        report = evaluate_completions(completions, dataset.clean_test, eps=e["eps"])
        agg = report.aggregate
        table.append([mode.value] + [agg[c] for c in report.COLUMNS])
        print(
            f"ablate [{mode.value}]: f1 {agg['f1']:.2f} emd {agg['emd']:.4f}"
            + (" (diverged)" if result.diverged else "")
        )
    _write_csv(
        os.path.join(paths["reports"], "ablation.csv"),
        ["mode", "accuracy", "completeness", "f1", "emd", "chamfer", "hausdorff_sym"],
        table,
    )
    print(f"ablation table: {os.path.join(paths['reports'], 'ablation.csv')}")
    return 0


# ---- argument parsing ----


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--run", required=True, help="run directory for artifacts")
    common.add_argument("--config", help="JSON config file (overlaid on its preset)")
    common.add_argument(
        "--preset", choices=sorted(PRESETS), help="base preset when the config names none"
    )
    common.add_argument("--seed", type=int, help="override every section seed")

    p = argparse.ArgumentParser(prog="scanmend", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"scanmend {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="generate, corrupt and split a dataset")

    ae = sub.add_parser("train-ae", parents=[common], help="train a point-set autoencoder")
    ae.add_argument("--target", choices=["clean", "partial"], default="clean")

    gan = sub.add_parser("train-gan", parents=[common], help="train the latent mapping")
    gan.add_argument("--mode", choices=[m.value for m in TrainingMode])
    gan.add_argument("--gan-loss", choices=["ls", "log"], dest="gan_loss")

    comp = sub.add_parser("complete", parents=[common], help="complete partial clouds")
    comp.add_argument("--input", required=True, help="directory of partial .ply files")
    comp.add_argument("--output", required=True, help="directory for completed .ply files")
    comp.add_argument("--mode", choices=[m.value for m in TrainingMode])

    ev = sub.add_parser("eval", parents=[common], help="score completions against ground truth")
    ev.add_argument("--completions", required=True, help="directory of completed .ply files")
    ev.add_argument("--gt", required=True, help="directory of ground-truth .ply files")
    ev.add_argument("--label", default="eval", help="report file name prefix")

    sw = sub.add_parser("sweep", parents=[common], help="score across incompleteness levels")
    sw.add_argument("--mode", choices=[m.value for m in TrainingMode])

    sub.add_parser("ablate", parents=[common], help="train and score every mode variant")
    return p


def _dispatch(args: argparse.Namespace, cfg: dict) -> int:
    run = args.run
    if args.command == "synth":
        return cmd_synth(cfg, run)
    if args.command == "train-ae":
        return cmd_train_ae(cfg, run, args.target)
    if args.command == "train-gan":
        return cmd_train_gan(cfg, run, args.mode, args.gan_loss)
    if args.command == "complete":
        return cmd_complete(cfg, run, args.input, args.output, args.mode)
    if args.command == "eval":
        return cmd_eval(cfg, run, args.completions, args.gt, args.label)
    if args.command == "sweep":
        return cmd_sweep(cfg, run, args.mode)
    if args.command == "ablate":
        return cmd_ablate(cfg, run)
    raise CliError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.config:
            if not os.path.isfile(args.config):
                raise CliError(f"config file not found: {args.config}")
            cfg = load_config(args.config, args.preset)
        else:
            cfg = resolve_config(None, args.preset)
        if args.seed is not None:
            cfg = override_seed(cfg, args.seed)
        with run_lock(args.run):
            _write_resolved_config(cfg, args.run)
            return _dispatch(args, cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (CliError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except TrainingDivergedError as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
