"""Command-line entry point: generate / validate / train / eval / predict /
gradcheck.

Exit codes: 0 ok, 1 check failure, 2 usage or config error, 3 training
divergence. Every run directory gets a manifest written before any long
computation and a lock file so concurrent runs cannot share it.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import shutil
import subprocess
import sys

import numpy as np

from . import __version__
from . import discriminator as disc_mod
from . import model as model_mod
from .data import (
    CorpusConfig,
    generate_corpus,
    load_corpus,
    load_csv,
    save_csv,
    window,
    write_corpus,
)
from .errors import AdvmtError, DivergenceError
from .evaluation import (
    DEFAULT_HORIZONS_MS,
    HorizonSet,
    ablation_report,
    evaluate,
    render_pose_strip,
)
from .gradcheck import run_suite
from .skeleton import MotionSequence, SkeletonTopology, bone_lengths
from .training import TrainConfig, fit

LOCK_NAME = ".advmt.lock"


def _build_id() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=here, capture_output=True, text=True, timeout=5,
        )
        if rev.returncode == 0:
            return f"{__version__}+{rev.stdout.strip()}"
    except OSError:
        pass
    return __version__


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise AdvmtError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise AdvmtError(f"config file {path} is not valid JSON: {exc}") from None


def _resolve_seed(flag_seed, cfg_seed):
    if flag_seed is not None:
        return flag_seed
    if cfg_seed is not None:
        return int(cfg_seed)
    env = os.environ.get("ADVMT_SEED")
    if env is not None:
        return int(env)
    return 0


class RunDirectory:
    """Lock + manifest handling for commands that own an output directory."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.lock_path = os.path.join(out_dir, LOCK_NAME)

    def __enter__(self):
        os.makedirs(self.out_dir, exist_ok=True)
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise AdvmtError(
                f"{self.out_dir} is locked by another run (remove {LOCK_NAME} if stale)"
            ) from None
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            os.remove(self.lock_path)
        except FileNotFoundError:
            pass
        return False

    def write_manifest(self, command, config, seed, config_path=None):
        manifest = {
            "command": command,
            "config_path": config_path,
            "config": config,
            "seed": seed,
            "build": _build_id(),
            "out_dir": os.path.abspath(self.out_dir),
            "started_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "argv": sys.argv[1:],
        }
        with open(os.path.join(self.out_dir, "run_manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _override(cfg: dict, args, mapping):
    for flag, key in mapping.items():
        value = getattr(args, flag)
        if value is not None:
            cfg[key] = value


# -- generate -------------------------------------------------------------------


def cmd_generate(args) -> int:
    raw = _load_json(args.config) if args.config else {}
    topo_path = raw.pop("topology", None)
    seed = _resolve_seed(args.seed, raw.pop("seed", None))
    _override(raw, args, {
        "n_train": "n_train", "n_test": "n_test", "frames": "n_frames", "fps": "fps",
        "amplitude_scale": "amplitude_scale",
    })
    if args.styles is not None:
        raw["styles"] = tuple(args.styles.split(","))
    cfg = CorpusConfig(**raw)
    if seed:
        cfg.train_seed_base += seed
        cfg.test_seed_base += seed
    topo = SkeletonTopology.from_json(topo_path) if topo_path else SkeletonTopology.default_17()

    with RunDirectory(args.out) as run:
        run.write_manifest("generate", {**cfg.__dict__, "styles": list(cfg.styles)},
                           seed, args.config)
        try:
            corpus_set = generate_corpus(cfg, topo)
            manifest_path = write_corpus(corpus_set, args.out)
        except Exception:
            for name in ("manifest.json", "skeleton.json", "train", "test"):
                target = os.path.join(args.out, name)
                if os.path.isdir(target):
                    shutil.rmtree(target, ignore_errors=True)
                elif os.path.exists(target):
                    os.remove(target)
            raise
    n_test = len(corpus_set.test.sequences) if corpus_set.test else 0
    print(f"wrote {len(corpus_set.train.sequences)} train / {n_test} test sequences "
          f"to {manifest_path}")
    return 0


# -- validate -------------------------------------------------------------------


def cmd_validate(args) -> int:
    corpus_set = load_corpus(args.data)
    topo = corpus_set.topology
    problems = []
    for corpus in (corpus_set.train, corpus_set.test):
        if corpus is None:
            continue
        for i, seq in enumerate(corpus.sequences):
            ref = bone_lengths(seq.frames[0], topo)
            worst = 0.0
            for f in range(1, seq.n_frames):
                worst = max(worst, float(np.abs(bone_lengths(seq.frames[f], topo) - ref).max()))
            if worst > args.tol:
                problems.append(
                    f"{corpus.split}[{i}]: bone length drift {worst:.3e} mm exceeds {args.tol:.1e}"
                )
    n_test = len(corpus_set.test.sequences) if corpus_set.test else 0
    print(f"checked {len(corpus_set.train.sequences)} train / {n_test} test sequences")
    if problems:
        for p in problems:
            print(f"FAIL {p}")
        return 1
    print("all sequences pass bone-length constancy")
    return 0


# -- train ----------------------------------------------------------------------


def cmd_train(args) -> int:
    raw = _load_json(args.config) if args.config else {}
    enc_raw = raw.pop("encoder", None)
    disc_raw = raw.pop("discriminator", None)
    weights_raw = dict(raw.pop("weights", {}))
    _override(weights_raw, args, {
        "lambda_bone": "lambda_bone", "lambda_adv": "lambda_adv", "loss_norm": "loss_norm",
    })
    seed = _resolve_seed(args.seed, raw.pop("seed", None))
    _override(raw, args, {
        "epochs": "epochs", "batch_size": "batch_size", "lr_encoder": "lr_encoder",
        "lr_disc": "lr_disc", "disc_steps": "disc_steps_per_gen_step",
        "grad_clip": "grad_clip_norm", "history_frames": "history_frames",
        "predict_frames": "predict_frames", "stride": "window_stride",
        "checkpoint_every": "checkpoint_every",
    })
    raw["weights"] = weights_raw
    raw["seed"] = seed
    cfg = TrainConfig.from_dict(raw)

    corpus_set = load_corpus(args.data)
    flat = 3 * corpus_set.topology.joint_count
    enc_cfg = None
    if enc_raw is not None:
        enc_raw.setdefault("input_dim", flat)
        enc_raw.setdefault("history_len", cfg.history_frames)
        enc_cfg = model_mod.EncoderConfig(**enc_raw)
    disc_cfg = None
    if disc_raw is not None:
        disc_raw.setdefault("input_dim", flat)
        disc_raw["hidden_dims"] = tuple(disc_raw.get("hidden_dims", (128, 64)))
        disc_cfg = disc_mod.DiscriminatorConfig(**disc_raw)

    with RunDirectory(args.out) as run:
        run.write_manifest("train", cfg.to_dict(), seed, args.config)
        try:
            _, _, log = fit(corpus_set, cfg, out_dir=args.out,
                            encoder_config=enc_cfg, disc_config=disc_cfg)
        except DivergenceError as exc:
            print(f"training diverged: {exc}", file=sys.stderr)
            return 3
    last = log.records[-1]
    val = " ".join(f"{ms}ms={v:.1f}" for ms, v in sorted(last.val_mpjpe.items()))
    print(f"epoch {last.epoch}: train mpjpe {last.mpjpe:.2f} mm"
          + (f", val mpjpe {val}" if val else ""))
    print(f"checkpoints and trainlog.csv written to {args.out}")
    return 0


# -- eval -----------------------------------------------------------------------


def _sequence_of(frames, fps, action):
    return MotionSequence(frames=frames, fps=fps, action_label=action)


def cmd_eval(args) -> int:
    corpus_set = load_corpus(args.data)
    if corpus_set.test is None:
        raise AdvmtError(f"{args.data}: corpus has no test split to evaluate")
    fps = corpus_set.test.sequences[0].fps
    horizons = HorizonSet(
        milliseconds=tuple(int(m) for m in args.horizons.split(",")), fps=fps
    )

    model = None
    checkpoint_label = ""
    if not args.baseline_only:
        if not args.checkpoint:
            raise AdvmtError("--checkpoint is required unless --baseline-only is given")
        model = model_mod.load_checkpoint(args.checkpoint)
        checkpoint_label = os.path.basename(args.checkpoint)

    report = evaluate(
        model, corpus_set.test, horizons,
        history_frames=args.history_frames, stride=args.stride,
        corpus_label=os.path.basename(args.data), checkpoint_label=checkpoint_label,
    )

    with RunDirectory(args.out) as run:
        run.write_manifest("eval", {"horizons_ms": list(horizons.milliseconds),
                                    "stride": args.stride,
                                    "checkpoint": args.checkpoint,
                                    "baseline_only": args.baseline_only}, 0)
        report_path = os.path.join(args.out, "report.csv")
        report.to_csv(report_path)
        print(f"wrote {report_path}")

        if args.ablate:
            runs = []
            if model is not None:
                label = args.label or checkpoint_label or "model"
                runs.append((label, report))
            for item in args.ablate:
                label, _, ckpt = item.partition("=")
                if not ckpt:
                    raise AdvmtError(f"--ablate expects label=checkpoint, got {item!r}")
                variant = model_mod.load_checkpoint(ckpt)
                runs.append(
                    (label, evaluate(variant, corpus_set.test, horizons,
                                     stride=args.stride))
                )
            table = ablation_report(runs)
            table.to_csv(os.path.join(args.out, "ablation.csv"))
            print(table.to_text())

        if args.render and model is not None:
            t = model.config.history_len
            l = max(horizons.frames())
            rendered = 0
            for seq in corpus_set.test.sequences:
                if rendered >= args.render:
                    break
                for sample in window(seq, t, l, args.stride):
                    if rendered >= args.render:
                        break
                    pred = model_mod.rollout(model, sample.input, l)
                    strip = os.path.join(args.out, f"strip_{rendered:03d}.svg")
                    render_pose_strip(
                        [_sequence_of(sample.target, fps, "truth"),
                         _sequence_of(pred, fps, "prediction")],
                        corpus_set.topology, strip, drop_axis=args.drop_axis,
                    )
                    rendered += 1
            print(f"rendered {rendered} pose strips")
    return 0


# -- predict --------------------------------------------------------------------


def cmd_predict(args) -> int:
    topo = (SkeletonTopology.from_json(args.skeleton) if args.skeleton
            else SkeletonTopology.default_17())
    model = model_mod.load_checkpoint(args.checkpoint)
    seq = load_csv(args.input, topo)
    t = model.config.history_len
    if seq.n_frames < t:
        raise AdvmtError(f"{args.input}: {seq.n_frames} frames < history length {t}")
    history = seq.frames[-t:]
    pred = model_mod.rollout(model, history, args.frames)
    save_csv(_sequence_of(pred, seq.fps, "prediction"), args.out, topo.joint_names)
    print(f"wrote {args.frames} predicted frames to {args.out}")
    return 0


# -- gradcheck ------------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    results = run_suite(seed=args.seed, instances=args.instances)
    failed = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.op:<24} worst rel err {r.worst:.3e}  (tol {r.tolerance:.0e})  {status}")
        if not r.passed:
            failed.append(r.op)
    if failed:
        print(f"gradient check FAILED for: {', '.join(failed)}", file=sys.stderr)
        return 1
    print("all gradient checks passed")
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advmt",
        description="Adversarially trained transformer motion forecaster",
    )
    parser.add_argument("--version", action="version", version=f"advmt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic motion corpus")
    p.add_argument("--config", help="JSON corpus config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--fps", type=int)
    p.add_argument("--styles", help="comma-separated style names")
    p.add_argument("--amplitude-scale", dest="amplitude_scale", type=float)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("validate", help="check a corpus for bone-length constancy")
    p.add_argument("--data", required=True, help="corpus manifest.json")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("train", help="train encoder and discriminator")
    p.add_argument("--config", help="JSON train config")
    p.add_argument("--data", required=True, help="corpus manifest.json")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr-encoder", dest="lr_encoder", type=float)
    p.add_argument("--lr-disc", dest="lr_disc", type=float)
    p.add_argument("--lambda-bone", dest="lambda_bone", type=float)
    p.add_argument("--lambda-adv", dest="lambda_adv", type=float)
    p.add_argument("--loss-norm", dest="loss_norm", choices=("l2", "l2_squared"))
    p.add_argument("--disc-steps", dest="disc_steps", type=int)
    p.add_argument("--grad-clip", dest="grad_clip", type=float)
    p.add_argument("--history-frames", dest="history_frames", type=int)
    p.add_argument("--predict-frames", dest="predict_frames", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="per-horizon MPJPE report vs the zero-velocity baseline")
    p.add_argument("--checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--horizons", default=",".join(str(m) for m in DEFAULT_HORIZONS_MS))
    p.add_argument("--stride", type=int, default=5)
    p.add_argument("--baseline-only", dest="baseline_only", action="store_true")
    p.add_argument("--history-frames", dest="history_frames", type=int,
                   help="required with --baseline-only")
    p.add_argument("--label", help="variant label for the ablation table")
    p.add_argument("--ablate", action="append",
                   help="label=checkpoint; repeatable, builds the ablation grid")
    p.add_argument("--render", type=int, default=0, help="render N test windows as SVG strips")
    p.add_argument("--drop-axis", dest="drop_axis", default="y", choices=("x", "y", "z"))
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("predict", help="roll out a forecast from a motion CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="motion CSV with at least T frames")
    p.add_argument("--frames", type=int, default=25)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--skeleton", help="topology JSON (default: built-in 17-joint)")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward rule")
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--instances", type=int, default=10)
    p.set_defaults(handler=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (AdvmtError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
