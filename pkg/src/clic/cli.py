"""Command-line entry point: ``clic <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, icd, plotting, synth
from .errors import BadThresholds, ClicError, InvalidC, UnknownScorer
from .finetune_eval import (
    FinetuneConfig,
    RegressionHead,
    embed_images,
    evaluate,
    few_shot_curve,
    finetune_embeddings,
)
from .fusion import FeatureMap, fuse
from .heuristics import LEARNED_SCORERS, get_scorer, scorer_names
from .imagecore import load_image
from .manifest import Manifest, ManifestEntry, read_manifest, write_manifest
from .moco import TrainConfig, similarity_report, train
from .rcm import expand_dataset, samples_per_image

log = logging.getLogger("clic")


class UsageError(Exception):
    pass


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("CLIC_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"CLIC_SEED must be an integer, got {env!r}") from None


def _config_echo(args) -> dict:
    echo = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "verbose"):
            continue
        echo[k] = str(v) if isinstance(v, Path) else v
    return echo


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_manifest(path) -> Manifest:
    try:
        return read_manifest(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read manifest {path}: {exc}") from exc


def _load_images(manifest: Manifest):
    """Decode every entry; returns kept (entry, image) pairs and the failures."""
    kept, failed = [], []
    for entry in manifest:
        try:
            kept.append((entry, load_image(entry.path)))
        except ClicError as exc:
            log.warning("skipping %s: %s", entry.path, exc)
            failed.append({"path": entry.path, "error": str(exc)})
    return kept, failed


def _labeled(manifest: Manifest) -> Manifest:
    missing = [e.path for e in manifest if e.score is None]
    if missing:
        raise UsageError(f"{len(missing)} manifest entries have no score label (first: {missing[0]})")
    return manifest


def _check_scorer(name: str) -> None:
    if name not in LEARNED_SCORERS:
        try:
            get_scorer(name)
        except UnknownScorer as exc:
            raise UsageError(str(exc)) from None


def _load_encoder_head(args, need_head: bool = True):
    if args.encoder is None or (need_head and args.head is None):
        raise UsageError("the clic scorer needs --encoder" + (" and --head" if need_head else ""))
    encoder = checkpoint.load_params(args.encoder)
    head = RegressionHead.from_arrays(checkpoint.read_blob(args.head)) if need_head else None
    return encoder, head


def _scored(args, manifest: Manifest) -> icd.ScoredManifest:
    """Use manifest scores as-is unless a scorer was requested."""
    if args.scorer is None:
        _labeled(manifest)
        return icd.ScoredManifest("manifest", list(manifest.entries))
    _check_scorer(args.scorer)
    encoder = head = None
    if args.scorer in LEARNED_SCORERS:
        encoder, head = _load_encoder_head(args)
    return icd.score_dataset(manifest, args.scorer, encoder, head, jobs=args.jobs)


def _fit_or_none(scores):
    return icd.fit_normal(scores).to_dict() if len(scores) >= 2 else None


def _scored_lines(scored: icd.ScoredManifest, base: Path) -> str:
    lines = []
    for e in scored:
        rec = e.to_record(base)
        rec["scorer"] = scored.scorer
        lines.append(json.dumps(rec, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def _factor(x: float) -> str:
    return f"{x:g}x"


# --- subcommands -------------------------------------------------------------


def cmd_synth(args) -> int:
    seed = _seed(args)
    manifest = synth.write_corpus(args.out_dir, args.n, args.size, seed)
    write_manifest(manifest, args.out_dir / "manifest.jsonl")
    print(f"wrote {len(manifest)} images to {args.out_dir}")
    return 0


def cmd_score(args) -> int:
    manifest = _load_manifest(args.manifest)
    scored = _scored(args, manifest)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(_scored_lines(scored, out.parent.resolve()), encoding="utf-8")
    scores = scored.scores
    summary = {
        "scorer": scored.scorer,
        "n": len(scored),
        "failed": len(scored.skipped),
        "failures": scored.skipped,
        "mean": float(scores.mean()) if len(scores) else None,
        "normal_fit": _fit_or_none(scores),
        "config": _config_echo(args),
    }
    _write_json(out.with_suffix(".summary.json"), summary)
    print(json.dumps({k: summary[k] for k in ("scorer", "n", "failed", "mean")}, sort_keys=True))
    return 0


def cmd_expand(args) -> int:
    if args.c < 2:
        raise UsageError(f"--c must be >= 2 (got {args.c})")
    seed = _seed(args)
    manifest = _load_manifest(args.manifest)
    out = expand_dataset(manifest, args.c, seed, args.out_dir, args.keep_originals, jobs=args.jobs)
    write_manifest(out, args.out_dir / "manifest.jsonl")
    ok = len(manifest) - len(out.skipped)
    generated = len(out) - (ok if args.keep_originals else 0)
    if ok:
        gen_factor = generated / ok
        message = _factor(len(out) / ok)
        if args.keep_originals:
            message += f" ({_factor(gen_factor)} generated + originals)"
    else:
        gen_factor, message = 0.0, "0x (no usable inputs)"
    report = {
        "inputs": len(manifest),
        "usable": ok,
        "generated": generated,
        "outputs": len(out),
        "expected_per_image": samples_per_image(args.c),
        "factor": message,
        "skipped": out.skipped,
        "config": _config_echo(args),
    }
    _write_json(args.out_dir / "expand.json", report)
    print(message)
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        batch_size=args.batch_size,
        lr=args.lr,
        epochs=args.epochs,
        lr_drops=tuple(args.lr_drops),
        lr_drop_factor=args.lr_drop_factor,
        momentum_m=args.momentum_m,
        temperature=args.temperature,
        K=args.K,
        c=args.c,
        seed=_seed(args),
        sgd_momentum=args.sgd_momentum,
        weight_decay=args.weight_decay,
        key_view=args.key_view,
    )


def cmd_train(args) -> int:
    try:
        config = _train_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if config.c < 2:
        raise UsageError(f"--c must be >= 2 (got {config.c})")
    manifest = _load_manifest(args.manifest)
    kept, failed = _load_images(manifest)
    images = [img for _, img in kept]
    state = train(config, images, args.out_dir, resume=args.resume)
    plotting.plot_loss(state.loss_history, args.out_dir / "loss.svg")
    sims = similarity_report(state, images, config, seed=config.seed)
    report = {
        "epochs": state.epoch,
        "steps": state.step,
        "loss_history": state.loss_history,
        "similarity": sims,
        "images": len(images),
        "skipped": failed,
        "train_config": config.to_dict(),
        "config": _config_echo(args),
    }
    _write_json(args.out_dir / "report.json", report)
    print(f"trained {state.epoch} epochs; final loss {state.loss_history[-1]:.4f}" if state.loss_history else "nothing to do")
    return 0


def _finetune_config(args) -> FinetuneConfig:
    return FinetuneConfig(args.batch_size, args.lr, args.momentum, args.weight_decay, args.epochs, _seed(args))


def cmd_finetune(args) -> int:
    manifest = _labeled(_load_manifest(args.manifest))
    encoder, _ = _load_encoder_head(args, need_head=False)
    config = _finetune_config(args)
    kept, failed = _load_images(manifest)
    emb = embed_images(encoder, [img for _, img in kept])
    labels = np.array([e.score for e, _ in kept])
    head = finetune_embeddings(emb, labels, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    checkpoint.write_blob(head.arrays(), out)
    pred = head.predict(emb)
    report = {
        "n": len(kept),
        "skipped": failed,
        "train_mse": float(np.mean((pred - labels) ** 2)),
        "finetune_config": config.to_dict(),
        "config": _config_echo(args),
    }
    _write_json(out.with_suffix(".json"), report)
    print(f"head written to {out}")
    return 0


def cmd_eval(args) -> int:
    manifest = _labeled(_load_manifest(args.manifest))
    _check_scorer(args.scorer)
    kept, failed = _load_images(manifest)
    if args.scorer in LEARNED_SCORERS:
        encoder, head = _load_encoder_head(args)
        preds = head.predict(embed_images(encoder, [img for _, img in kept]))
    else:
        fn = get_scorer(args.scorer)
        preds = [fn(img) for _, img in kept]
    report = evaluate([e.key for e, _ in kept], preds, [e.score for e, _ in kept], args.scorer).to_dict()
    report["skipped"] = failed
    report["config"] = _config_echo(args)
    _write_json(Path(args.out), report)
    print(f"PCC {report['pcc']:.4f}  SRCC {report['srcc']:.4f}  n={report['n']}")
    return 0


def cmd_icd(args) -> int:
    scored = _scored(args, _load_manifest(args.manifest))
    scores = scored.scores
    counts, edges = icd.histogram(scores, args.bins)
    fit = icd.fit_normal(scores) if len(scores) >= 2 else None
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "histogram.csv").write_text(icd.histogram_csv(counts, edges), encoding="utf-8")
    plotting.plot_histogram(counts, edges, args.out_dir / "histogram.svg", fit)
    report = {
        "scorer": scored.scorer,
        "n": len(scores),
        "failed": len(scored.skipped),
        "normal_fit": fit.to_dict() if fit else None,
        "mode": icd.histogram_mode(counts, edges) if len(scores) else None,
        "bins": args.bins,
        "config": _config_echo(args),
    }
    _write_json(args.out_dir / "icd.json", report)
    print(json.dumps(report["normal_fit"], sort_keys=True))
    return 0


def cmd_stratify(args) -> int:
    if not args.lo < args.hi:
        raise UsageError(f"--lo must be below --hi (got {args.lo}, {args.hi})")
    scored = _scored(args, _load_manifest(args.manifest))
    try:
        low, high, mid = icd.stratify(scored, args.lo, args.hi)
    except BadThresholds as exc:
        raise UsageError(str(exc)) from exc
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in (("low", low), ("mid", mid), ("high", high)):
        write_manifest(part.entries, args.out_dir / f"{name}.jsonl")
    report = {
        "n": len(scored),
        "low": len(low),
        "mid": len(mid),
        "high": len(high),
        "lo": args.lo,
        "hi": args.hi,
        "config": _config_echo(args),
    }
    _write_json(args.out_dir / "stratify.json", report)
    print(f"low {len(low)}  mid {len(mid)}  high {len(high)}")
    return 0


def cmd_fewshot(args) -> int:
    manifest = _labeled(_load_manifest(args.manifest))
    encoder, _ = _load_encoder_head(args, need_head=False)
    config = _finetune_config(args)
    kept, _ = _load_images(manifest)
    pool = [(img, e.score) for e, img in kept]
    rows = few_shot_curve(encoder, pool, args.ns, config, eval_size=args.eval_size)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    csv = "n,pcc,srcc\n" + "".join(f"{n},{p:.6f},{s:.6f}\n" for n, p, s in rows)
    (args.out_dir / "fewshot.csv").write_text(csv, encoding="utf-8")
    plotting.plot_few_shot(rows, args.out_dir / "fewshot.svg")
    report = {
        "rows": [{"n": n, "pcc": p, "srcc": s} for n, p, s in rows],
        "finetune_config": config.to_dict(),
        "config": _config_echo(args),
    }
    _write_json(args.out_dir / "fewshot.json", report)
    sys.stdout.write(csv)
    return 0


def cmd_fuse_demo(args) -> int:
    task = checkpoint.read_blob(args.task)
    ic = checkpoint.read_blob(args.ic)
    if len(task) != 1 or len(ic) != 1 or task[0].ndim != 3 or ic[0].ndim != 3:
        raise UsageError("fuse-demo expects blobs holding exactly one C x H x W array each")
    out = fuse(FeatureMap(task[0]), FeatureMap(ic[0]), args.weight)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    checkpoint.write_blob([out.data], args.out)
    print(f"fused map {out.data.shape} written to {args.out}")
    return 0


# --- parser ------------------------------------------------------------------


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_scorer_args(p, default=None):
    p.add_argument("--scorer", default=default, help=f"one of: {', '.join(scorer_names())}")
    p.add_argument("--encoder", type=Path, help="encoder checkpoint (clic scorer)")
    p.add_argument("--head", type=Path, help="regression head blob (clic scorer)")
    p.add_argument("--jobs", type=int, default=1, help="parallel scoring threads")


def _add_finetune_args(p):
    d = FinetuneConfig()
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--momentum", type=float, default=d.momentum)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clic", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a procedural labelled corpus")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("score", help="score every image in a manifest")
    p.add_argument("manifest", type=Path)
    _add_scorer_args(p, default="entropy")
    p.add_argument("--out", type=Path, required=True, help="scored JSON-lines output")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("expand", help="expand a dataset with random crop-and-mix samples")
    p.add_argument("manifest", type=Path)
    p.add_argument("--c", type=int, default=2)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--keep-originals", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_expand)

    d = TrainConfig()
    p = sub.add_parser("train", help="contrastive pre-training")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--lr-drops", type=_floats, default=list(d.lr_drops), help="epoch fractions, e.g. 0.6,0.8")
    p.add_argument("--lr-drop-factor", type=float, default=d.lr_drop_factor)
    p.add_argument("--momentum-m", type=float, default=d.momentum_m, help="key encoder momentum")
    p.add_argument("--temperature", type=float, default=d.temperature)
    p.add_argument("--K", type=int, default=d.K, help="negative queue size")
    p.add_argument("--c", type=int, default=d.c)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sgd-momentum", type=float, default=d.sgd_momentum)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)
    p.add_argument("--key-view", choices=["full", "rcm"], default=d.key_view)
    p.add_argument("--resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="fit a regression head on a frozen encoder")
    p.add_argument("manifest", type=Path)
    p.add_argument("--encoder", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="head blob output")
    _add_finetune_args(p)
    p.set_defaults(func=cmd_finetune, head=None)

    p = sub.add_parser("eval", help="PCC/SRCC of a scorer against manifest labels")
    p.add_argument("manifest", type=Path)
    _add_scorer_args(p, default="clic")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("icd", help="complexity histogram and normal fit")
    p.add_argument("manifest", type=Path, help="scored manifest (or use --scorer)")
    _add_scorer_args(p)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_icd)

    p = sub.add_parser("stratify", help="split a scored manifest into low/mid/high strata")
    p.add_argument("manifest", type=Path)
    _add_scorer_args(p)
    p.add_argument("--lo", type=float, default=0.3)
    p.add_argument("--hi", type=float, default=0.7)
    p.add_argument("--out-dir", type=Path, required=True)
    p.set_defaults(func=cmd_stratify)

    p = sub.add_parser("fewshot", help="fine-tuning curve over sample counts")
    p.add_argument("manifest", type=Path)
    p.add_argument("--encoder", type=Path, required=True)
    p.add_argument("--ns", type=_ints, default=[10, 100, 1000])
    p.add_argument("--eval-size", type=int, default=None)
    p.add_argument("--out-dir", type=Path, required=True)
    _add_finetune_args(p)
    p.set_defaults(func=cmd_fewshot, head=None)

    p = sub.add_parser("fuse-demo", help="fuse two feature-map blobs")
    p.add_argument("--task", type=Path, required=True)
    p.add_argument("--ic", type=Path, required=True)
    p.add_argument("--weight", type=float, default=0.5)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_fuse_demo)

    # Uniform --seed on every subcommand, even where nothing is random.
    for p in sub.choices.values():
        try:
            p.add_argument("--seed", type=int, default=None, help="unused here; accepted for a uniform CLI")
        except argparse.ArgumentError:
            pass
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, InvalidC, BadThresholds) as exc:
        print(f"clic {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"clic {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
