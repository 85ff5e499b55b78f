"""``cascade-stereo``: data generation, training, inference, evaluation and ablation.

Exit status: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, StereoError, UsageError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
log = logging.getLogger("cascade_stereo")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _config(args):
    from .config import load_config

    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg


# -------------------------------------------------------------- commands
def cmd_gen_data(args) -> int:
    from .synth import dataset_build

    if args.count < 1:
        raise UsageError("--count must be >= 1")
    cfg = _config(args)
    out = Path(args.out)
    dataset_build(cfg.to_scene_config(), args.count, out)
    print(out / "manifest.jsonl")
    return EXIT_OK


def cmd_train(args) -> int:
    from .config import dump_config
    from .model import StereoModel
    from .training import PairDataset, train

    cfg = _config(args)
    if not cfg.data.train_dir:
        raise ConfigError("data.train_dir is not set")
    if not Path(cfg.data.train_dir).is_dir():
        raise FileNotFoundError(f"training data directory {cfg.data.train_dir} not found")
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg))
    tcfg = cfg.to_train_config()
    model = StereoModel(cfg.to_model_config())
    val = PairDataset(directory=cfg.data.val_dir) if cfg.data.val_dir else None
    res = train(model, PairDataset(directory=cfg.data.train_dir), tcfg, val_dataset=val,
                log_path=out / "train_log.jsonl", checkpoint_path=out / "model.ckpt", resume=args.resume)
    last = res.history[-1] if res.history else {}
    print(json.dumps({"checkpoint": res.checkpoint, "steps": len(res.history), "final": last}))
    return EXIT_OK


def _pad_to(img: np.ndarray, m: int) -> tuple[np.ndarray, tuple[int, int]]:
    _, h, w = img.shape
    ph, pw = (-h) % m, (-w) % m
    if ph or pw:
        img = np.pad(img, ((0, 0), (0, ph), (0, pw)), mode="edge")
    return img, (h, w)


def cmd_infer(args) -> int:
    from .io import colorize_disparity, read_png, write_pfm, write_png
    from .model import StereoModel

    if not Path(args.checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint {args.checkpoint} not found")
    left, right = read_png(args.left), read_png(args.right)
    if left.shape != right.shape:
        raise UsageError(f"image sizes differ: left {left.shape[1:]} vs right {right.shape[1:]}")
    model, _, _ = StereoModel.load(args.checkpoint)
    mult = 16 * 2 ** (args.stages - 1)
    lp, (h, w) = _pad_to(left, mult)
    rp, _ = _pad_to(right, mult)
    disp = model.infer(lp[None], rp[None], n_stages=args.stages)[0, 0, :h, :w]
    write_pfm(args.out, disp)
    if args.viz:
        write_png(args.viz, colorize_disparity(disp))
    print(args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .io import read_mask_png, read_pfm
    from .metrics import aggregate, evaluate, write_reports_jsonl
    from .synth import list_scene_indices

    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"directory {d} not found")
    gt_idx = list_scene_indices(gt_dir)
    if not gt_idx:
        raise FileNotFoundError(f"no disp_*.pfm files in {gt_dir}")
    missing = [i for i in gt_idx if not (pred_dir / f"disp_{i:06d}.pfm").exists()]
    if missing:
        raise FileNotFoundError("missing predictions for indices: " + ", ".join(map(str, missing)))
    reports = []
    for i in gt_idx:
        gt = read_pfm(gt_dir / f"disp_{i:06d}.pfm")
        pred = read_pfm(pred_dir / f"disp_{i:06d}.pfm")
        occ_path = gt_dir / f"occ_{i:06d}.png"
        mask = read_mask_png(occ_path) if args.mask == "noc" and occ_path.exists() else None
        reports.append((f"{i:06d}", evaluate(pred, gt, mask, mask_policy=args.mask)))
    total = aggregate([r for _, r in reports])
    if args.out:
        write_reports_jsonl(args.out, reports, total)
    print(json.dumps(total.to_dict()))
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .ablation import run_suite
    from .metrics import write_csv
    from .model import StereoModel
    from .synth import generate_scene

    if not Path(args.checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint {args.checkpoint} not found")
    cfg = _config(args)
    model, _, _ = StereoModel.load(args.checkpoint)
    scene = cfg.to_scene_config()
    ab = cfg.ablation
    train_pairs = None
    if ab.finetune_steps > 0 and args.suite in ("correlation", "cascades"):
        train_pairs = [generate_scene(scene, seed=cfg.seed + i) for i in range(16)]
    rows = run_suite(args.suite, model, scene, ab.eval_count, cfg.seed + ab.eval_seed_offset,
                     finetune_steps=ab.finetune_steps, train_pairs=train_pairs)
    out = Path(args.out)
    write_csv(out, rows)
    print(out)
    return EXIT_OK


# ---------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cascade-stereo", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic stereo dataset")
    g.add_argument("--config")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train from a run config")
    t.add_argument("--config")
    t.add_argument("--out")
    t.add_argument("--seed", type=int)
    t.add_argument("--resume", action="store_true")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="predict disparity for one stereo pair")
    i.add_argument("checkpoint")
    i.add_argument("left")
    i.add_argument("right")
    i.add_argument("--stages", type=int, default=1, choices=(1, 2, 3))
    i.add_argument("--out", required=True)
    i.add_argument("--viz")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score a folder of predictions against ground truth")
    e.add_argument("pred_dir")
    e.add_argument("gt_dir")
    e.add_argument("--mask", choices=("noc", "all"), default="noc")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="run a comparison grid from a trained checkpoint")
    a.add_argument("--config")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--suite", required=True, choices=("correlation", "cascades", "stacked", "disturb"))
    a.add_argument("--out", required=True)
    a.add_argument("--seed", type=int)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("no command given; see --help")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StereoError, OSError, ValueError, MemoryError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
