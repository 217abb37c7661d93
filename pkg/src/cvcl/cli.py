"""Command-line entry point: generate, train, eval, verify, gridsearch.

Exit codes: 0 success, 1 validation error, 2 runtime or numeric failure.
"""
import argparse
import csv
import logging
import math
import os
import sys

import numpy as np

from cvcl.core import OptimizerConfig
from cvcl.data import (
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    normalize,
    save_dataset,
)
from cvcl.errors import (
    CheckpointError,
    ConfigurationError,
    CvclError,
    DatasetFormatError,
    UsageError,
)
from cvcl.losses import LossWeights
from cvcl.metrics import evaluate, predict_labels
from cvcl.model import DEPTH_PRESETS, ModelConfig, load_checkpoint, save_checkpoint
from cvcl.theory import sweep_lower_bound, verify_strict_alignment_minimality
from cvcl.trainer import TrainConfig, run_full

log = logging.getLogger("cvcl")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
GRID_DEFAULT = "0.005,0.01,0.05"
ALIGNMENT_SIZES = ([1, 1, 1], [2, 3, 4], [5, 5, 5])


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s):
    return [int(x) for x in str(s).split(",") if x.strip()]


def _float_list(s):
    return [float(x) for x in str(s).split(",") if x.strip()]


# key -> parser; every key a run config may contain
RUN_KEYS = {
    "data": str,
    "out": str,
    "normalize": str,
    "depth": int,
    "hidden": _int_list,
    "r1": int,
    "r2": int,
    "head_relu": _bool,
    "head_init_scale": float,
    "dtype": str,
    "pretrain_epochs": int,
    "finetune_epochs": int,
    "batch_size": int,
    "optimizer": str,
    "learning_rate": float,
    "momentum": float,
    "weight_decay": float,
    "alpha": float,
    "beta": float,
    "tau": float,
    "seed": int,
    "detach_target": _bool,
    "mean_recon": _bool,
    "clip_norm": float,
    "label_source": str,
    "full_target": _bool,
    # synthetic data, used when no data path is given
    "views": int,
    "clusters": int,
    "per_cluster": int,
    "dims": _int_list,
    "sigma": float,
    "sep": float,
    "disagreement": float,
    "data_seed": int,
}


def read_config(path):
    """Flat ``key = value`` text; ``#`` starts a comment."""
    cfg = {}
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key] = (value, f"{path}:{lineno}")
    return cfg


def parse_run_config(raw):
    """Map of key -> (text, origin) into typed values; unknown keys rejected."""
    out = {}
    for key, (text, origin) in raw.items():
        if key not in RUN_KEYS:
            raise ConfigurationError(f"{origin}: unknown key {key!r}")
        try:
            out[key] = RUN_KEYS[key](text)
        except ValueError as exc:
            raise ConfigurationError(f"{origin}: bad value for {key!r}: {exc}") from None
    return out


def build_configs(cfg):
    if "hidden" in cfg and "depth" in cfg:
        raise ConfigurationError("give either 'hidden' or 'depth', not both")
    if "hidden" in cfg:
        hidden = tuple(cfg["hidden"])
    elif cfg.get("depth", 3) in DEPTH_PRESETS:
        hidden = DEPTH_PRESETS[cfg.get("depth", 3)]
    else:
        raise ConfigurationError(f"depth must be one of {sorted(DEPTH_PRESETS)}")
    model_cfg = ModelConfig(
        hidden=hidden,
        r1=cfg.get("r1", ModelConfig.r1),
        r2=cfg.get("r2", ModelConfig.r2),
        head_relu=cfg.get("head_relu", False),
        head_init_scale=cfg.get("head_init_scale", ModelConfig.head_init_scale),
        dtype=cfg.get("dtype", "float64"),
    )
    model_cfg.validate()
    defaults = OptimizerConfig()
    opt = OptimizerConfig(
        method=cfg.get("optimizer", defaults.method),
        learning_rate=cfg.get("learning_rate", defaults.learning_rate),
        momentum=cfg.get("momentum", defaults.momentum),
        weight_decay=cfg.get("weight_decay", defaults.weight_decay),
    )
    w = LossWeights()
    train_cfg = TrainConfig(
        pretrain_epochs=cfg.get("pretrain_epochs", TrainConfig.pretrain_epochs),
        finetune_epochs=cfg.get("finetune_epochs", TrainConfig.finetune_epochs),
        batch_size=cfg.get("batch_size", TrainConfig.batch_size),
        optimizer=opt,
        weights=LossWeights(cfg.get("alpha", w.alpha), cfg.get("beta", w.beta), cfg.get("tau", w.tau)),
        seed=cfg.get("seed", 0),
        detach_target=cfg.get("detach_target", False),
        mean_recon=cfg.get("mean_recon", False),
        clip_norm=cfg.get("clip_norm", 0.0),
    )
    source = cfg.get("label_source", "P")
    if source not in ("P", "H"):
        raise ConfigurationError("label_source must be P or H")
    predict_kw = {"source": source, "full_target": cfg.get("full_target", False)}
    return model_cfg, train_cfg, predict_kw


def synthetic_spec(views, clusters, per_cluster, dims, sigma, sep, disagreement, seed):
    if dims is not None and len(dims) != views:
        raise ConfigurationError(f"--dims lists {len(dims)} widths but --views is {views}")
    spec = SyntheticSpec(
        n_views=views,
        n_clusters=clusters,
        samples_per_cluster=per_cluster,
        dims_per_view=list(dims) if dims is not None else [10 + 2 * v for v in range(views)],
        center_separation=sep,
        noise_sigma=sigma,
        view_disagreement=disagreement,
        seed=seed,
    )
    spec.validate()
    return spec


def load_run_dataset(cfg):
    if "data" in cfg:
        ds = load_dataset(cfg["data"])
    else:
        views = cfg.get("views", 2)
        spec = synthetic_spec(
            views, cfg.get("clusters", 3), cfg.get("per_cluster", 100), cfg.get("dims"),
            cfg.get("sigma", 0.3), cfg.get("sep", 4.0), cfg.get("disagreement", 0.0),
            cfg.get("data_seed", 0),
        )
        ds = generate_synthetic(spec)
    mode = cfg.get("normalize", "minmax")
    return normalize(ds, mode), mode


def write_labels(path, labels):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.writelines(f"{int(x)}\n" for x in labels)


def write_metrics(path, metrics):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(metrics.as_line() + "\n")


# --- commands -----------------------------------------------------------------


def cmd_generate(args):
    dims = _int_list(args.dims) if args.dims else None
    spec = synthetic_spec(args.views, args.clusters, args.per_cluster, dims, args.sigma,
                          args.sep, args.disagreement, args.seed)
    ds = generate_synthetic(spec)
    save_dataset(ds, args.out)
    print(f"N={ds.n_samples} views={ds.n_views} K={ds.n_clusters} dims={','.join(map(str, ds.dims))}")
    return EXIT_OK


def _overrides(args):
    pairs = {
        "data": args.data, "out": args.out, "pretrain_epochs": args.pretrain_epochs,
        "finetune_epochs": args.finetune_epochs, "batch_size": args.batch_size,
        "learning_rate": args.lr, "alpha": getattr(args, "alpha", None),
        "beta": getattr(args, "beta", None), "tau": args.tau, "seed": args.seed,
        "depth": args.depth, "normalize": args.normalize,
    }
    raw = {k: (str(v), f"--{k.replace('_', '-')}") for k, v in pairs.items() if v is not None}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        raw[k] = (v, "--set")
    return raw


def gather_run_config(args):
    raw = read_config(args.config) if args.config else {}
    raw.update(_overrides(args))
    cfg = parse_run_config(raw)
    if "out" not in cfg:
        raise ConfigurationError("missing required key 'out' (output directory)")
    return cfg


def train_once(cfg):
    ds, mode = load_run_dataset(cfg)
    model_cfg, train_cfg, predict_kw = build_configs(cfg)
    model, report, labels, metrics = run_full(ds, model_cfg, train_cfg, predict_kw)
    return ds, mode, model, report, labels, metrics, train_cfg, predict_kw


def cmd_train(args):
    cfg = gather_run_config(args)
    ds, mode, model, report, labels, metrics, train_cfg, predict_kw = train_once(cfg)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    ckpt = os.path.join(out, "checkpoint.txt")
    save_checkpoint(model, ckpt, extra={
        "normalize": mode,
        "batch_size": train_cfg.batch_size,
        "label_source": predict_kw["source"],
        "full_target": int(predict_kw["full_target"]),
    })
    report.checkpoint = ckpt
    report.write_csv(os.path.join(out, "trace.csv"))
    write_labels(os.path.join(out, "labels.txt"), labels)
    if metrics is not None:
        write_metrics(os.path.join(out, "metrics.txt"), metrics)
        print(metrics.as_line())
    print(f"wrote {out} ({report.wall_time:.1f}s)")
    return EXIT_OK


def cmd_eval(args):
    model, header = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    if list(ds.dims) != model.dims:
        raise ConfigurationError(
            f"dataset view widths {ds.dims} do not match checkpoint widths {model.dims}"
        )
    if ds.n_clusters != model.n_clusters:
        raise ConfigurationError(
            f"dataset has {ds.n_clusters} clusters, checkpoint was trained for {model.n_clusters}"
        )
    ds = normalize(ds, header.get("normalize", "minmax"))
    batch = args.batch_size or int(header.get("batch_size", 128))
    labels = predict_labels(
        model, ds, batch_size=batch, source=header.get("label_source", "P"),
        full_target=bool(int(header.get("full_target", 0))),
    )
    os.makedirs(args.out, exist_ok=True)
    write_labels(os.path.join(args.out, "labels.txt"), labels)
    if ds.labels is not None:
        metrics = evaluate(labels, ds.labels, ds.n_clusters)
        write_metrics(os.path.join(args.out, "metrics.txt"), metrics)
        print(metrics.as_line())
    else:
        print(f"wrote {len(labels)} labels (dataset has no ground truth)")
    return EXIT_OK


def cmd_verify(args):
    if args.trials < 1:
        raise ConfigurationError("--trials must be at least 1")
    if args.k_min < 1 or args.k_max < args.k_min or args.m_min < 1 or args.m_max < args.m_min:
        raise ConfigurationError("empty or invalid K/m range")
    taus = _float_list(args.taus)
    if not taus or any(t <= 0 for t in taus):
        raise ConfigurationError("--taus must be positive")
    lines = []
    sweep = sweep_lower_bound(range(args.k_min, args.k_max + 1), range(args.m_min, args.m_max + 1),
                           taus, args.trials, seed=args.seed)
    lines.append(f"bound checks={sweep.checks} violations={len(sweep.violations)} "
                 f"min_margin={sweep.min_margin!r}")
    for v in sweep.violations[:10]:
        lines.append(f"  violation {v}")
    ok = sweep.ok
    for sizes in ALIGNMENT_SIZES:
        for tau in (0.5, 1.0):
            rep = verify_strict_alignment_minimality(sizes, tau, args.alignment_trials, seed=args.seed)
            ok &= rep.aligned_is_minimum
            lines.append(
                f"alignment sizes={','.join(map(str, sizes))} tau={tau} aligned={rep.aligned_loss!r} "
                f"min_same={rep.min_perturbed_same!r} min_cross={rep.min_perturbed_cross!r} "
                f"{'ok' if rep.aligned_is_minimum else 'VIOLATED'}"
            )
    lines.append("PASS" if ok else "FAIL")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_gridsearch(args):
    base = gather_run_config(args)
    alphas, betas = _float_list(args.alphas), _float_list(args.betas)
    if not alphas or not betas:
        raise ConfigurationError("alpha and beta grids must be non-empty")
    ds, _ = load_run_dataset(base)
    if ds.labels is None:
        raise ConfigurationError("gridsearch needs a labeled dataset")
    os.makedirs(base["out"], exist_ok=True)
    path = os.path.join(base["out"], "grid.csv")
    failures = 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["alpha", "beta", "acc", "nmi", "purity"])
        for a in alphas:
            for b in betas:
                try:
                    model_cfg, train_cfg, predict_kw = build_configs({**base, "alpha": a, "beta": b})
                    _, _, _, m = run_full(ds, model_cfg, train_cfg, predict_kw)
                    row = [m.acc, m.nmi, m.purity]
                except (CvclError, FloatingPointError) as exc:
                    failures += 1
                    log.error("cell alpha=%r beta=%r failed: %s", a, b, exc)
                    row = [math.nan] * 3
                w.writerow([repr(a), repr(b), *(repr(float(x)) for x in row)])
                f.flush()
                print(f"alpha={a!r} beta={b!r} acc={row[0]:.4f} nmi={row[1]:.4f} purity={row[2]:.4f}")
    print(f"wrote {path}")
    return EXIT_RUNTIME if failures else EXIT_OK


# --- parser -------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_run_flags(p, grid=False):
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--data", help="dataset directory (omit to use synthetic keys)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--pretrain-epochs", type=int)
    p.add_argument("--finetune-epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    if not grid:
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--normalize", choices=["minmax", "zscore", "none"])
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="any config key")


def build_parser():
    parser = _Parser(prog="cvcl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic multiview dataset")
    g.add_argument("--views", type=int, default=2)
    g.add_argument("--clusters", type=int, default=3)
    g.add_argument("--per-cluster", type=int, default=100)
    g.add_argument("--dims", help="comma-separated width per view")
    g.add_argument("--sigma", type=float, default=0.3)
    g.add_argument("--sep", type=float, default=4.0)
    g.add_argument("--disagreement", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="pretrain, fine-tune, predict and score")
    _add_run_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="predict labels with a saved checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--batch-size", type=int)
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="numerical checks of the contrastive lower bound and alignment")
    v.add_argument("--k-min", type=int, default=2)
    v.add_argument("--k-max", type=int, default=6)
    v.add_argument("--m-min", type=int, default=4)
    v.add_argument("--m-max", type=int, default=32)
    v.add_argument("--taus", default="0.2,0.5,1")
    v.add_argument("--trials", type=int, default=1000)
    v.add_argument("--alignment-trials", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="also write the report here")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("gridsearch", help="train once per (alpha, beta) cell")
    _add_run_flags(s, grid=True)
    s.add_argument("--alphas", default=GRID_DEFAULT)
    s.add_argument("--betas", default=GRID_DEFAULT)
    s.set_defaults(func=cmd_gridsearch)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            return args.func(args)
    except (ConfigurationError, UsageError, DatasetFormatError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CvclError, FloatingPointError, OSError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
