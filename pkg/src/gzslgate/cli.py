"""Command line front end.

Commands: synth, train, tune, eval, gate-stats. Every command writes its
outputs under --out with fixed file names (model.gae, tune.tsv,
report.json, scores.tsv, loss.tsv, manifest.json) and records a run
manifest sufficient to reproduce the run: pass a previous manifest.json
to --config and the saved flag values are reused (explicit flags still
win). Exit codes: 2 bad configuration, 3 bad data, 4 numeric failure,
5 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .autoencoder import TrainConfig, train
from .checkpoint import load_model, save_model
from .data import SynthSpec, generate_synthetic, load_bundle, save_bundle
from .errors import ConfigError, DataError, GzslError
from .experts import ClassifierConfig
from .gating import GateConfig, SCORE_FEATURES, build_banks
from .metrics import evaluate_gzsl
from .pipeline import (
    GatedPredictor,
    SEEN_EXPERTS,
    TuneGrids,
    retrain_final,
    tune,
)

SCORE_COLUMNS = ("query_index", "true_class", "log_d_latent_s",
                 "log_d_latent_u", "d_cross_s", "d_cross_u", "r_latent",
                 "r_cross", "r_all", "route")


def parse_grid(value) -> list:
    """Grid flag: a scalar, a comma list "0.01,0.05", or a range "a:b:step"
    (inclusive of b up to float rounding)."""
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    text = str(value).strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError("range grid needs start:stop:step")
            start, stop, step = parts
            if step <= 0:
                raise ValueError("grid step must be > 0")
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            if n < 1:
                raise ValueError("empty grid range")
            return [round(start + k * step, 12) for k in range(n)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError as e:
        raise ConfigError(f"bad grid {value!r}: {e}") from e


def _load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid config JSON ({e})") from e
    if isinstance(doc, dict) and isinstance(doc.get("config"), dict):
        doc = doc["config"]   # accept a previous run manifest directly
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def _resolve(args, defaults: dict) -> dict:
    """Flags override the config file; the config file overrides defaults."""
    file_cfg = _load_config(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key, default in defaults.items():
        v = getattr(args, key, None)
        if v is None:
            v = file_cfg.get(key, default)
        out[key] = v
    return out


def _write_manifest(out_dir: Path, command: list, cfg: dict, seed,
                    bundle_checksums, hyperparameters=None, report=None,
                    wall_clock=None, name="manifest.json") -> None:
    manifest = {
        "tool_version": __version__,
        "command": command,
        "config": cfg,
        "seed": seed,
        "bundle_checksums": bundle_checksums,
        "hyperparameters": hyperparameters,
        "report": report,
        "wall_clock_sec": wall_clock,
    }
    (out_dir / name).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _bundle_checksums(bundle_dir) -> dict:
    manifest_path = Path(bundle_dir) / "manifest.json"
    if manifest_path.is_file():
        return json.loads(manifest_path.read_text()).get("checksums", {})
    return {}


def _write_scores_tsv(path, query_indices, true_classes, scores, routes) -> None:
    lines = ["\t".join(SCORE_COLUMNS)]
    for qi, tc, s, route in zip(query_indices, true_classes, scores, routes):
        lines.append("\t".join([
            str(int(qi)), str(int(tc)),
            repr(s.log_d_latent_s), repr(s.log_d_latent_u),
            repr(s.d_cross_s), repr(s.d_cross_u),
            repr(s.r_latent), repr(s.r_cross), repr(s.r_all),
            str(route),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def _train_cfg_from(cfg: dict) -> TrainConfig:
    return TrainConfig(alpha=cfg.get("alpha") or 0.05, lr=cfg["lr"],
                       epochs=cfg["epochs"], batch_size=cfg["batch_size"],
                       dim_z=cfg["dim_z"], hidden_v=cfg["hidden"],
                       hidden_a=cfg["hidden"], seed=cfg["seed"])


def cmd_synth(args) -> int:
    cfg = _resolve(args, {
        "out": None, "classes_seen": 10, "classes_unseen": 5,
        "dim_v": 32, "dim_a": 16, "samples_per_class": 50,
        "separation": 6.0, "attr_noise": 0.0, "seed": 0,
    })
    if not cfg["out"]:
        raise ConfigError("synth needs --out")
    t0 = time.perf_counter()
    spec = SynthSpec(
        n_seen=int(cfg["classes_seen"]), n_unseen=int(cfg["classes_unseen"]),
        dim_v=int(cfg["dim_v"]), dim_a=int(cfg["dim_a"]),
        samples_per_class=int(cfg["samples_per_class"]),
        separation=float(cfg["separation"]),
        attr_noise=float(cfg["attr_noise"]), seed=int(cfg["seed"]))
    bundle = generate_synthetic(spec)
    out = Path(cfg["out"])
    save_bundle(bundle, out)
    # manifest.json in a bundle directory belongs to the bundle format, so
    # the run manifest gets its own name here
    _write_manifest(out, sys.argv[1:], cfg, cfg["seed"],
                    _bundle_checksums(out),
                    wall_clock=time.perf_counter() - t0,
                    name="run_manifest.json")
    print(f"wrote bundle: {out} ({bundle.n_samples} samples, "
          f"{bundle.n_classes} classes)")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(args, {
        "bundle": None, "out": None, "alpha": 0.05, "lr": 1.5e-4,
        "epochs": 100, "batch_size": 64, "dim_z": 64, "hidden": 512,
        "seed": 0,
    })
    if not cfg["bundle"] or not cfg["out"]:
        raise ConfigError("train needs --bundle and --out")
    t0 = time.perf_counter()
    bundle = load_bundle(cfg["bundle"])
    ae, trace = train(bundle, _train_cfg_from(cfg))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model.gae", ae)
    (out / "loss.tsv").write_text(
        "epoch\tloss\n"
        + "\n".join(f"{i}\t{v!r}" for i, v in enumerate(trace)) + "\n")
    _write_manifest(out, sys.argv[1:], cfg, cfg["seed"],
                    _bundle_checksums(cfg["bundle"]),
                    hyperparameters={"alpha": cfg["alpha"]},
                    wall_clock=time.perf_counter() - t0)
    print(f"trained {cfg['epochs']} epochs; final loss {trace[-1]:.4f}; "
          f"model at {out / 'model.gae'}")
    return 0


def cmd_tune(args) -> int:
    cfg = _resolve(args, {
        "bundle": None, "out": None,
        "alpha": "0.01:0.10:0.01", "beta": "0,0.001,0.01,0.1,1,10,100",
        "tau": None,
        "lr": 1.5e-4, "epochs": 100, "batch_size": 64, "dim_z": 64,
        "hidden": 512, "seed": 0, "score": "all", "expert_seen": "linear",
        "clf_epochs": 50,
    })
    if not cfg["bundle"] or not cfg["out"]:
        raise ConfigError("tune needs --bundle and --out")
    if cfg["score"] not in SCORE_FEATURES:
        raise ConfigError(f"--score must be one of {SCORE_FEATURES}")
    if cfg["expert_seen"] not in SEEN_EXPERTS:
        raise ConfigError(f"--expert-seen must be one of {SEEN_EXPERTS}")
    t0 = time.perf_counter()
    bundle = load_bundle(cfg["bundle"])
    grids = TuneGrids(
        alphas=tuple(parse_grid(cfg["alpha"])),
        betas=tuple(parse_grid(cfg["beta"])),
        taus=tuple(parse_grid(cfg["tau"])) if cfg["tau"] is not None else None,
    )
    train_cfg = _train_cfg_from(cfg)
    clf_cfg = ClassifierConfig(epochs=int(cfg["clf_epochs"]), seed=cfg["seed"])
    result = tune(bundle, grids, train_cfg, clf_cfg, score_feature=cfg["score"])
    predictor = retrain_final(bundle, result, train_cfg, clf_cfg,
                              score_feature=cfg["score"],
                              seen_expert=cfg["expert_seen"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "tune.tsv").write_text(result.trace_tsv())
    save_model(out / "model.gae", predictor.ae, predictor.seen_clf)
    chosen = {"alpha": result.best_alpha, "beta": result.best_beta,
              "tau": result.best_tau, "val_harmonic": result.val_harmonic}
    _write_manifest(out, sys.argv[1:], cfg, cfg["seed"],
                    _bundle_checksums(cfg["bundle"]),
                    hyperparameters=chosen,
                    wall_clock=time.perf_counter() - t0)
    print(f"best alpha={result.best_alpha} beta={result.best_beta} "
          f"tau={result.best_tau} (val H={result.val_harmonic:.4f})")
    return 0


def _load_predictor(cfg: dict, bundle) -> GatedPredictor:
    model_path = Path(cfg["model"])
    if not model_path.is_file():
        raise DataError(f"{model_path}: checkpoint not found")
    ae, clf = load_model(model_path)
    beta, tau = cfg["beta"], cfg["tau"]
    if beta is None or tau is None:
        sibling = model_path.parent / "manifest.json"
        if sibling.is_file():
            hp = json.loads(sibling.read_text()).get("hyperparameters") or {}
            beta = hp.get("beta") if beta is None else beta
            tau = hp.get("tau") if tau is None else tau
    if beta is None or tau is None:
        raise ConfigError("need --beta and --tau (or a tune manifest next to "
                          "the model)")
    if clf is None and cfg.get("expert_seen", "linear") == "linear" \
            and not cfg.get("no_gating"):
        raise DataError(f"{model_path}: no seen-classifier block; train with "
                        f"`tune` or use --expert-seen 1nn")
    s = bundle.splits
    seen = np.asarray(sorted(s.seen_classes), dtype=np.int64)
    unseen = np.asarray(sorted(s.unseen_classes), dtype=np.int64)
    banks = build_banks(ae, bundle.A[seen], bundle.A[unseen],
                        seen_class_ids=seen, unseen_class_ids=unseen)
    return GatedPredictor(
        ae=ae, banks=banks, seen_clf=clf,
        gate_cfg=GateConfig(beta=float(beta), tau=float(tau)),
        score_feature=cfg.get("score", "all"),
        seen_expert=cfg.get("expert_seen", "linear"),
        no_gating=bool(cfg.get("no_gating")),
    )


def _test_rows(bundle):
    s = bundle.splits
    idx = np.concatenate([s.test_seen_idx, s.test_unseen_idx])
    return idx, bundle.y[idx]


def cmd_eval(args) -> int:
    cfg = _resolve(args, {
        "bundle": None, "model": None, "out": None, "beta": None, "tau": None,
        "score": "all", "expert_seen": "linear", "no_gating": False,
        "seed": 0,
    })
    for key in ("bundle", "model", "out"):
        if not cfg[key]:
            raise ConfigError(f"eval needs --{key}")
    if cfg["score"] not in SCORE_FEATURES:
        raise ConfigError(f"--score must be one of {SCORE_FEATURES}")
    t0 = time.perf_counter()
    bundle = load_bundle(cfg["bundle"])
    predictor = _load_predictor(cfg, bundle)
    report = evaluate_gzsl(predictor, bundle)

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    idx, truths = _test_rows(bundle)
    rows = predictor.predict_rows(bundle.X[idx])
    _write_scores_tsv(out / "scores.tsv", idx, truths, rows.scores, rows.routes)
    _write_manifest(out, sys.argv[1:], cfg, cfg["seed"],
                    _bundle_checksums(cfg["bundle"]),
                    hyperparameters={"beta": predictor.gate_cfg.beta,
                                     "tau": predictor.gate_cfg.tau},
                    report=report.to_dict(),
                    wall_clock=time.perf_counter() - t0)
    print(report.table(), end="")
    return 0


def cmd_gate_stats(args) -> int:
    cfg = _resolve(args, {
        "bundle": None, "model": None, "out": None, "beta": None, "tau": None,
        "score": "all", "expert_seen": "1nn", "no_gating": False, "seed": 0,
    })
    for key in ("bundle", "model", "out"):
        if not cfg[key]:
            raise ConfigError(f"gate-stats needs --{key}")
    t0 = time.perf_counter()
    bundle = load_bundle(cfg["bundle"])
    predictor = _load_predictor(cfg, bundle)
    idx, truths = _test_rows(bundle)
    rows = predictor.predict_rows(bundle.X[idx])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_scores_tsv(out / "scores.tsv", idx, truths, rows.scores, rows.routes)
    _write_manifest(out, sys.argv[1:], cfg, cfg["seed"],
                    _bundle_checksums(cfg["bundle"]),
                    hyperparameters={"beta": predictor.gate_cfg.beta,
                                     "tau": predictor.gate_cfg.tau},
                    wall_clock=time.perf_counter() - t0)
    print(f"wrote {out / 'scores.tsv'} ({len(idx)} queries)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gzslgate",
        description="Gated generalized zero-shot learning pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file (or a previous "
                       "run manifest); flags override it")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic bundle")
    add_common(p)
    p.add_argument("--classes-seen", type=int, default=None)
    p.add_argument("--classes-unseen", type=int, default=None)
    p.add_argument("--dim-v", type=int, default=None)
    p.add_argument("--dim-a", type=int, default=None)
    p.add_argument("--samples-per-class", type=int, default=None)
    p.add_argument("--separation", type=float, default=None)
    p.add_argument("--attr-noise", type=float, default=None)
    p.set_defaults(func=cmd_synth)

    def add_train_flags(p):
        p.add_argument("--bundle", default=None, help="bundle directory")
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch-size", type=int, default=None)
        p.add_argument("--dim-z", type=int, default=None)
        p.add_argument("--hidden", type=int, default=None)

    p = sub.add_parser("train", help="train the autoencoder only")
    add_common(p)
    add_train_flags(p)
    p.add_argument("--alpha", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="grid-search alpha/beta/tau, retrain, "
                       "and save the final model")
    add_common(p)
    add_train_flags(p)
    p.add_argument("--alpha", default=None, help="grid: scalar, list, or a:b:step")
    p.add_argument("--beta", default=None, help="grid: scalar, list, or a:b:step")
    p.add_argument("--tau", default=None,
                   help="explicit grid (default: validation score quantiles)")
    p.add_argument("--score", choices=SCORE_FEATURES, default=None)
    p.add_argument("--expert-seen", choices=SEEN_EXPERTS, default=None)
    p.add_argument("--clf-epochs", type=int, default=None)
    p.set_defaults(func=cmd_tune)

    def add_eval_flags(p):
        p.add_argument("--bundle", default=None, help="bundle directory")
        p.add_argument("--model", default=None, help="model.gae checkpoint")
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--score", choices=SCORE_FEATURES, default=None)
        p.add_argument("--expert-seen", choices=SEEN_EXPERTS, default=None)

    p = sub.add_parser("eval", help="evaluate a model on the test partitions")
    add_common(p)
    add_eval_flags(p)
    p.add_argument("--no-gating", action="store_const", const=True,
                   default=None, help="1-NN over all classes, no gate")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gate-stats", help="dump per-query gate scores")
    add_common(p)
    add_eval_flags(p)
    p.set_defaults(func=cmd_gate_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GzslError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
