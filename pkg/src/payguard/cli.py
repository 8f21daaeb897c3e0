"""Command line frontend.

Subcommands: gen-data, train, score, experiment {cross-time|patterns|
sparsity}, inspect-ckpt. Every command that takes --seed is end-to-end
reproducible; the resolved configuration is echoed into the output
directory so any run can be repeated from its artifacts alone.

Exit codes: 0 ok, 2 bad parameters/usage, 3 unwritable output,
4 data/schema error, 5 training diverged, 6 checkpoint error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import evaluation
from .autodiff import ContractError
from .data import (ConfigError, GeneratorConfig, PatternLabel, RowError,
                   SchemaError, SplitError, encode_all, fit_stats,
                   generate_synthetic, load_paysim_csv, write_synthetic_csv)
from .evaluation import (format_report_table, report_row, roc_auc,
                         run_cross_time, run_pattern_breakdown,
                         run_sparsity_sweep, write_report_csv)
from .networks import ModelBundle
from .rng import DeterministicRng
from .scoring import (CalibrationError, ScoreWeights, calibrate_threshold,
                      fit_recon_scale, score_batch)
from .training import (CheckpointError, TrainConfig, TrainingDiverged,
                       load_checkpoint, save_checkpoint, train_gan,
                       train_joint, train_vae, write_trace_csv)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_UNWRITABLE = 3
EXIT_DATA = 4
EXIT_DIVERGED = 5
EXIT_CHECKPOINT = 6

_TRAINERS = {"gan": train_gan, "vae": train_vae, "joint": train_joint}


def _err(msg: str) -> None:
    print(f"payguard: {msg}", file=sys.stderr)


def _load_config_file(path: str) -> dict:
    """Simple key=value config; '#' starts a comment."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _echo_config(out_dir: Path, args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in vars(args).items()
                if k not in ("func", "config") and v is not None}
    lines = [f"{k.replace('_', '-')}={v}" for k, v in sorted(resolved.items())]
    (out_dir / "resolved-config.txt").write_text("\n".join(lines) + "\n")


def _ensure_out_dir(path_str: str) -> Path:
    out = Path(path_str)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise PermissionError(f"output directory {out} not writable: {exc}")
    return out


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr_d=args.lr_d,
        lr_g=args.lr_g, lr_vae=args.lr_vae, lam=args.lam,
        d_steps_per_g_step=args.d_steps, seed=args.seed,
        generator_objective=args.generator_objective)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr-d", type=float, default=2e-4)
    p.add_argument("--lr-g", type=float, default=2e-4)
    p.add_argument("--lr-vae", type=float, default=1e-3)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--d-steps", type=int, default=3,
                   help="discriminator steps per generator step")
    p.add_argument("--generator-objective", default="non-saturating",
                   choices=["non-saturating", "minimax"])


# -- commands -----------------------------------------------------------------

def cmd_gen_data(args) -> int:
    config = GeneratorConfig(
        n_accounts=args.accounts, n_steps=args.steps, n_records=args.records,
        fraud_rate=args.fraud_rate, laundering_rate=args.laundering_rate,
        seed=args.seed)
    try:
        config.validate()
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_USAGE
    records = generate_synthetic(config)
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_synthetic_csv(records, out)
    except OSError as exc:
        _err(f"cannot write {out}: {exc}")
        return EXIT_UNWRITABLE
    counts = {label.value: 0 for label in PatternLabel}
    for r in records:
        counts[r.label.value] += 1
    summary = {"rows": len(records), "label_counts": counts,
               "seed": args.seed, "output": str(out)}
    summary_path = out.with_suffix(out.suffix + ".summary.json")
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        records = load_paysim_csv(args.data)
    except (SchemaError, RowError, OSError) as exc:
        _err(str(exc))
        return EXIT_DATA
    if not records:
        _err(f"{args.data}: no records")
        return EXIT_DATA
    try:
        out = _ensure_out_dir(args.out_dir)
    except PermissionError as exc:
        _err(str(exc))
        return EXIT_UNWRITABLE
    config = _train_config(args)
    stats = fit_stats(records)
    normal = [r for r in records if not r.label.suspicious] or records
    features = encode_all(normal, stats)
    bundle = ModelBundle.create(d_x=features.shape[1],
                                rng=DeterministicRng(config.seed))
    try:
        bundle, trace = _TRAINERS[args.model](bundle, features, config)
    except TrainingDiverged as exc:
        _err(str(exc))
        return EXIT_DIVERGED
    save_checkpoint(bundle, stats, config, out / "model.ckpt")
    write_trace_csv(trace, out / "trace.csv")
    _echo_config(out, args)
    if trace:
        last = trace[-1]
        print(f"final losses: l_gan={last.l_gan:.6f} l_vae={last.l_vae:.6f} "
              f"l_joint={last.l_joint:.6f}")
    else:
        print("no epochs run; initial parameters checkpointed")
    return EXIT_OK


def cmd_score(args) -> int:
    try:
        ckpt = load_checkpoint(args.ckpt)
    except (CheckpointError, OSError) as exc:
        _err(str(exc))
        return EXIT_CHECKPOINT
    try:
        records = load_paysim_csv(args.data)
    except (SchemaError, RowError, OSError) as exc:
        _err(str(exc))
        return EXIT_DATA
    if not records:
        _err(f"{args.data}: no records")
        return EXIT_DATA
    stats = ckpt.stats if ckpt.stats is not None else fit_stats(records)
    features = encode_all(records, stats)
    labels = [r.label.suspicious for r in records]
    recon_scale = args.recon_scale
    if recon_scale is None:
        normals = features[np.array([not l for l in labels])]
        recon_scale = fit_recon_scale(ckpt.bundle, normals)
    weights = ScoreWeights(alpha=args.alpha, recon_scale=recon_scale)
    values, d_parts, r_parts = score_batch(ckpt.bundle, weights, features)
    theta = args.theta
    if theta is None:
        try:
            cal = calibrate_threshold(list(zip(values.tolist(), labels)))
        except CalibrationError as exc:
            _err(f"cannot auto-calibrate: {exc}; pass --theta")
            return EXIT_USAGE
        theta = cal.theta
        print(f"calibrated theta={theta!r} (validation F1={cal.f1:.4f})")
    try:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("id,score,d_part,r_part,verdict\n")
            for i, (v, d, r) in enumerate(zip(values, d_parts, r_parts)):
                verdict = "suspicious" if v >= theta else "normal"
                fh.write(f"{i},{v!r},{d!r},{r!r},{verdict}\n")
    except OSError as exc:
        _err(f"cannot write {args.out}: {exc}")
        return EXIT_UNWRITABLE
    flagged = int(np.sum(values >= theta))
    print(f"scored {len(values)} rows, {flagged} suspicious at theta={theta!r}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        records = load_paysim_csv(args.data)
    except (SchemaError, RowError, OSError) as exc:
        _err(str(exc))
        return EXIT_DATA
    try:
        out = _ensure_out_dir(args.out_dir)
    except PermissionError as exc:
        _err(str(exc))
        return EXIT_UNWRITABLE
    config = _train_config(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    rows: list[dict] = []
    try:
        if args.protocol == "cross-time":
            for model in args.models.split(","):
                kind = {"gan": "gan-only", "vae": "vae-only",
                        "joint": "joint"}.get(model)
                if kind is None:
                    _err(f"unknown model {model!r}")
                    return EXIT_USAGE
                for seed in seeds:
                    rep = run_cross_time(records, args.train_fraction, kind,
                                         replace(config, seed=seed))
                    rows.append(report_row("cross-time", model, seed, None, rep))
        elif args.protocol == "patterns":
            for seed in seeds:
                breakdown = run_pattern_breakdown(
                    records, replace(config, seed=seed), args.train_fraction)
                for label, rep in breakdown.items():
                    rows.append(report_row("patterns", label.value.lower(),
                                           seed, None, rep))
        else:  # sparsity
            levels = [float(v) for v in args.levels.split(",")]
            result = run_sparsity_sweep(records, levels, seeds, config,
                                        args.train_fraction)
            for point in result.points:
                rows.append(report_row("sparsity", "joint", point.seed,
                                       point.level, point.report))
    except (SplitError, ContractError) as exc:
        _err(str(exc))
        return EXIT_DATA
    except TrainingDiverged as exc:
        _err(str(exc))
        return EXIT_DIVERGED
    write_report_csv(rows, out / "report.csv")
    (out / "report.json").write_text(
        json.dumps(rows, indent=2, sort_keys=True) + "\n")
    _echo_config(out, args)
    print(format_report_table(rows))
    return EXIT_OK


def cmd_inspect_ckpt(args) -> int:
    try:
        ckpt = load_checkpoint(args.ckpt)
    except (CheckpointError, OSError) as exc:
        _err(str(exc))
        return EXIT_CHECKPOINT
    bundle = ckpt.bundle
    info = {
        "version": ckpt.version,
        "d_x": bundle.d_x,
        "d_z": bundle.d_z,
        "generator_widths": bundle.gen_spec.layer_widths,
        "discriminator_widths": bundle.disc_spec.layer_widths,
        "encoder_widths": bundle.enc_spec.layer_widths,
        "decoder_widths": bundle.dec_spec.layer_widths,
        "has_stats": ckpt.stats is not None,
        "config": asdict(ckpt.config) if ckpt.config is not None else None,
        "rng_state": ckpt.rng_state,
        "parameter_count": int(sum(
            p.size for group in ("gen", "disc", "enc", "dec")
            for p in getattr(bundle, f"{group}_params"))),
    }
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="payguard",
        description="GAN-VAE suspicious-behavior detection for payment flows")
    parser.add_argument("--config", help="key=value config file; flags override")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a labeled synthetic CSV")
    p.add_argument("--accounts", type=int, default=500)
    p.add_argument("--steps", type=int, default=240)
    p.add_argument("--records", type=int, default=20000)
    p.add_argument("--fraud-rate", type=float, default=0.01)
    p.add_argument("--laundering-rate", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default="joint", choices=sorted(_TRAINERS))
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.add_argument("-o", "--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score transactions with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--theta", type=float, default=None,
                   help="alarm threshold; omitted = auto-calibrate on labels")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--recon-scale", type=float, default=None)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("experiment", help="run an evaluation protocol")
    p.add_argument("protocol", choices=["cross-time", "patterns", "sparsity"])
    p.add_argument("--data", required=True)
    p.add_argument("--models", default="gan,vae,joint",
                   help="cross-time only: comma-separated model kinds")
    p.add_argument("--levels", default="0.1,0.2,0.3,0.4,0.5",
                   help="sparsity only: comma-separated levels")
    p.add_argument("--seeds", default="1,2,3,4,5")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.add_argument("-o", "--out-dir", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("inspect-ckpt", help="print checkpoint metadata")
    p.add_argument("ckpt")
    p.set_defaults(func=cmd_inspect_ckpt)
    parser.subcommand_parsers = dict(sub.choices)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    # first pass only to find --config, so file values can become defaults
    config_path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif tok.startswith("--config="):
            config_path = tok.split("=", 1)[1]
    if config_path:
        try:
            file_values = _load_config_file(config_path)
        except (ConfigError, OSError) as exc:
            _err(str(exc))
            return EXIT_USAGE
        converted = {}
        for key, raw in file_values.items():
            for cast in (int, float):
                try:
                    converted[key] = cast(raw)
                    break
                except ValueError:
                    continue
            else:
                converted[key] = raw
        # defaults set on the root parser are overwritten when a subparser
        # runs, so push file values into every parser that knows the key
        targets = [parser] + list(getattr(parser, "subcommand_parsers", {}).values())
        for target in targets:
            known = {a.dest for a in target._actions}
            target.set_defaults(**{k: v for k, v in converted.items() if k in known})
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
