"""``shieldsim`` command line.

Exit codes: 0 success, 2 integrity violation, 64 usage error, 65 range or
budget error.  Every command prints a canonical JSON report on stdout.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from .attnmult import oam_run
from .campaign import MATMUL_ATTACKS, SOFTMAX_ATTACKS, CampaignConfig, run_trials, summarize
from .field import FieldConfig, FieldError, SeededRng, sample_matrix
from .pipeline import (
    AttentionConfig,
    ModelWeights,
    attention_plain_quantized,
    attention_secure,
    expected_failing_stage,
    random_input,
)
from .quant import RangeOverflow
from .runtime import (
    ExponentRange,
    Honest,
    IntegrityViolation,
    MatmulTamper,
    Session,
    SoftmaxSwap,
    SoftmaxTamperA,
    SoftmaxTamperB,
)
from .report import canonical_json, make_report, write_csv
from .security import seclevel_table
from .softmax import osm_run
from .verify import freivalds_check, uv_matmul_check, uv_matmul_prepare

EXIT_OK, EXIT_INTEGRITY, EXIT_USAGE, EXIT_RANGE = 0, 2, 64, 65
SEED_ENV = "SHIELDSIM_SEED"

ADVERSARIES = {
    "honest": lambda t: Honest(),
    "matmul-single": lambda t: MatmulTamper(target=t, mode="single-entry"),
    "matmul-scale": lambda t: MatmulTamper(target=t, mode="scale-all", magnitude=3),
    "matmul-rowswap": lambda t: MatmulTamper(target=t, mode="row-swap"),
    "softmax-a": lambda t: SoftmaxTamperA(target=t, delta=0.01),
    "softmax-b": lambda t: SoftmaxTamperB(target=t, delta=0.01, relative=True),
    "softmax-swap": lambda t: SoftmaxSwap(target=t),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {v}")
    return v


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if len(vals) < 2 or min(vals) < 1:
        raise argparse.ArgumentTypeError("need at least two positive sizes")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="also write the JSON report to this path")
    common.add_argument("--config", help="JSON file supplying flag defaults")

    p = _Parser(prog="shieldsim", description="Two-party outsourcing simulator for attention layers.")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("demo", parents=[common], help="secure layer versus its quantized reference")
    d.add_argument("--tokens", type=_positive, default=16)
    d.add_argument("--dim", type=_positive, default=32)
    d.add_argument("--heads", type=_positive, default=2)
    d.add_argument("--head-dim", type=_positive, default=None)
    d.add_argument("--l-frac", type=_positive, default=8)
    d.add_argument("--prime", type=_positive, default=FieldConfig().p)
    d.add_argument("--verify", type=_on_off, default=True)
    d.add_argument("--adversary", choices=sorted(ADVERSARIES), default="honest")
    d.add_argument("--target", default=None, help="restrict tampering to one stage tag")
    d.add_argument("--ffn-dim", type=_nonneg, default=0)
    d.add_argument("--layernorm", action="store_true")
    d.add_argument("--residual", action="store_true")

    b = sub.add_parser("bench", parents=[common], help="operation-count size sweep")
    b.add_argument("--sizes", type=_int_list, default=[64, 128, 256])
    b.add_argument("--trials", type=_positive, default=1)
    b.add_argument("--csv", help="write the sweep table as CSV")

    a = sub.add_parser("attack", parents=[common], help="tamper-detection Monte Carlo campaign")
    a.add_argument("--protocol", choices=("softmax", "matmul"), required=True)
    a.add_argument("--attack", choices=sorted(set(MATMUL_ATTACKS) | set(SOFTMAX_ATTACKS)), required=True)
    a.add_argument("--trials", type=_positive, default=1000)
    a.add_argument("--size", type=_positive, default=8, help="square matrix size for matmul campaigns")
    a.add_argument("--length", type=_positive, default=16, help="vector length for softmax campaigns")
    a.add_argument("--delta", type=float, default=1e-6, help="relative perturbation for softmax attacks a, b")
    a.add_argument("--probe", type=_on_off, default=True)
    a.add_argument("--jobs", type=_positive, default=1)

    s = sub.add_parser("seclevel", parents=[common], help="security calculators")
    s.add_argument("--n", type=_positive, default=2)
    s.add_argument("--m", type=_positive, default=128)
    s.add_argument("--L", type=_positive, default=4)
    s.add_argument("--d", type=_nonneg, default=256, help="scalar space size")
    s.add_argument("--d-bits", type=_nonneg, default=None)
    s.add_argument("--k", type=_positive, default=1)

    v = sub.add_parser("verify-compare", parents=[common], help="hash-row check versus Freivalds")
    v.add_argument("--size", type=_positive, default=256)
    return p


def _apply_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Config file supplies defaults; the seed env var overrides the seed default; flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    defaults: dict = {}
    cmd = next((a for a in argv if not a.startswith("-")), None)
    if known.config:
        try:
            with open(known.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {known.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        defaults.update({k.replace("-", "_"): v for k, v in data.items() if not isinstance(v, dict)})
        if cmd and isinstance(data.get(cmd), dict):
            defaults.update({k.replace("-", "_"): v for k, v in data[cmd].items()})
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            defaults["seed"] = int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    if defaults:
        sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        for name, sp in sub.choices.items():
            dests = {act.dest for act in sp._actions}
            sp.set_defaults(**{k: v for k, v in defaults.items() if k in dests})


def _config_echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "config", "command")}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_demo(args) -> tuple[dict, int]:
    if args.target is not None and args.adversary == "honest":
        raise UsageError("--target needs a tampering --adversary")
    cfg = AttentionConfig(N=args.tokens, D=args.dim, H=args.heads, d_h=args.head_dim, l=args.l_frac,
                          verify=args.verify, ffn_dim=args.ffn_dim, layernorm=args.layernorm,
                          residual=args.residual, p=args.prime)
    adv = ADVERSARIES[args.adversary](args.target)
    rng = SeededRng(args.seed)
    w = ModelWeights.random(cfg, rng.spawn(0))
    x = random_input(cfg, rng.spawn(1))
    s = Session(seed=args.seed, cfg=FieldConfig(cfg.p), adversary=adv)
    stats: dict = {}
    t0 = time.perf_counter()
    reference = attention_plain_quantized(x, w, cfg)
    t_ref = time.perf_counter() - t0
    verification = {"enabled": cfg.verify, "passed": True, "failing_stage": None, "detail": "",
                    "expected_failing_stage": expected_failing_stage(adv, cfg) if cfg.verify else None}
    code = EXIT_OK
    err = None
    try:
        out = attention_secure(s, x, w, cfg, stats=stats)
        err = float(np.max(np.abs(out - reference)))
    except IntegrityViolation as exc:
        verification.update(passed=False, failing_stage=exc.stage, detail=exc.detail)
        code = EXIT_INTEGRITY
    rep = make_report(
        "demo", _config_echo(args), args.seed, code,
        layer=cfg.as_dict(),
        adversary=args.adversary,
        max_abs_err=err,
        op_counts=s.snapshot(),
        stages={k: stats[k] for k in sorted(stats)},
        wall_time_s={"secure": sum(v["wall_s"] for v in stats.values()), "reference": t_ref},
        verification=verification,
    )
    return rep, code


def _fit_exponent(sizes, values) -> float | None:
    vals = np.asarray(values, dtype=np.float64)
    if np.any(vals <= 0):
        return None
    slope, _ = np.polyfit(np.log(np.asarray(sizes, dtype=np.float64)), np.log(vals), 1)
    return float(slope)


def bench_rows(sizes, trials: int, seed: int) -> list[dict]:
    rows = []
    for size in sizes:
        rng = SeededRng(seed, (size,))
        walls_oam, walls_osm = [], []
        for t in range(trials):
            s = Session(seed=seed + t)
            q = sample_matrix(size, size, rng, s.cfg)
            kt = sample_matrix(size, size, rng, s.cfg)
            t0 = time.perf_counter()
            oam_run(s, q, kt)
            walls_oam.append(time.perf_counter() - t0)
            oam = s.snapshot()
            s2 = Session(seed=seed + t)
            vec = rng.uniform(-10.0, 10.0, size)
            t0 = time.perf_counter()
            osm_run(s2, vec)
            walls_osm.append(time.perf_counter() - t0)
            osm = s2.snapshot()
        on, off = oam["online"], oam["offline"]
        rows.append({
            "size": size,
            "oam_trusted_online_mults": on.trusted_mults,
            "oam_trusted_online_adds": on.trusted_adds,
            "oam_trusted_offline_mults": off.trusted_mults,
            "oam_worker_mults": on.worker_mults,
            "oam_trusted_worker_ratio": on.trusted_mults / on.worker_mults,
            "osm_trusted_online_mults": osm["online"].trusted_mults,
            "osm_trusted_online_exps": osm["online"].trusted_exps,
            "osm_trusted_offline_exps": osm["offline"].trusted_exps,
            "osm_worker_exps": osm["online"].worker_exps,
            "oam_wall_s_median": float(np.median(walls_oam)),
            "osm_wall_s_median": float(np.median(walls_osm)),
        })
    return rows


def cmd_bench(args) -> tuple[dict, int]:
    sizes = sorted(set(args.sizes))
    if len(sizes) < 2:
        raise UsageError("need at least two distinct sizes")
    rows = bench_rows(sizes, args.trials, args.seed)
    fits = {key: _fit_exponent(sizes, [r[key] for r in rows])
            for key in ("oam_trusted_online_mults", "oam_worker_mults", "osm_trusted_online_mults")}
    shape = {
        "oam_trusted_quadratic": fits["oam_trusted_online_mults"] is not None and abs(fits["oam_trusted_online_mults"] - 2.0) <= 0.2,
        "oam_worker_cubic": fits["oam_worker_mults"] is not None and abs(fits["oam_worker_mults"] - 3.0) <= 0.2,
        "osm_trusted_linear": fits["osm_trusted_online_mults"] is not None and abs(fits["osm_trusted_online_mults"] - 1.0) <= 0.1,
        "osm_no_trusted_online_exps": all(r["osm_trusted_online_exps"] == 0 for r in rows),
    }
    if args.csv:
        write_csv(args.csv, rows)
    return make_report("bench", _config_echo(args), args.seed, EXIT_OK,
                       sweep=rows, fitted_exponents=fits, shape_checks=shape,
                       note="wall times are informational; operation counts are the measured quantity"), EXIT_OK


def cmd_attack(args) -> tuple[dict, int]:
    try:
        cfg = CampaignConfig(protocol=args.protocol, attack=args.attack, trials=args.trials, seed=args.seed,
                             size=args.size, length=max(args.length, 2), delta=args.delta, probe=args.probe)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    t0 = time.perf_counter()
    flags = run_trials(cfg, args.jobs)
    wall = time.perf_counter() - t0
    return make_report("attack", _config_echo(args), args.seed, EXIT_OK,
                       detection=summarize(cfg, flags), wall_time_s=wall), EXIT_OK


def cmd_seclevel(args) -> tuple[dict, int]:
    d_bits = args.d_bits if args.d_bits is not None else (int(math.log2(args.d)) if args.d >= 1 else 0)
    table = seclevel_table(args.n, args.m, args.L, max(args.d, 1), args.k, d_bits)
    if args.d < 1:
        table["security_level_oam_bits"] = None
        table["security_level_oam_literal_bits"] = None
    table["prob_blind_guess"] = 2.0 ** table["prob_blind_guess_log2"]
    return make_report("seclevel", _config_echo(args), args.seed, EXIT_OK, seclevel=table), EXIT_OK


def verify_compare(size: int, seed: int) -> dict:
    s = Session(seed=seed)
    q = sample_matrix(size, size, s.rng, s.cfg)
    kt = sample_matrix(size, size, s.rng, s.cfg)
    honest = oam_run(Session(seed=seed + 1), q, kt)

    uv = Session(seed=seed)
    before = uv.snapshot()["online"]
    q_aug, tag = uv_matmul_prepare(uv, q)
    z_full = oam_run(Session(seed=seed + 2), q_aug, kt)
    res_uv = uv_matmul_check(uv, z_full, tag)
    uv_cost = uv.snapshot()["online"] - before

    fr = Session(seed=seed)
    res_fr = freivalds_check(fr, q, kt, honest)
    fr_cost = fr.snapshot()["online"]
    return {
        "size": size,
        "uverify": {"passed": res_uv.passed, "vecmats": uv_cost.trusted_vecmats, "mults": uv_cost.trusted_mults},
        "freivalds": {"passed": res_fr.passed, "vecmats": fr_cost.trusted_vecmats, "mults": fr_cost.trusted_mults},
        "vecmat_ratio": [uv_cost.trusted_vecmats, fr_cost.trusted_vecmats],
        "mult_ratio": uv_cost.trusted_mults / fr_cost.trusted_mults,
    }


def cmd_verify_compare(args) -> tuple[dict, int]:
    return make_report("verify-compare", _config_echo(args), args.seed, EXIT_OK,
                       comparison=verify_compare(args.size, args.seed)), EXIT_OK


COMMANDS = {
    "demo": cmd_demo,
    "bench": cmd_bench,
    "attack": cmd_attack,
    "seclevel": cmd_seclevel,
    "verify-compare": cmd_verify_compare,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_defaults(parser, argv)
    except UsageError as exc:
        print(f"shieldsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        report, code = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"shieldsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RangeOverflow as exc:
        print(f"shieldsim: range budget exceeded: {exc} (magnitude={exc.magnitude}, limit={exc.limit})",
              file=sys.stderr)
        return EXIT_RANGE
    except (ExponentRange, FieldError, ValueError) as exc:
        print(f"shieldsim: error: {exc}", file=sys.stderr)
        return EXIT_RANGE if isinstance(exc, ExponentRange) else EXIT_USAGE
    text = canonical_json(report)
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
