"""Command-line interface: ``posverify run | attack-mc | analyze``.

Exit codes: 0 success, 1 a round (or the Monte Carlo check) failed,
2 bad input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analytics import key_consumption, pspoof_sweep
from .errors import PosVerifyError
from .reports import FORMATS, render
from .scenario import load_scenario
from .simulator import impersonation_strategy, monte_carlo, simulate, summary_record
from .spacetime import (
    SPEED_OF_LIGHT,
    SPEED_OF_SOUND,
    DelayProfile,
    movement_bound,
    scheme1_uncertainty,
    scheme2_uncertainty,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _speed(text: str) -> float:
    named = {"c": SPEED_OF_LIGHT, "light": SPEED_OF_LIGHT, "sound": SPEED_OF_SOUND}
    return named[text] if text in named else float(text)


def _write(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    config = load_scenario(args.scenario)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    result = simulate(config)
    records = [r.to_record() for r in result.reports] + [summary_record(config, result)]
    _write(render(records, args.format), args.out)
    if args.log:
        Path(args.log).write_text("".join(line + "\n" for line in result.log), encoding="utf-8")
    return EXIT_OK if all(r.verified for r in result.reports) else EXIT_FAIL


def cmd_attack_mc(args) -> int:
    config = load_scenario(args.scenario)
    if impersonation_strategy(config) is None:
        raise PosVerifyError("attack-mc needs a scenario with exactly one 'impersonate' adversary")
    if args.trials < 1:
        raise PosVerifyError("--trials must be at least 1")
    if args.seed is not None:
        config = config.with_seed(args.seed)
    summary = monte_carlo(config, args.trials)
    _write(render([summary.to_record()], args.format), args.out)
    dist = summary.sigma_distance
    return EXIT_FAIL if dist is not None and dist > 4 else EXIT_OK


def cmd_analyze(args) -> int:
    if args.kind == "pspoof":
        if any(n < 2 for n in args.n):
            raise PosVerifyError("--n values must be at least 2")
        if any(not 0 <= g < 1 for g in args.gamma):
            raise PosVerifyError("--gamma values must satisfy 0 <= gamma < 1")
        rows = pspoof_sweep(args.n, args.m, args.gamma)
        if not rows:
            raise PosVerifyError("no valid (n, m) combinations requested")
        records = [
            {
                "type": "pspoof",
                "n": r.n,
                "m": r.m,
                "gamma": float(r.gamma),
                "t": r.t,
                "p_exact": float(r.p_exact),
                "p_approx": None if r.p_approx is None else float(r.p_approx),
            }
            for r in rows
        ]
    elif args.kind == "uncertainty":
        if args.scheme == 2:
            value = scheme2_uncertainty(args.delta_d, args.jitter, args.delta3, args.speed)
            records = [{"type": "uncertainty", "quantity": "scheme2_latency", "meters": value}]
        else:
            if args.delta_sum is not None:
                if args.delta_sum < 0:
                    raise PosVerifyError("--delta-sum must be non-negative")
                ball = args.speed * args.delta_sum
            else:
                ball = args.speed * (args.delta1 + args.delta2)
            profile = DelayProfile(args.delta1, args.delta2, args.delta3, args.delta4)
            records = [{"type": "uncertainty", "quantity": "timing_ball", "meters": ball}]
            if args.delta_sum is None:
                records.append({"type": "uncertainty", "quantity": "scheme1_latency",
                                "meters": scheme1_uncertainty(profile, args.speed)})
    elif args.kind == "keyrate":
        if args.bits is None and args.n is None:
            raise PosVerifyError("give --bits or --n")
        records = []
        if args.bits is not None:
            records.append({"type": "keyrate", "interpretation": "bits per round as given",
                            "bits_per_round": args.bits,
                            "bits_per_second": key_consumption(args.M, args.bits, args.rate)})
        if args.n is not None:
            n = args.n[0]
            for label, bits in (("one n-bit key per round", n), ("separate n-bit query and reply", 2 * n)):
                records.append({"type": "keyrate", "interpretation": label, "bits_per_round": bits,
                                "bits_per_second": key_consumption(args.M, bits, args.rate)})
    else:
        records = [{"type": "movement", "period": args.period, "speed": args.speed,
                    "meters": movement_bound(args.period, args.speed)}]
    _write(render(records, args.format), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="posverify", description="Classical position verification simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--format", choices=FORMATS, default="table")
        p.add_argument("--out", help="write output here instead of standard output")

    run = sub.add_parser("run", help="simulate every round of a scenario")
    run.add_argument("scenario")
    run.add_argument("--seed", type=_seed)
    run.add_argument("--log", help="write the message log to this file")
    common(run)
    run.set_defaults(func=cmd_run)

    mc = sub.add_parser("attack-mc", help="Monte Carlo estimate of impersonation success")
    mc.add_argument("scenario")
    mc.add_argument("--trials", type=int, default=100_000)
    mc.add_argument("--seed", type=_seed)
    common(mc)
    mc.set_defaults(func=cmd_attack_mc)

    an = sub.add_parser("analyze", help="closed-form tables")
    an.add_argument("kind", choices=("pspoof", "uncertainty", "keyrate", "movement"))
    an.add_argument("--n", type=int, nargs="+", help="key lengths (pspoof) or key length (keyrate)")
    an.add_argument("--m", type=int, nargs="+", help="query lengths; default n/2")
    an.add_argument("--gamma", type=float, nargs="+", default=[0.0])
    an.add_argument("--delta-sum", type=float, help="delta1 + delta2 in seconds")
    an.add_argument("--delta1", type=float, default=0.0)
    an.add_argument("--delta2", type=float, default=0.0)
    an.add_argument("--delta3", type=float, default=0.0)
    an.add_argument("--delta4", type=float, default=0.0)
    an.add_argument("--scheme", type=int, choices=(1, 2), default=1)
    an.add_argument("--delta-d", type=float, default=0.0, help="clock offset bound (scheme 2)")
    an.add_argument("--jitter", type=float, default=0.0, help="transmit-time spread (scheme 2)")
    an.add_argument("--M", type=int, default=4)
    an.add_argument("--bits", type=float)
    an.add_argument("--rate", type=float, default=1e6, help="rounds per second")
    an.add_argument("--period", type=float, default=1e-6, help="seconds between rounds")
    an.add_argument("--speed", type=_speed, default=SPEED_OF_LIGHT, help="m/s, or 'c' / 'sound'")
    an.add_argument("--seed", type=_seed, help="accepted for symmetry; closed forms ignore it")
    common(an)
    an.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "analyze" and args.kind == "pspoof" and not args.n:
        parser.error("analyze pspoof needs --n")
    try:
        return args.func(args)
    except (PosVerifyError, OSError, ValueError) as exc:
        print(f"posverify: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # keep the documented exit codes even on surprises
        print(f"posverify: internal error: {exc!r}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
