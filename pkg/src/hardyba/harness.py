"""Seeded Monte Carlo orchestration, reports, sweeps and the command line."""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .adversary import SCENARIOS, BasisFlipDistributor, strategies_for
from .engine import MIN_N, ProtocolConfig, run_protocol
from .hardy import ALPHA_OPT, InvalidObservableError, ObservablePair, q_max_search, q_value, symmetric_model
from .ledger import LIEUTENANTS, ConfigurationError, PartyView, Transcript, other
from .verify import assess

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def derive_seed(master: int, counter: int) -> int:
    """Counter-based child seed: trial ``counter`` is reproducible on its own."""
    return int(np.random.SeedSequence([int(master), int(counter)]).generate_state(1)[0])


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "honest"
    n: int = 256
    alpha: float = ALPHA_OPT
    message_bit: int | None = None  # None: drawn per trial
    message_fraction: float = 0.75
    classical_flip_prob: float = 0.0
    epsilon: float = 0.0
    k_min: int = 1
    min_runs: int = 16
    attack_fraction: float = 1.0
    trials: int = 100
    seed: int = 0
    workers: int = 1
    out: str | None = None
    csv: str | None = None
    transcript: str | None = None

    def __post_init__(self):
        strategies_for(self.scenario)
        if self.n < MIN_N:
            raise ConfigurationError(f"n must be at least {MIN_N}, got {self.n}")
        if self.trials < 1:
            raise ConfigurationError("trials must be positive")
        for name in ("message_fraction", "classical_flip_prob", "epsilon", "attack_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if self.message_bit not in (None, 0, 1):
            raise ConfigurationError("message_bit must be 0, 1 or unset")

    def protocol_config(self, trial: int) -> ProtocolConfig:
        seed = derive_seed(self.seed, trial)
        bit = self.message_bit
        if bit is None:
            bit = int(np.random.default_rng(seed).integers(0, 2))
        return ProtocolConfig(
            n=self.n,
            alpha=self.alpha,
            message_bit=bit,
            message_fraction=self.message_fraction,
            flip_prob=self.classical_flip_prob,
            epsilon=self.epsilon,
            k_min=self.k_min,
            min_runs=self.min_runs,
            seed=seed,
        )

    def strategies(self) -> tuple[tuple[str, ...], dict]:
        traitors, strategies = strategies_for(self.scenario)
        if self.attack_fraction < 1:
            for p, s in strategies.items():
                if isinstance(s, BasisFlipDistributor):
                    strategies[p] = BasisFlipDistributor(self.attack_fraction)
        return traitors, strategies


def _trial_row(config: RunConfig, trial: int, keep_outcome: bool = False):
    pc = config.protocol_config(trial)
    traitors, strategies = config.strategies()
    outcome = run_protocol(pc, strategies)
    loyal = [p for p in LIEUTENANTS if p not in traitors]
    bits = outcome.intended_bits

    readings = {
        p: {
            # the own sub-protocol carries the peer's order, the peer's carries p's
            f"m_C{other(p)}": outcome.readings[p]["own"].value,
            f"m_C{p}": outcome.readings[p]["peer"].value,
        }
        for p in LIEUTENANTS
    }
    verdicts = {p: {"action": v.action, "traitor": v.traitor, "case": v.case} for p, v in outcome.verdicts.items()}

    def correct(p: str) -> bool:
        r = outcome.readings[p]
        return r["own"].value == bits["B" if p == "A" else "A"] and r["peer"].value == bits[p]

    loyal_verdicts = [outcome.verdicts[p] for p in loyal]
    false_acc = any(v.traitor is not None and v.traitor not in traitors for v in loyal_verdicts)
    any_flag = any(v.traitor is not None for v in loyal_verdicts)
    if traitors:
        success = all(v.traitor in traitors for v in loyal_verdicts)
    else:
        success = all(correct(p) for p in loyal) and not any_flag
    actions = {v.action for v in loyal_verdicts}
    agreement = len(actions) == 1 and None not in actions
    if "C" not in traitors:
        agreement = agreement and actions == {pc.message_bit}
    readable = [outcome.readings[p][k].readable for p in loyal for k in ("own", "peer")]
    q_hits = q_runs = 0
    for p in loyal:
        for rep in outcome.reports[p].values():
            if rep.passed:
                q_hits += rep.counts["UU"]["++"]
                q_runs += sum(rep.counts["UU"].values())
    row = {
        "trial": trial,
        "seed": pc.seed,
        "message_bit": pc.message_bit,
        "intended_bits": bits,
        "traitors": list(traitors),
        "readings": readings,
        "verdicts": verdicts,
        "success": success,
        "agreement": agreement,
        "false_accusation": false_acc,
        "traitor_flagged": any_flag,
        "readable_fraction": sum(readable) / len(readable) if readable else None,
        "unreadable_or_c": all(
            v.traitor == "C" or not all(r.readable for r in outcome.readings[v.actor].values())
            for v in loyal_verdicts
        ),
        "victim_reading_flipped": _victim_flip(outcome, traitors),
        "q_counts": [q_hits, q_runs],
        "invalid": any(v.invalid for v in loyal_verdicts),
    }
    return (row, outcome) if keep_outcome else row


def _victim_flip(outcome, traitors) -> bool | None:
    """For a single lieutenant traitor: did the other lieutenant read its own order flipped?"""
    lieutenant_traitors = [t for t in traitors if t in LIEUTENANTS]
    if len(lieutenant_traitors) != 1:
        return None
    victim = other(lieutenant_traitors[0])
    reading = outcome.readings[victim]["peer"]
    bit = outcome.intended_bits[victim]
    if not reading.readable or bit is None:
        return None
    return reading.value != bit


def aggregate(rows: list[dict]) -> dict:
    n = len(rows)

    def rate(key):
        vals = [r[key] for r in rows if r[key] is not None]
        return sum(vals) / len(vals) if vals else None

    q_hits = sum(r["q_counts"][0] for r in rows)
    q_runs = sum(r["q_counts"][1] for r in rows)
    readable = [r["readable_fraction"] for r in rows if r["readable_fraction"] is not None]
    return {
        "trials": n,
        "success_rate": rate("success"),
        "agreement_rate": rate("agreement"),
        "detection_power": rate("success") if rows and rows[0]["traitors"] else None,
        "false_accusation_rate": rate("false_accusation"),
        "traitor_flag_rate": rate("traitor_flagged"),
        "readability_rate": sum(readable) / len(readable) if readable else None,
        "unreadable_or_c_rate": rate("unreadable_or_c"),
        "victim_flip_rate": rate("victim_reading_flipped"),
        "invalid_rate": rate("invalid"),
        "q_estimate": q_hits / q_runs if q_runs else None,
    }


@dataclass
class RunReport:
    config: dict
    rows: list
    aggregate: dict
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": self.schema_version,
                "config": self.config,
                "aggregate": self.aggregate,
                "rows": self.rows,
            },
            indent=2,
        )

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = list(self.aggregate)
        w.writerow(["scenario", "n", "alpha", *keys])
        w.writerow([self.config["scenario"], self.config["n"], self.config["alpha"], *self.aggregate.values()])
        return buf.getvalue()


def _run_one(args):
    config, trial = args
    return _trial_row(config, trial)


def run_trials(config: RunConfig) -> RunReport:
    jobs = [(config, t) for t in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            rows = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * config.workers))))
    else:
        rows = [_run_one(j) for j in jobs]
    rows.sort(key=lambda r: r["trial"])
    cfg = {k: v for k, v in asdict(config).items() if k not in ("out", "csv", "transcript", "workers")}
    return RunReport(cfg, rows, aggregate(rows))


SWEEP_COLUMNS = (
    "cell",
    "scenario",
    "n",
    "alpha",
    "q",
    "seed",
    "trials",
    "success_rate",
    "detection_power",
    "readability_rate",
    "false_accusation_rate",
    "agreement_rate",
)


def sweep(base: RunConfig, grid: dict) -> list[dict]:
    """One aggregate row per (scenario, n, alpha) cell; cell seeds derive from ``base.seed``."""
    axes = [grid.get("scenario", [base.scenario]), grid.get("n", [base.n]), grid.get("alpha", [base.alpha])]
    if any(len(a) == 0 for a in axes):
        raise ConfigurationError("sweep grid is empty")
    out = []
    for cell, (scenario, n, alpha) in enumerate(itertools.product(*axes)):
        cfg = replace(base, scenario=scenario, n=int(n), alpha=float(alpha), seed=derive_seed(base.seed, cell))
        agg = run_trials(cfg).aggregate
        pair = ObservablePair.real(float(alpha))
        out.append(
            {
                "cell": cell,
                "scenario": scenario,
                "n": int(n),
                "alpha": float(alpha),
                "q": q_value(pair, pair),
                "seed": cfg.seed,
                "trials": cfg.trials,
                **{k: agg[k] for k in SWEEP_COLUMNS[7:]},
            }
        )
    return out


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r[k] is None else r[k]) for k in SWEEP_COLUMNS})
    return buf.getvalue()


def replay(text: str) -> tuple[list[dict], list[dict]]:
    """Recompute both lieutenants' verdicts from a stored transcript.

    Returns ``(recomputed, recorded)``.
    """
    transcript, recorded = Transcript.from_jsonl(text)
    recomputed = []
    for role in LIEUTENANTS:
        view = public_view(role, transcript)
        recomputed.append(assess(view)[0].to_dict())
    return recomputed, recorded


def public_view(role: str, transcript: Transcript) -> PartyView:
    """A lieutenant's view rebuilt from the public record alone (all of its settings are disclosed by then)."""
    view = PartyView(role=role, params=dict(transcript.params))
    for d in transcript.stage:
        view.discards[d] = transcript.discards.get(d, np.array([], dtype=np.int64))
        view.announcements[d] = {p: transcript.announced(d, p) for p in ("A", "B", "C")}
        if d in transcript.lists:
            view.message_lists[d] = dict(transcript.lists[d])
        if d in transcript.links:
            view.links[d] = dict(transcript.links[d])
        if d in transcript.settings:
            view.disclosed_settings[d] = dict(transcript.settings[d])
    for sender, receiver, bit in transcript.confirmations:
        if receiver == role:
            view.messages[sender] = bit
    return view


# command line ------------------------------------------------------------


def _load_config_file(path: str) -> dict:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"bad config line {line!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            data[k] = v
    if not isinstance(data, dict):
        raise ConfigurationError("config file must hold an object / key=value pairs")
    return data


def _coerce(config_fields: dict, data: dict) -> dict:
    out = {}
    for k, v in data.items():
        k = k.replace("-", "_")
        if k not in config_fields:
            raise ConfigurationError(f"unknown config key {k!r}")
        if isinstance(v, str):
            kind = config_fields[k]
            if v.lower() in ("none", "null", ""):
                v = None
            elif "int" in kind:
                v = int(v)
            elif "float" in kind:
                v = float(v)
        out[k] = v
    return out


def _run_config(args) -> RunConfig:
    types = {f.name: str(f.type) for f in fields(RunConfig)}
    data = _coerce(types, _load_config_file(args.config)) if args.config else {}
    flags = {
        "scenario": args.scenario,
        "n": args.n,
        "alpha": args.alpha,
        "message_bit": args.bit,
        "message_fraction": args.fraction,
        "classical_flip_prob": args.flip_prob,
        "epsilon": args.epsilon,
        "k_min": args.k_min,
        "min_runs": args.min_runs,
        "attack_fraction": args.attack_fraction,
        "trials": args.trials,
        "seed": args.seed,
        "workers": args.workers,
    }
    for attr in ("out", "csv", "transcript"):
        if hasattr(args, attr):
            flags[attr] = getattr(args, attr)
    data.update({k: v for k, v in flags.items() if v is not None})
    return RunConfig(**data)


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or key=value file; flags override it")
    p.add_argument("--scenario", help=f"one of: {', '.join(SCENARIOS)}")
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--bit", type=int, choices=(0, 1))
    p.add_argument("--fraction", type=float, help="commander's message-basis fraction")
    p.add_argument("--flip-prob", type=float, help="classical confirmation channel bit-flip probability")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--k-min", type=int)
    p.add_argument("--min-runs", type=int)
    p.add_argument("--attack-fraction", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)


def _cmd_run(args) -> int:
    config = _run_config(args)
    report = run_trials(config)
    text = report.to_json()
    if config.out:
        Path(config.out).write_text(text + "\n")
    if config.csv:
        Path(config.csv).write_text(report.summary_csv())
    if config.transcript:
        _, outcome = _trial_row(config, 0, keep_outcome=True)
        Path(config.transcript).write_text(outcome.transcript.to_jsonl(outcome.verdict_records()))
    if not config.out:
        print(text)
    else:
        print(json.dumps(report.aggregate, indent=2))
    return 0


def _parse_list(text: str | None, cast) -> list | None:
    if text is None:
        return None
    return [cast(x) for x in text.split(",") if x.strip()]


def _cmd_sweep(args) -> int:
    base = _run_config(args)
    grid = {}
    for key, text, cast in (("scenario", args.scenarios, str), ("n", args.ns, int), ("alpha", args.alphas, float)):
        vals = _parse_list(text, cast)
        if vals is not None:
            grid[key] = vals
    text = sweep_csv(sweep(base, grid))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_tables(args) -> int:
    model = symmetric_model(args.alpha)
    text = model.tables[args.state].to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_qmax(args) -> int:
    alpha, q = q_max_search()
    print(f"alpha_opt={alpha:.10f}")
    print(f"alpha_opt_squared={alpha * alpha:.10f}")
    print(f"q_max={q:.10f}")
    return 0


def _cmd_replay(args) -> int:
    recomputed, recorded = replay(Path(args.transcript_file).read_text())
    print(json.dumps({"recomputed": recomputed}, indent=2))
    if recorded and recorded != recomputed:
        print("replayed verdicts differ from the recorded ones", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hardyba", description="Hardy-correlation Byzantine agreement simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Monte Carlo trials of one scenario")
    _add_run_options(p)
    p.add_argument("--out", help="JSON report path (default: stdout)")
    p.add_argument("--csv", help="aggregate CSV path")
    p.add_argument("--transcript", help="write trial 0's transcript as JSON lines")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="grid over scenario / n / alpha")
    _add_run_options(p)
    p.add_argument("--scenarios", help="comma separated")
    p.add_argument("--ns", help="comma separated")
    p.add_argument("--alphas", help="comma separated")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("tables", help="16-row probability table as CSV")
    p.add_argument("--alpha", type=float, default=ALPHA_OPT)
    p.add_argument("--state", choices=("psi", "chi"), default="psi")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_tables)

    p = sub.add_parser("qmax", help="maximise q over alpha")
    p.set_defaults(func=_cmd_qmax)

    p = sub.add_parser("replay", help="re-verify a stored transcript")
    p.add_argument("transcript_file")
    p.set_defaults(func=_cmd_replay)
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigurationError, InvalidObservableError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        log.exception("internal invariant breach")
        return 1


def main() -> None:
    sys.exit(run_cli())
