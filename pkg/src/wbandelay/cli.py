"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure,
3 analytic/simulation disagreement.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import math
import os
import re
import sys
import tempfile
from pathlib import Path
from typing import Sequence

import yaml

from . import __version__
from .analytic import (
    CsmaParams,
    DegenerateParameters,
    delay_event_distribution,
    expected_time_delay,
    p_tss,
    standard_error,
    total_csma_delay,
)
from .mac_zigbee import lone_node_hop_delay, slot_allocation_frequency
from .scenario import Scenario, ScenarioError, dump_scenario, preset_names, resolve
from .simulation import SimulationResult, run_scenario
from .stats import export_series

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_DISAGREE = 3

CSV_VERSION = "wbandelay-csv v1"
CSV_COLUMNS = ("time_s", "metric", "scope", "node_id", "value_s", "aggregation")
OUT_DIR_ENV = "WBANDELAY_OUT_DIR"
Z_LIMIT = 3.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for runtime failures here.
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _fmt(x: float) -> str:
    return repr(float(x))


# -- run ---------------------------------------------------------------------

def series_rows(result: SimulationResult, bucket: float, raw: bool = False) -> list[tuple]:
    """All GS and NS rows sorted by (metric, scope, node_id, time)."""
    stats = result.stats
    rows = []
    for metric in stats.metrics():
        groups = [("global", "", stats.global_series(metric))]
        groups += [("node", n, stats.node_series(metric, n)) for n in stats.nodes(metric)]
        for scope, node, series in groups:
            for t, v, agg in export_series(series, bucket):
                rows.append((t, metric, scope, node, v, agg))
            if raw:
                for ticks, v in series.samples:
                    rows.append((ticks / 1e9, metric, scope, node, v, "raw"))
    order = {"cumulative-mean": 0, "bucket-mean": 1, "raw": 2}
    rows.sort(key=lambda r: (r[1], r[2], r[3], r[0], order[r[5]]))
    return rows


def summary_lines(result: SimulationResult) -> list[str]:
    s = result.summary
    t = s.tally
    lines = [
        "summary",
        f"scenario_path={result.scenario.path}",
        f"seed={result.kernel.seed}",
        f"duration_s={_fmt(t.time)}",
        f"events={result.events}",
        f"generated={t.generated}",
        f"delivered={t.delivered}",
        f"dropped={t.dropped}",
        f"failed={t.failed}",
        f"in_flight={t.in_flight}",
        f"conserved={'yes' if s.conserved else 'no'}",
        f"flushes={len(s.flushes)}",
    ]
    lines += [f"drop_cause.{k}={v}" for k, v in sorted(s.drops.items())]
    lines += [f"failure_cause.{k}={v}" for k, v in sorted(s.failures.items())]
    for name, m in sorted(s.metrics.items()):
        lines.append(f"metric.{name}=count:{m.count} mean:{_fmt(m.mean)} max:{_fmt(m.max)}")
    return lines


def render_csv(result: SimulationResult, bucket: float, raw: bool = False) -> str:
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for t, metric, scope, node, v, agg in series_rows(result, bucket, raw):
        w.writerow((_fmt(t), metric, scope, node, _fmt(v), agg))
    for line in summary_lines(result):
        buf.write(f"# {line}\n")
    return buf.getvalue()


def _safe_name(*parts: str) -> str:
    return "__".join(re.sub(r"[^A-Za-z0-9_.-]", "_", p) for p in parts if p)


def write_gnuplot(result: SimulationResult, bucket: float, directory: Path) -> list[Path]:
    """One two-column ``time value`` file per series (cumulative mean)."""
    directory.mkdir(parents=True, exist_ok=True)
    files: dict[Path, list[str]] = {}
    for t, metric, scope, node, v, agg in series_rows(result, bucket):
        if agg != "cumulative-mean":
            continue
        path = directory / f"{_safe_name(metric, scope, node)}.dat"
        if path not in files:
            files[path] = [f"# {metric} {scope} {node}".rstrip() + "\n"]
        files[path].append(f"{_fmt(t)} {_fmt(v)}\n")
    for path, lines in files.items():
        path.write_text("".join(lines), encoding="utf-8", newline="\n")
    return sorted(files)


def _atomic_write(target: Path, text: str) -> None:
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _default_out(ref: str, seed: int) -> Path | None:
    base = os.environ.get(OUT_DIR_ENV)
    if not base:
        return None
    return Path(base) / f"{Path(ref).stem}-seed{seed}.csv"


def cmd_run(args: argparse.Namespace) -> int:
    scenario = resolve(args.scenario)
    if args.duration is not None and args.duration < 0:
        raise UsageError("--duration must be >= 0")
    if not args.bucket > 0:
        raise UsageError("--bucket must be > 0")
    seed = scenario.seed if args.seed is None else args.seed
    result = run_scenario(scenario, duration=args.duration, seed=seed)
    text = render_csv(result, args.bucket, args.raw)
    if args.gnuplot:
        write_gnuplot(result, args.bucket, Path(args.gnuplot))
    out = Path(args.out) if args.out and args.out != "-" else None
    if out is None and args.out is None:
        out = _default_out(args.scenario, seed)
    if out is None:
        sys.stdout.write(text)
    else:
        _atomic_write(out, text)
        print(f"wrote {out}", file=sys.stderr)
    if not result.summary.conserved:
        print("error: packet conservation violated", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# -- analytic ----------------------------------------------------------------

def parse_int_list(text: str) -> list[int]:
    """``"4"``, ``"1-10"`` or ``"1,2,8"`` (ranges allowed inside lists)."""
    values: list[int] = []
    for part in text.split(","):
        part = part.strip()
        m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", part)
        try:
            if m:
                lo, hi = int(m.group(1)), int(m.group(2))
                if lo > hi:
                    raise UsageError(f"empty range {part!r}")
                values.extend(range(lo, hi + 1))
            else:
                values.append(int(part))
        except ValueError:
            raise UsageError(f"not an integer list: {text!r}") from None
    return values


def _load_params(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"{path}: not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: top level must be a mapping")
    known = {f.name for f in dataclasses.fields(CsmaParams)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise UsageError(f"{path}: unknown parameter(s) {unknown}; known: {sorted(known)}")
    return doc


ANALYTIC_COLUMNS = ("n_devices", "be_min", "be_max", "bo_slots", "t_bo", "t_data", "t_ta",
                    "t_ack", "t_ifs", "total", "p_tss", "terms", "expected_time_delay_slots",
                    "expected_time_delay_s")


def analytic_rows(n_devices: Sequence[int], base: dict, bo_slots: int) -> list[tuple]:
    rows = []
    for n in n_devices:
        params = CsmaParams(**{**base, "n_devices": n})
        if params.be_min < 2:
            raise UsageError(
                f"be_min={params.be_min}: the slot-success model needs a backoff exponent >= 2 "
                "(it counts be-2 allocation rounds after the first)")
        br = total_csma_delay(params, bo_slots)
        dist = delay_event_distribution(n, params.be_min, params.be_max)
        try:
            slots = expected_time_delay(dist)
            etd, etd_s = _fmt(slots), _fmt(slots * params.t_bo_slot)
        except DegenerateParameters:
            etd = etd_s = "undefined"
        ptss = ";".join(f"{be}:{_fmt(p)}" for be, p in sorted(dist.p_tss.items()))
        terms = ";".join(_fmt(t) for t in dist.terms)
        rows.append((n, params.be_min, params.be_max, bo_slots, _fmt(br.t_bo), _fmt(br.t_data),
                     _fmt(br.t_ta), _fmt(br.t_ack), _fmt(br.t_ifs), _fmt(br.total), ptss, terms,
                     etd, etd_s))
    return rows


def cmd_analytic(args: argparse.Namespace) -> int:
    base = _load_params(args.params_file)
    for key in ("be_min", "be_max", "payload"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    if args.bo_slots < 0:
        raise UsageError("--bo-slots must be >= 0")
    n_list = parse_int_list(args.n_devices)
    if any(n < 1 for n in n_list):
        raise UsageError("--n-devices values must be >= 1")
    try:
        CsmaParams(**base)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    rows = analytic_rows(n_list, base, args.bo_slots)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(ANALYTIC_COLUMNS)
    w.writerows(rows)
    return EXIT_OK


# -- compare -----------------------------------------------------------------

@dataclasses.dataclass
class Comparison:
    name: str
    analytic: float
    empirical: float
    stderr: float

    @property
    def z(self) -> float:
        if self.stderr == 0:
            return 0.0 if math.isclose(self.analytic, self.empirical, abs_tol=1e-12) else math.inf
        return (self.empirical - self.analytic) / self.stderr

    @property
    def ok(self) -> bool:
        return abs(self.z) <= Z_LIMIT


def compare(scenario: Scenario, trials: int, n_devices: Sequence[int], seed: int) -> list[Comparison]:
    cfg = scenario.zigbee
    out = []
    lone = lone_node_hop_delay(cfg, scenario.traffic.packet_size, trials, seed=seed)
    out.append(Comparison("lone-node hop delay (s)", lone.expected, lone.mean, lone.stderr))
    be_lo = max(2, cfg.min_backoff_exponent)
    for n in n_devices:
        for be in range(be_lo, max(be_lo, cfg.max_backoff_exponent) + 1):
            p = p_tss(n, be)
            freq = slot_allocation_frequency(n, be, trials, seed=seed)
            out.append(Comparison(f"slot success n={n} be={be}", p, freq, standard_error(p, trials)))
    return out


def cmd_compare(args: argparse.Namespace) -> int:
    scenario = resolve(args.scenario)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    if args.n_devices is None:
        # every radio on the shared channel: sensors, end device and coordinator
        n_list = [scenario.traffic.sensor_count + 2]
    else:
        n_list = parse_int_list(args.n_devices)
        if any(n < 1 for n in n_list):
            raise UsageError("--n-devices values must be >= 1")
    seed = scenario.seed if args.seed is None else args.seed
    results = compare(scenario, args.trials, n_list, seed)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("check", "analytic", "empirical", "stderr", "z", "result"))
    for c in results:
        w.writerow((c.name, _fmt(c.analytic), _fmt(c.empirical), _fmt(c.stderr),
                    f"{c.z:.3f}", "pass" if c.ok else "FAIL"))
    return EXIT_OK if all(c.ok for c in results) else EXIT_DISAGREE


# -- scenario ----------------------------------------------------------------

def cmd_scenario(args: argparse.Namespace) -> int:
    if args.action == "list":
        for name in preset_names():
            print(name)
        return EXIT_OK
    if args.ref is None:
        raise UsageError(f"scenario {args.action} needs a preset name or file")
    scenario = resolve(args.ref)
    if args.action == "show":
        sys.stdout.write(dump_scenario(scenario))
    elif args.action == "provenance":
        for key, origin in sorted(scenario.provenance.items()):
            print(f"{key}\t{origin}")
    else:
        print(f"{args.ref}: ok ({scenario.path})")
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wbandelay", description="WBAN multi-hop delay simulator and CSMA/CA delay model.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate a scenario and write CSV series")
    r.add_argument("scenario", help="scenario YAML file or preset name")
    r.add_argument("--duration", type=float, help="simulated seconds (default: scenario)")
    r.add_argument("--seed", type=int, help="global seed (default: scenario)")
    r.add_argument("--out", help=f"output CSV, '-' for stdout (default: ${OUT_DIR_ENV} or stdout)")
    r.add_argument("--bucket", type=float, default=1.0, help="aggregation bucket width in seconds")
    r.add_argument("--raw", action="store_true", help="also emit every raw sample")
    r.add_argument("--gnuplot", metavar="DIR", help="write two-column .dat files per series")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analytic", help="evaluate the closed-form CSMA/CA delay model")
    a.add_argument("--n-devices", default="1", help="count, range (1-10) or list (1,4,8)")
    a.add_argument("--be-min", type=int)
    a.add_argument("--be-max", type=int)
    a.add_argument("--bo-slots", type=int, default=3, help="backoff slots for the delay breakdown")
    a.add_argument("--payload", type=int, help="payload bytes")
    a.add_argument("--params-file", help="YAML mapping of CSMA parameters")
    a.set_defaults(func=cmd_analytic)

    c = sub.add_parser("compare", help="check simulator against the closed form")
    c.add_argument("scenario", help="scenario YAML file or preset name")
    c.add_argument("--trials", type=int, default=20000)
    c.add_argument("--n-devices", help="contending device counts (default: radios in scenario)")
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("scenario", help="list, show or validate scenarios")
    s.add_argument("action", choices=("list", "show", "validate", "provenance"))
    s.add_argument("ref", nargs="?")
    s.set_defaults(func=cmd_scenario)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioError as exc:
        print("error: invalid scenario", file=sys.stderr)
        for where, msg in exc.problems:
            print(f"  {where}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return EXIT_OK
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
