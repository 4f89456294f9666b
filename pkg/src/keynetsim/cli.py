"""Command-line front end.

Subcommands:
  run           one simulation per (scenario x rate x seed), or --padua
  validate      run the four-node validation network against its
                embedded reference values; per-check pass/fail lines
  sweep-figure  run a rate sweep and emit plot-ready data files
  defaults      print the full default config as YAML

Exit codes: 0 success, 1 config error, 2 validation failure,
3 runtime fault (partial artifacts are left in place).

Output root: --out flag, else $KEYNETSIM_OUTPUT_ROOT, else
./keynetsim-out.  All files are written atomically (temp + rename).

Artifact formats (format_version %(FORMAT_VERSION)d, stamped in every
metrics.json and manifest.json):

  <run>/metrics.json      full result bundle: config echo, network and
                          per-node latency means (seconds), message and
                          controller counters, conservation verdict
  <run>/flows.csv         node, peer, path, tx, rx, consumed_keys,
                          latency_sum, censored_sum  (sums in ticks)
  <run>/links.csv         link, sends, backoffs, drops, generated,
                          consumed, consumed_transport, consumed_cm,
                          stored, discarded, relayed_keys
  <run>/conservation.csv  link, generated, consumed, stored, discarded,
                          balanced, transport_charges_match,
                          cm_charges_match, ids_monotone
  <run>/summary.txt       one-screen digest (plus reference comparison
                          for the validation network)
  sweep.csv               one row per (scenario, key_rate, seed):
                          latency means in seconds, setup time,
                          conservation flag, event count, dead letters
  curves.csv              long form seed-averaged (scenario, kps,
                          metric, value)
  <metric>.dat            gnuplot columns: kps then one column per
                          scenario, "nan" where a mean is undefined
  cutoffs.json            per-scenario starvation cutoff rates
"""

import argparse
import os
import sys

import yaml

from . import metrics as metrics_mod
from .kernel import SEC
from .scenario import (SCENARIOS, SWEEP_RATES, SWEEP_SEEDS, ScenarioConfig,
                       padua_scenario, run_sweep, sweep_scenario,
                       sweep_summary)

FORMAT_VERSION = 1

SWEEP_FIELDS = ("scenario", "key_rate", "seed", "km_msg_latency_s",
                "key_round_trip_s", "ne_msg_latency_s", "km_queue_len",
                "setup_time_s", "conservation_ok", "cm_consumed",
                "events_processed", "dead_letters")
CURVE_METRICS = ("km_msg_latency_s", "key_round_trip_s",
                 "ne_msg_latency_s", "km_queue_len")
FLOW_FIELDS = ("node", "peer", "path", "tx", "rx", "consumed_keys",
               "latency_sum", "censored_sum")
LINK_FIELDS = ("link", "sends", "backoffs", "drops", "generated",
               "consumed", "consumed_transport", "consumed_cm", "stored",
               "discarded", "relayed_keys")
CONSERVATION_FIELDS = ("link", "generated", "consumed", "stored",
                       "discarded", "balanced", "transport_charges_match",
                       "cm_charges_match", "ids_monotone")

# cli-level keys a config file may carry; everything else lives under
# params and maps onto ScenarioConfig fields (tick units)
_TOP_KEYS = ("scenarios", "rates", "seeds", "duration_s", "padua", "out",
             "params")
# fixed per command line; params must not fight them
_RESERVED_PARAMS = ("seed", "arch", "protocol", "duration")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 means validation failure here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


# -- config ----------------------------------------------------------------

def load_config(path):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("%s: %s" % (path, exc.strerror or exc))
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ConfigError("%s:%d:%d: %s" % (
                path, mark.line + 1, mark.column + 1,
                getattr(exc, "problem", exc)))
        raise ConfigError("%s: %s" % (path, exc))
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("%s: top level must be a mapping" % path)
    extra = set(data) - set(_TOP_KEYS)
    if extra:
        raise ConfigError("%s: unknown keys: %s"
                          % (path, ", ".join(sorted(extra))))
    return data


def _check_params(params):
    if not isinstance(params, dict):
        raise ConfigError("params must be a mapping")
    clash = set(params) & set(_RESERVED_PARAMS)
    if clash:
        raise ConfigError(
            "params may not set %s (fixed by the command line)"
            % ", ".join(sorted(clash)))
    known = set(ScenarioConfig().to_dict())
    extra = set(params) - known
    if extra:
        raise ConfigError("unknown params: %s" % ", ".join(sorted(extra)))
    return params


def _parse_list(text, convert, what):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            out.append(convert(part))
        except ValueError:
            raise ConfigError("bad %s value %r" % (what, part))
    if not out:
        raise ConfigError("empty %s list" % what)
    return out


def _effective(args, config):
    """Merge config file and flags; flags win.  Returns the resolved
    run plan, which `run` also dumps for round-trip reruns."""
    plan = {
        "padua": bool(config.get("padua", False)),
        "scenarios": config.get("scenarios", ["A"]),
        "rates": config.get("rates", [100.0]),
        "seeds": config.get("seeds", [42]),
        "duration_s": config.get("duration_s"),
        "out": config.get("out"),
        "params": _check_params(config.get("params", {}) or {}),
    }
    if getattr(args, "padua", False):
        plan["padua"] = True
    if getattr(args, "scenarios", None):
        plan["scenarios"] = _parse_list(args.scenarios, str, "scenario")
    if getattr(args, "rates", None):
        plan["rates"] = _parse_list(args.rates, float, "rate")
    if getattr(args, "seeds", None):
        plan["seeds"] = _parse_list(args.seeds, int, "seed")
    if getattr(args, "duration_s", None) is not None:
        plan["duration_s"] = args.duration_s
    if getattr(args, "out", None):
        plan["out"] = args.out

    for letter in plan["scenarios"]:
        if letter not in SCENARIOS:
            raise ConfigError("unknown scenario %r (have %s)"
                              % (letter, " ".join(sorted(SCENARIOS))))
    if len(set(plan["scenarios"])) != len(plan["scenarios"]):
        raise ConfigError("duplicate scenarios")
    if plan["duration_s"] is not None and plan["duration_s"] <= 0:
        raise ConfigError("duration_s must be positive")
    for seed in plan["seeds"]:
        if not isinstance(seed, int):
            raise ConfigError("seeds must be integers")
    return plan


def _out_root(plan):
    root = plan.get("out") or os.environ.get("KEYNETSIM_OUTPUT_ROOT") \
        or "keynetsim-out"
    os.makedirs(root, exist_ok=True)
    return root


def _duration_ticks(plan, default=None):
    if plan["duration_s"] is None:
        return default
    return int(plan["duration_s"] * SEC)


# -- artifacts -------------------------------------------------------------

def _flow_csv_rows(result):
    for row in result["flows"]:
        out = dict(row)
        out["path"] = ">".join(str(n) for n in out["path"])
        yield out


def write_run_artifacts(outdir, result, extra_summary=""):
    os.makedirs(outdir, exist_ok=True)
    payload = dict(result)
    payload["format_version"] = FORMAT_VERSION
    metrics_mod.write_json(os.path.join(outdir, "metrics.json"), payload)
    metrics_mod.write_csv(os.path.join(outdir, "flows.csv"),
                          _flow_csv_rows(result), FLOW_FIELDS)
    metrics_mod.write_csv(os.path.join(outdir, "links.csv"),
                          result["links"], LINK_FIELDS)
    metrics_mod.write_csv(os.path.join(outdir, "conservation.csv"),
                          result["conservation"], CONSERVATION_FIELDS)
    metrics_mod.write_text(os.path.join(outdir, "summary.txt"),
                           run_summary(result) + extra_summary)


def run_summary(result):
    cfg = result["config"]
    net = result["network"]
    lines = [
        "arch=%s protocol=%s seed=%d duration=%.1fs" % (
            cfg["arch"], cfg["protocol"], cfg["seed"],
            cfg["duration"] / SEC),
        "events=%d dead_letters=%d conservation_ok=%s" % (
            result["events_processed"], result["dead_letters"],
            result["conservation_ok"]),
        "go=%.3fs setup=%.3fs" % (result["go_time_s"] or -1,
                                  result["setup_time_s"] or -1),
    ]
    for name in ("km_msg_latency_s", "key_round_trip_s",
                 "ne_msg_latency_s"):
        value = net[name]
        lines.append("%s=%s" % (
            name, "n/a" if value is None else "%.6f" % value))
    lines.append("km_queue_len=%s" % (
        "n/a" if net["km_queue_len"] is None
        else "%.3f" % net["km_queue_len"]))
    total_tx = sum(row["tx"] for row in result["flows"])
    total_rx = sum(row["rx"] for row in result["flows"])
    lines.append("flows=%d tx=%d rx=%d" % (
        len(result["flows"]), total_tx, total_rx))
    return "\n".join(lines) + "\n"


# -- validation reference --------------------------------------------------

def _band(value, lo, hi):
    return lo <= value <= hi


def validation_checks(result):
    """Reference comparison for the four-node validation network.

    Returns (label, measured, lo, hi, ok) tuples; the bands are the
    published behaviour of the real deployment this topology models.
    """
    flows = result["flows"]
    links = {row["link"]: row for row in result["links"]}
    checks = []

    tx = sum(row["tx"] for row in flows)
    checks.append(("ne packets sent", tx, 178802, 180598,
                   _band(tx, 178802, 180598)))
    gap = tx - sum(row["rx"] for row in flows)
    checks.append(("ne packets undelivered", gap, 0, 300,
                   _band(gap, 0, 300)))
    consumed = sum(row["consumed_keys"] for row in flows)
    checks.append(("session keys consumed", consumed, 480, 485,
                   _band(consumed, 480, 485)))

    for name, nominal in (("1-2", 5820), ("2-3", 5820), ("3-6", 39023)):
        lo = int(nominal * 0.97)
        hi = int(nominal * 1.03) + 1
        got = links[name]["generated"] if name in links else -1
        checks.append(("generated keys %s" % name, got, lo, hi,
                       _band(got, lo, hi)))
    for name in ("1-2", "2-3", "3-6"):
        got = links[name]["relayed_keys"] if name in links else -1
        checks.append(("relayed keys %s" % name, got, 478, 488,
                       _band(got, 478, 488)))

    setup = result["setup_time_s"] or -1.0
    checks.append(("setup time s", setup, 2.0, 3.5,
                   _band(setup, 2.0, 3.5)))
    ok = result["conservation_ok"]
    checks.append(("key conservation", int(ok), 1, 1, ok))
    return checks


def validation_report(result):
    lines = []
    for label, value, lo, hi, ok in validation_checks(result):
        lines.append("%s %-24s %12g  expected [%g, %g]" % (
            "PASS" if ok else "FAIL", label, value, lo, hi))
    return "\n".join(lines) + "\n"


# -- subcommands -----------------------------------------------------------

def cmd_run(args):
    config = load_config(args.config) if args.config else {}
    plan = _effective(args, config)
    root = _out_root(plan)
    overrides = plan["params"]

    runs = []
    if plan["padua"]:
        for seed in plan["seeds"]:
            runs.append(("padua-s%d" % seed,
                         lambda seed=seed: padua_scenario(
                             seed, overrides=overrides)))
    else:
        duration = _duration_ticks(plan, 120 * SEC)
        for letter in plan["scenarios"]:
            for rate in plan["rates"]:
                for seed in plan["seeds"]:
                    runs.append((
                        "%s-r%g-s%d" % (letter, rate, seed),
                        lambda letter=letter, rate=rate, seed=seed:
                            sweep_scenario(letter, rate, seed,
                                           duration=duration,
                                           overrides=overrides)))

    metrics_mod.write_json(os.path.join(root, "manifest.json"),
                           {"format_version": FORMAT_VERSION,
                            "plan": plan,
                            "runs": [name for name, _ in runs]})
    try:
        for name, factory in runs:
            try:
                scenario = factory()
            except (ValueError, TypeError) as exc:
                print("config error: %s" % exc, file=sys.stderr)
                return 1
            result = scenario.run()
            extra = ""
            if plan["padua"]:
                extra = "\n" + validation_report(result)
            write_run_artifacts(os.path.join(root, name), result, extra)
            net = result["network"]
            print("%s: events=%d ne=%s km=%s conservation=%s" % (
                name, result["events_processed"],
                "n/a" if net["ne_msg_latency_s"] is None
                else "%.6fs" % net["ne_msg_latency_s"],
                "n/a" if net["km_msg_latency_s"] is None
                else "%.6fs" % net["km_msg_latency_s"],
                "ok" if result["conservation_ok"] else "BROKEN"))
    except Exception as exc:
        print("runtime fault: %s" % exc, file=sys.stderr)
        return 3
    return 0


def cmd_validate(args):
    try:
        scenario = padua_scenario(args.seed)
        result = scenario.run()
    except Exception as exc:
        print("runtime fault: %s" % exc, file=sys.stderr)
        return 3
    report = validation_report(result)
    sys.stdout.write(report)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_run_artifacts(os.path.join(args.out, "padua-s%d" % args.seed),
                            result, "\n" + report)
    checks = validation_checks(result)
    return 0 if all(ok for *_, ok in checks) else 2


def cmd_sweep_figure(args):
    config = load_config(args.config) if args.config else {}
    plan = _effective(args, config)
    if not getattr(args, "scenarios", None) and "scenarios" not in config:
        plan["scenarios"] = sorted(SCENARIOS)
    if not getattr(args, "rates", None) and "rates" not in config:
        plan["rates"] = list(SWEEP_RATES)
    if not getattr(args, "seeds", None) and "seeds" not in config:
        plan["seeds"] = list(SWEEP_SEEDS)
    root = _out_root(plan)
    duration = _duration_ticks(plan, 120 * SEC)

    try:
        rows = run_sweep(letters=plan["scenarios"], rates=plan["rates"],
                         seeds=plan["seeds"], duration=duration,
                         workers=args.workers,
                         overrides=plan["params"])
    except (ValueError, TypeError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 1
    except Exception as exc:
        print("runtime fault: %s" % exc, file=sys.stderr)
        return 3

    averaged, cutoffs = sweep_summary(rows)
    metrics_mod.write_csv(os.path.join(root, "sweep.csv"), rows,
                          SWEEP_FIELDS)
    long_rows = [{"scenario": e["scenario"], "kps": e["key_rate"],
                  "metric": metric, "value": e[metric]}
                 for e in averaged for metric in CURVE_METRICS]
    metrics_mod.write_csv(os.path.join(root, "curves.csv"), long_rows,
                          ("scenario", "kps", "metric", "value"))
    by_scenario = sorted({e["scenario"] for e in averaged})
    rates = sorted({e["key_rate"] for e in averaged})
    table = {(e["scenario"], e["key_rate"]): e for e in averaged}
    for metric in CURVE_METRICS:
        lines = ["# kps " + " ".join(by_scenario)]
        for rate in rates:
            cells = ["%g" % rate]
            for letter in by_scenario:
                entry = table.get((letter, rate))
                value = entry[metric] if entry else None
                cells.append("nan" if value is None else repr(value))
            lines.append(" ".join(cells))
        metrics_mod.write_text(os.path.join(root, metric + ".dat"),
                               "\n".join(lines) + "\n")
    metrics_mod.write_json(os.path.join(root, "cutoffs.json"),
                           {"format_version": FORMAT_VERSION,
                            "cutoffs": cutoffs})
    metrics_mod.write_json(os.path.join(root, "manifest.json"),
                           {"format_version": FORMAT_VERSION,
                            "plan": plan})
    for letter in sorted(cutoffs):
        info = cutoffs[letter]
        print("scenario %s: cutoff=%s%s" % (
            letter, info["cutoff_rate"],
            " (low confidence)" if info["low_confidence"] else ""))
    print("wrote %s" % root)
    return 0


def cmd_defaults(_args):
    data = {
        "padua": False,
        "scenarios": ["A"],
        "rates": [100.0],
        "seeds": [42],
        "duration_s": None,
        "out": None,
        "params": ScenarioConfig().to_dict(),
    }
    for key in _RESERVED_PARAMS:
        data["params"].pop(key, None)
    sys.stdout.write(yaml.safe_dump(data, sort_keys=True,
                                    default_flow_style=False))
    return 0


# -- entry -----------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="keynetsim",
                     description="trusted-node QKD network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run scenarios and write artifacts")
    p_run.add_argument("config", nargs="?", help="YAML config path")
    p_run.add_argument("--padua", action="store_true",
                       help="run the four-node validation network")
    p_run.add_argument("--scenario", dest="scenarios",
                       help="comma list of A,B,C,D")
    p_run.add_argument("--sweep", "--rates", dest="rates",
                       help="comma list of key rates (keys/s)")
    p_run.add_argument("--seed", "--seeds", dest="seeds",
                       help="comma list of seeds")
    p_run.add_argument("--duration-s", dest="duration_s", type=float)
    p_run.add_argument("--out", help="output root")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate",
                           help="check the validation network against "
                                "reference values")
    p_val.add_argument("--seed", type=int, default=42)
    p_val.add_argument("--out", help="also write run artifacts here")
    p_val.set_defaults(func=cmd_validate)

    p_fig = sub.add_parser("sweep-figure",
                           help="rate sweep with plot-ready outputs")
    p_fig.add_argument("config", nargs="?", help="YAML config path")
    p_fig.add_argument("--scenario", dest="scenarios",
                       help="comma list of A,B,C,D (default all)")
    p_fig.add_argument("--rates", dest="rates",
                       help="comma list of key rates (default sweep grid)")
    p_fig.add_argument("--seeds", dest="seeds",
                       help="comma list of seeds (default sweep seeds)")
    p_fig.add_argument("--duration-s", dest="duration_s", type=float)
    p_fig.add_argument("--workers", type=int, default=None,
                       help="sweep worker processes (default: one per cpu)")
    p_fig.add_argument("--out", help="output root")
    p_fig.set_defaults(func=cmd_sweep_figure)

    p_def = sub.add_parser("defaults", help="print default config YAML")
    p_def.set_defaults(func=cmd_defaults)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
