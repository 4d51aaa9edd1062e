"""Experiment driver: config files, scheme comparison, CSV reports.

Config files are flat key = value text (one key per line, ``#`` comments);
keys are the field names of :class:`~d2dmimo.sim.SystemConfig` and
:class:`~d2dmimo.channel.LinkBudget`. Missing keys take the defaults.
"""

import argparse
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .channel import LinkBudget
from .errors import ConfigurationError
from .sim import SCHEMES, MonteCarloReport, SystemConfig, monte_carlo, nearest_rank_percentile

_BASELINE = "bench1"


def _type_name(t) -> str:
    return t if isinstance(t, str) else t.__name__


_CONFIG_FIELDS = {
    f.name: _type_name(f.type) for f in fields(SystemConfig) if f.name != "budget"
}
_BUDGET_FIELDS = {f.name: _type_name(f.type) for f in fields(LinkBudget)}


@dataclass
class ExperimentSpec:
    """Everything one invocation of the driver needs."""

    config_path: str | None = None
    schemes: list[str] = field(default_factory=lambda: ["proposed", "bench1"])
    out_dir: str = "results"
    overrides: dict[str, str] = field(default_factory=dict)
    verbosity: int = 0


def _coerce(key: str, raw: str, typ: str):
    raw = raw.strip()
    if typ == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"config key {key!r}: cannot parse {raw!r} as bool")
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "str":
            return raw
    except ValueError as err:
        raise ConfigurationError(f"config key {key!r}: {err}") from None
    raise ConfigurationError(f"config key {key!r} has unsupported type {typ}")


def _apply(config: SystemConfig, pairs: dict[str, str]) -> SystemConfig:
    cfg_kwargs = {}
    budget_kwargs = {}
    for key, raw in pairs.items():
        if key in _CONFIG_FIELDS:
            cfg_kwargs[key] = _coerce(key, raw, _CONFIG_FIELDS[key])
        elif key in _BUDGET_FIELDS:
            budget_kwargs[key] = _coerce(key, raw, _BUDGET_FIELDS[key])
        else:
            raise ConfigurationError(f"unknown config key {key!r}")
    if budget_kwargs:
        cfg_kwargs["budget"] = replace(config.budget, **budget_kwargs)
    return replace(config, **cfg_kwargs)


def load_config(path: str | None) -> SystemConfig:
    """Parse a flat key = value config file; missing keys take defaults."""
    pairs: dict[str, str] = {}
    if path is not None:
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = stripped.split("=", 1)
            pairs[key.strip()] = raw
    config = _apply(SystemConfig(), pairs)
    config.validate()
    return config


def dump_config(config: SystemConfig) -> str:
    """Canonical text form of a config (round-trips through load_config)."""

    def fmt(v):
        return v if isinstance(v, str) else repr(v)

    lines = []
    for f in fields(SystemConfig):
        if f.name == "budget":
            continue
        lines.append(f"{f.name} = {fmt(getattr(config, f.name))}")
    for f in fields(LinkBudget):
        lines.append(f"{f.name} = {fmt(getattr(config.budget, f.name))}")
    return "\n".join(lines) + "\n"


def emit_cdf_csv(report: MonteCarloReport, path) -> None:
    """Write the empirical CDF of long-term user rates, ascending, cdf = i/n."""
    sample = report.cdf_sample_mbps
    if sample.size == 0:
        raise ValueError("cannot emit CDF for an empty report")
    n = sample.size
    lines = ["rate_mbps,cdf"]
    for i, x in enumerate(sample, 1):
        lines.append(f"{float(x)!r},{i / n!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def percentile_report(
    reports: dict[str, MonteCarloReport], percentiles: list[float]
) -> list[tuple]:
    """Rows (scheme, percentile, rate_mbps, gain_vs_baseline_pct or None)."""
    base = reports.get(_BASELINE)
    rows = []
    for scheme, rep in reports.items():
        for p in percentiles:
            val = nearest_rank_percentile(rep.cdf_sample_mbps, p)
            gain = None
            if base is not None:
                ref = nearest_rank_percentile(base.cdf_sample_mbps, p)
                if ref > 0:
                    gain = 100.0 * (val - ref) / ref
            rows.append((scheme, p, val, gain))
    return rows


def _write_percentiles_csv(rows: list[tuple], path) -> None:
    lines = ["scheme,percentile,rate_mbps,gain_vs_bench1_pct"]
    for scheme, p, val, gain in rows:
        gain_s = "" if gain is None else repr(round(gain, 4))
        lines.append(f"{scheme},{p!r},{val!r},{gain_s}")
    Path(path).write_text("\n".join(lines) + "\n")


def compare_schemes(spec: ExperimentSpec) -> int:
    """Run every requested scheme under common random numbers and report.

    Writes ``<scheme>_cdf.csv`` per scheme, ``percentiles.csv``, and
    ``run.log`` (config echo, per-trial convergence stats, channel
    checksums). Returns a process exit status.
    """
    try:
        if not spec.schemes:
            raise ConfigurationError("scheme list must not be empty")
        for s in spec.schemes:
            if s not in SCHEMES:
                raise ConfigurationError(f"unknown scheme {s!r}; choose from {SCHEMES}")
        config = load_config(spec.config_path)
        config = _apply(config, spec.overrides)
        config.validate()
        out = Path(spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)

        log = ["# configuration", dump_config(config).rstrip("\n"), "", "# trials"]
        reports: dict[str, MonteCarloReport] = {}
        for scheme in spec.schemes:
            rep = monte_carlo(replace(config, scheme=scheme))
            reports[scheme] = rep
            emit_cdf_csv(rep, out / f"{scheme}_cdf.csv")
            if spec.verbosity:
                print(f"{scheme}: 10th={rep.percentiles[10]:.3f} Mbps "
                      f"50th={rep.percentiles[50]:.3f} Mbps", file=sys.stderr)
            for t, chk in enumerate(rep.checksums):
                log.append(
                    f"scheme={scheme} trial={t} checksum={chk} "
                    f"converged={'yes' if rep.converged_fraction == 1.0 else 'mixed'}"
                )
            log.append(
                f"scheme={scheme} mean_iterations={rep.iterations_mean!r} "
                f"converged_fraction={rep.converged_fraction!r} redraws={rep.redraws}"
            )

        rows = percentile_report(reports, [10, 50])
        _write_percentiles_csv(rows, out / "percentiles.csv")

        first = next(iter(reports.values())).checksums
        shared = all(rep.checksums == first for rep in reports.values())
        log.append("")
        log.append(f"# common random numbers: {'ok' if shared else 'MISMATCH'}")
        (out / "run.log").write_text("\n".join(log) + "\n")
        return 0
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"error: {err}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="d2dmimo",
        description="Compare cooperative D2D virtual-MIMO schemes by Monte-Carlo simulation.",
    )
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument(
        "--scheme",
        default="proposed,bench1",
        help=f"comma-separated list from {','.join(SCHEMES)}",
    )
    parser.add_argument("--trials", type=int, default=None, help="number of trials T")
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed")
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )
    parser.add_argument("--workers", type=int, default=None, help="parallel trial workers")
    parser.add_argument("--freeze-topology", action="store_true", help="one topology for all trials")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    args = parser.parse_args(argv)

    overrides: dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            print(f"error: --set expects KEY=VALUE (got {item!r})", file=sys.stderr)
            return 2
        key, val = item.split("=", 1)
        overrides[key.strip()] = val
    if args.trials is not None:
        overrides["trials"] = str(args.trials)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.workers is not None:
        overrides["workers"] = str(args.workers)
    if args.freeze_topology:
        overrides["freeze_topology"] = "true"

    spec = ExperimentSpec(
        config_path=args.config,
        schemes=[s.strip() for s in args.scheme.split(",") if s.strip()],
        out_dir=args.out,
        overrides=overrides,
        verbosity=args.verbose,
    )
    return compare_schemes(spec)


if __name__ == "__main__":
    raise SystemExit(main())
