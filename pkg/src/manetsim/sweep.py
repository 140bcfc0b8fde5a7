"""Parameter sweeps: many independent runs of one base scenario, plus median aggregation."""

from __future__ import annotations

import dataclasses
import hashlib
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .metrics import CSV_COLUMNS, MetricsReport, render_csv
from .network import Simulation
from .scenario import SECTIONS, ScenarioConfig, ScenarioError, parse_scenario, read_text

PROTOCOLS = ("mcba", "aodv-baseline")

# metrics that get a median in the aggregate table
AGGREGATED = ("sent", "delivered", "dropped", "control_pkts", "pdr", "avg_delay_s",
              "throughput_pkts", "avg_energy_j", "control_overhead", "throughput_bps")
AGGREGATE_COLUMNS = ("scenario_id", "parameter", "value", "protocol", "runs") + AGGREGATED


class SweepError(RuntimeError):
    """A sweep cell failed; the message names the cell."""


@dataclass
class SweepSpec:
    base: ScenarioConfig
    parameter: str
    values: list
    seeds: list[int]
    protocols: tuple[str, ...] = PROTOCOLS
    paired: bool = True

    def cells(self) -> list["Cell"]:
        out = []
        for value in self.values:
            for index, seed in enumerate(self.seeds):
                for protocol in self.protocols:
                    out.append(Cell(self.parameter, value, index, seed, protocol,
                                    cell_seed(seed, value, index,
                                              None if self.paired else protocol)))
        return out

    def config_for(self, cell: "Cell") -> ScenarioConfig:
        section, key = self.parameter.split(".", 1)
        return self.base.with_overrides(protocol=cell.protocol, seed=cell.seed,
                                        **{f"{section}__{key}": cell.value})


@dataclass(frozen=True)
class Cell:
    parameter: str
    value: object
    index: int
    master_seed: int
    protocol: str
    seed: int

    def label(self) -> str:
        return (f"{self.parameter}={self.value} seed#{self.index} ({self.master_seed})"
                f" protocol={self.protocol}")


def cell_seed(master_seed: int, value, index: int, protocol: str | None = None) -> int:
    """Stable per-cell seed. Adding cells never changes the seed of an existing one."""
    parts = [str(master_seed), repr(value), str(index)]
    if protocol is not None:
        parts.append(protocol)
    digest = hashlib.sha256("/".join(parts).encode()).digest()
    return int.from_bytes(digest[:4], "big") & 0x7FFFFFFF


def _split_list(raw: str) -> list[str]:
    return [tok for tok in raw.replace(",", " ").split() if tok]


def parse_sweep(text: str, source: str = "<sweep>", base_dir: str = ".") -> SweepSpec:
    """Sweep file: ordinary scenario keys plus ``sweep.*`` keys.

    ``sweep.base`` may name a scenario file (relative to the sweep file) whose
    keys come first; keys in the sweep file itself must not repeat them.
    """
    lines = text.splitlines()

    def is_sweep(line):
        return line.split("#", 1)[0].strip().startswith("sweep.")

    # blank rather than drop lines so diagnostics keep their line numbers
    sweep_only = "\n".join(line if is_sweep(line) else "" for line in lines)
    own = "\n".join("" if is_sweep(line) else line for line in lines)
    _, extras = parse_scenario(sweep_only, source, extra_sections=("sweep",))
    known = {"sweep.base", "sweep.parameter", "sweep.values", "sweep.seeds", "sweep.protocols",
             "sweep.paired"}
    for key, (_, lineno) in extras.items():
        if key not in known:
            raise ScenarioError(f"{source}:{lineno}: unknown key {key!r}")
    if "sweep.base" in extras:
        raw, lineno = extras["sweep.base"]
        path = os.path.join(base_dir, raw.strip().strip('"'))
        try:
            base_text = read_text(path)
        except OSError as exc:
            raise ScenarioError(f"{source}:{lineno}: sweep.base: {exc}") from None
        cfg, _ = parse_scenario(base_text + "\n" + own, f"{path}+{source}")
    else:
        cfg, _ = parse_scenario(own, source)

    def get(key, default=None):
        if key in extras:
            return extras[key]
        if default is None:
            raise ScenarioError(f"{source}: missing required key {key!r}")
        return default

    parameter, lineno = get("sweep.parameter")
    parameter = parameter.strip()
    section, _, name = parameter.partition(".")
    if section not in SECTIONS or not any(f.name == name
                                          for f in dataclasses.fields(SECTIONS[section])):
        raise ScenarioError(f"{source}:{lineno}: sweep.parameter: unknown key {parameter!r}")
    raw_values, lineno = get("sweep.values")
    current = getattr(getattr(cfg, section), name)
    values = []
    for tok in _split_list(raw_values):
        try:
            values.append(int(tok) if isinstance(current, int) and not isinstance(current, bool)
                          else float(tok))
        except ValueError:
            raise ScenarioError(f"{source}:{lineno}: sweep.values: malformed value {tok!r}") \
                from None
    if not values:
        raise ScenarioError(f"{source}:{lineno}: sweep.values: must not be empty")
    raw_seeds, lineno = get("sweep.seeds", (str(cfg.scenario.seed), 0))
    try:
        seeds = [int(tok) for tok in _split_list(raw_seeds)]
    except ValueError:
        raise ScenarioError(f"{source}:{lineno}: sweep.seeds: expected integers") from None
    if not seeds:
        raise ScenarioError(f"{source}:{lineno}: sweep.seeds: must not be empty")
    raw_protocols, lineno = get("sweep.protocols", (" ".join(PROTOCOLS), 0))
    protocols = tuple(_split_list(raw_protocols))
    bad = [p for p in protocols if p not in PROTOCOLS]
    if bad or not protocols:
        raise ScenarioError(f"{source}:{lineno}: sweep.protocols: unknown protocol {bad}")
    raw_paired, lineno = get("sweep.paired", ("true", 0))
    if raw_paired.strip().lower() not in ("true", "false"):
        raise ScenarioError(f"{source}:{lineno}: sweep.paired: expected true or false")
    spec = SweepSpec(cfg, parameter, values, seeds, protocols,
                     raw_paired.strip().lower() == "true")
    for value in values:
        # surface validation errors for every swept value before anything runs
        spec.config_for(Cell(parameter, value, 0, seeds[0], protocols[0], seeds[0]))
    return spec


def load_sweep(path) -> SweepSpec:
    return parse_sweep(read_text(path), os.fspath(path), os.path.dirname(os.fspath(path)) or ".")


def _run_cell(args) -> MetricsReport:
    cfg, trace = args
    return Simulation(cfg, trace).run()


def run_sweep(spec: SweepSpec, jobs: int = 1, trace: bool = True) -> list[tuple[Cell, MetricsReport]]:
    """Run every cell. Results come back in cell order whatever ``jobs`` is."""
    cells = spec.cells()
    configs = [(spec.config_for(cell), trace) for cell in cells]
    results: list[tuple[Cell, MetricsReport]] = []
    if jobs <= 1:
        for cell, args in zip(cells, configs):
            try:
                results.append((cell, _run_cell(args)))
            except Exception as exc:
                raise SweepError(f"cell {cell.label()} failed: {exc}") from exc
        return results
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_cell, args) for args in configs]
        for cell, fut in zip(cells, futures):
            try:
                results.append((cell, fut.result()))
            except Exception as exc:
                for other in futures:
                    other.cancel()
                raise SweepError(f"cell {cell.label()} failed: {exc}") from exc
    return results


def _median(values):
    present = [v for v in values if v is not None]
    return statistics.median(present) if present else None


def aggregate(spec: SweepSpec, results) -> list[dict]:
    rows = []
    for value in spec.values:
        for protocol in spec.protocols:
            picked = [r.row() for c, r in results if c.value == value and c.protocol == protocol]
            row = {"scenario_id": spec.base.scenario.id, "parameter": spec.parameter,
                   "value": value, "protocol": protocol, "runs": len(picked)}
            for name in AGGREGATED:
                row[name] = _median([p[name] for p in picked])
            rows.append(row)
    return rows


def write_sweep(spec: SweepSpec, results, out_dir) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    runs = os.path.join(out_dir, "runs.csv")
    agg = os.path.join(out_dir, "aggregate.csv")
    with open(runs, "w", newline="") as fh:
        fh.write(render_csv([r for _, r in results], CSV_COLUMNS))
    with open(agg, "w", newline="") as fh:
        fh.write(render_csv(aggregate(spec, results), AGGREGATE_COLUMNS))
    return {"runs": runs, "aggregate": agg}
