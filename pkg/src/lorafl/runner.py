"""Scenario execution, figure presets and metric export."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from . import fl
from .config import ScenarioConfig, build_data
from .orchestrator import RunResult, Simulation, Topology, make_link

COLUMNS = (
    "scenario",
    "replication",
    "seed",
    "round",
    "accuracy",
    "loss",
    "completion_time_s",
    "downlink_start_s",
    "downlink_airtime_s",
    "cumulative_uplink_airtime_s",
    "downlink_bytes",
    "downlink_k",
    "downlink_n",
    "uplink_bytes",
    "sampled",
    "decoded",
    "delivered",
)


def build_simulation(cfg: ScenarioConfig, seed: int) -> Simulation:
    shards, test = build_data(cfg, seed)
    topology = Topology.uniform_disk(cfg.topology, fl.stream(seed, fl.TOPOLOGY))
    link = make_link(
        cfg.schedule.link_mode,
        cfg.radio,
        cfg.tables,
        cfg.interference,
        seed,
        cfg.topology.n_clients,
        cfg.analytical.distance_resolution,
    )
    return Simulation(
        radio=cfg.radio,
        tables=cfg.tables,
        interference=cfg.interference,
        codec_cfg=cfg.codec,
        train=cfg.train,
        schedule=cfg.schedule,
        topology=topology,
        shards=shards,
        test=test,
        seed=seed,
        link=link,
    )


def run_replication(cfg: ScenarioConfig, replication: int) -> RunResult:
    return build_simulation(cfg, cfg.seed + replication).run()


def metric_rows(cfg: ScenarioConfig, replication: int, result: RunResult) -> list[dict]:
    seed = cfg.seed + replication
    return [
        {
            "scenario": cfg.name,
            "replication": replication,
            "seed": seed,
            "round": m.round,
            "accuracy": m.accuracy,
            "loss": m.loss,
            "completion_time_s": m.completion_time,
            "downlink_start_s": m.downlink_start,
            "downlink_airtime_s": m.downlink_airtime,
            "cumulative_uplink_airtime_s": m.cumulative_uplink_airtime,
            "downlink_bytes": m.downlink_bytes,
            "downlink_k": m.downlink_k,
            "downlink_n": m.downlink_n,
            "uplink_bytes": m.uplink_bytes,
            "sampled": ";".join(map(str, m.sampled)),
            "decoded": ";".join(map(str, m.decoded)),
            "delivered": ";".join(map(str, m.delivered)),
        }
        for m in result.metrics
    ]


def _job(args: tuple[ScenarioConfig, int]) -> list[dict]:
    cfg, rep = args
    return metric_rows(cfg, rep, run_replication(cfg, rep))


def run_scenarios(configs: Iterable[ScenarioConfig], workers: int = 1) -> list[dict]:
    """Run every replication of every scenario; rows come back in input order."""
    jobs = [(cfg, rep) for cfg in configs for rep in range(cfg.replications)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_job, jobs))
    else:
        chunks = [_job(j) for j in jobs]
    return [row for chunk in chunks for row in chunk]


def _cell(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def export_csv(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in COLUMNS])
    path.write_text(buf.getvalue(), newline="")
    return path


def export_jsonl(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps({c: row[c] for c in COLUMNS}) + "\n")
    return path


def export(rows: list[dict], path: str | Path, fmt: str = "csv") -> Path:
    if fmt == "csv":
        return export_csv(rows, path)
    if fmt == "jsonl":
        return export_jsonl(rows, path)
    raise ValueError(f"unknown export format {fmt!r}")


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path | None = None, variants: list[ScenarioConfig] | None = None) -> list[Path]:
    out = Path(out_dir if out_dir is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_scenarios(variants or [cfg], cfg.workers)
    return [export_csv(rows, out / "metrics.csv"), export_jsonl(rows, out / "metrics.jsonl")]


# -- presets ----------------------------------------------------------------


@dataclass(frozen=True)
class Variant:
    name: str
    overrides: dict


def _rate_label(r: Fraction) -> str:
    return str(Fraction(r))


PRESETS: dict[str, list[Variant]] = {
    # Accuracy and completion time for (SF, FEC rate) pairs.
    "fig1": [
        Variant(f"sf{sf}_r{_rate_label(r)}", {"schedule.sf": sf, "schedule.fec_rate": r})
        for sf, r in [(7, Fraction(1)), (7, Fraction(1, 2)), (9, Fraction(1)), (9, Fraction(1, 2)), (12, Fraction(1, 2))]
    ],
    # FEC rate sweep at SF 9.
    "fig2": [
        Variant(f"sf9_r{_rate_label(r)}", {"schedule.sf": 9, "schedule.fec_rate": r})
        for r in (Fraction(1), Fraction(2, 3), Fraction(1, 2))
    ],
    # Uplink and downlink airtime at SF 9, rate 1/2.
    "fig5": [Variant("sf9_r1/2", {"schedule.sf": 9, "schedule.fec_rate": Fraction(1, 2)})],
    # Interferer intensity sweep with the analytical link, plus full-sim check points.
    "fig6": [
        Variant(
            f"sf{sf}_lam{lam:g}_analytical",
            {"schedule.sf": sf, "schedule.fec_rate": Fraction(1, 2), "interference.intensity": lam, "schedule.link_mode": "analytical"},
        )
        for lam in (1e-5, 1e-4, 1e-3)
        for sf in (7, 9, 10)
    ]
    + [
        Variant(
            f"sf{sf}_lam0.0001_sim",
            {"schedule.sf": sf, "schedule.fec_rate": Fraction(1, 2), "interference.intensity": 1e-4, "schedule.link_mode": "sim"},
        )
        for sf in (7, 9, 10)
    ],
}


def expand_preset(cfg: ScenarioConfig, preset: str | None) -> list[ScenarioConfig]:
    if preset is None:
        return [cfg]
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    out = []
    for v in PRESETS[preset]:
        overrides = {"name": f"{preset}_{v.name}", **v.overrides}
        out.append(cfg.replace(**overrides))
    return out
