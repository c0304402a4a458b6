"""JSON experiment configs and the seeded dataset/identification jobs behind the CLI."""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .ident import IdentConfig, identify
from .mimo_core import MimoFirModel, mimo_apply, read_model_csv
from .signals import ArSpec, MultichannelSignal, NoiseSpec, add_noise, ar_generate, read_csv, stack


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


def _check_keys(section: dict, path: str, required=(), optional=()):
    if not isinstance(section, dict):
        raise ConfigError(path or "<root>", "expected a JSON object")
    for k in section:
        if k not in required and k not in optional:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown key")
    for k in required:
        if k not in section:
            raise ConfigError(f"{path}.{k}" if path else k, "missing")


def _number(value, field, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(field, f"expected an integer, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(field, f"must be > 0, got {value!r}")
    return int(value) if integer else float(value)


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _snr_key(snr: float) -> int:
    return int(np.float64(snr).view(np.uint64))


def snr_label(snr: float) -> str:
    return format(snr, "g")


@dataclass(frozen=True)
class ExperimentConfig:
    samples: int
    output_dir: Path
    ar: Optional[tuple] = None
    input_csv: Optional[tuple] = None
    true_model: Optional[MimoFirModel] = None
    structure: str = "full"
    ident: IdentConfig = IdentConfig(taps=1)
    snrs: tuple = ()
    seeds: tuple = (0,)

    @property
    def inputs(self) -> int:
        return self.true_model.inputs

    @property
    def outputs(self) -> int:
        return self.true_model.outputs

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from None
        return cls.from_dict(raw, base=path.parent)

    @classmethod
    def from_dict(cls, raw: dict, base: Path = Path(".")) -> "ExperimentConfig":
        _check_keys(raw, "", required=("samples", "generator", "true_model", "identification", "noise"),
                    optional=("output_dir",))
        T = _number(raw["samples"], "samples", integer=True)
        if T < 0:
            raise ConfigError("samples", "must be >= 0")
        out = Path(raw.get("output_dir", "."))

        gen = raw["generator"]
        _check_keys(gen, "generator", optional=("ar", "input_csv"))
        if ("ar" in gen) == ("input_csv" in gen):
            raise ConfigError("generator", "give exactly one of 'ar' or 'input_csv'")
        ar = input_csv = None
        if "ar" in gen:
            if not isinstance(gen["ar"], list) or not gen["ar"]:
                raise ConfigError("generator.ar", "expected a non-empty list of AR specs")
            specs = []
            for i, s in enumerate(gen["ar"]):
                f = f"generator.ar[{i}]"
                _check_keys(s, f, required=("poles",), optional=("drive_variance", "seed", "burn_in"))
                poles = []
                for j, pole in enumerate(s["poles"]):
                    if not isinstance(pole, list) or len(pole) != 2:
                        raise ConfigError(f"{f}.poles[{j}]", "expected [radius, angle]")
                    poles.append((_number(pole[0], f"{f}.poles[{j}]"), _number(pole[1], f"{f}.poles[{j}]")))
                try:
                    specs.append(ArSpec(
                        poles,
                        drive_variance=_number(s.get("drive_variance", 1.0), f"{f}.drive_variance", positive=True),
                        seed=_number(s.get("seed", i), f"{f}.seed", integer=True),
                        burn_in=_number(s.get("burn_in", 0), f"{f}.burn_in", integer=True),
                    ))
                except ConfigError:
                    raise
                except ValueError as exc:
                    raise ConfigError(f, str(exc)) from None
            ar = tuple(specs)
            P = len(specs)
        else:
            paths = gen["input_csv"]
            paths = [paths] if isinstance(paths, str) else paths
            if not isinstance(paths, list) or not all(isinstance(p, str) for p in paths) or not paths:
                raise ConfigError("generator.input_csv", "expected a path or list of paths")
            input_csv = tuple(base / p for p in paths)
            P = None

        tm = raw["true_model"]
        _check_keys(tm, "true_model", optional=("structure", "coefficients", "model_csv"))
        structure = tm.get("structure", "full")
        if structure not in ("full", "diagonal"):
            raise ConfigError("true_model.structure", f"expected 'full' or 'diagonal', got {structure!r}")
        if ("coefficients" in tm) == ("model_csv" in tm):
            raise ConfigError("true_model", "give exactly one of 'coefficients' or 'model_csv'")
        try:
            if "model_csv" in tm:
                model = read_model_csv(base / tm["model_csv"])
                if structure == "diagonal":
                    h = model.coefficients
                    if h.shape[0] != h.shape[1]:
                        raise ConfigError("true_model.structure", "diagonal structure requires M = P")
                    off = h.copy()
                    off[np.arange(h.shape[0]), np.arange(h.shape[0])] = 0
                    if np.any(off):
                        raise ConfigError("true_model.model_csv", "diagonal structure but off-diagonal taps are nonzero")
            elif structure == "diagonal":
                model = MimoFirModel.diagonal(np.array(tm["coefficients"], dtype=float))
            else:
                model = MimoFirModel(np.array(tm["coefficients"], dtype=float))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            where = "true_model.model_csv" if "model_csv" in tm else "true_model.coefficients"
            raise ConfigError(where, str(exc)) from None
        if P is not None and model.inputs != P:
            raise ConfigError("true_model", f"model has {model.inputs} inputs but generator defines {P} channels")

        idc = raw["identification"]
        _check_keys(idc, "identification", required=("taps",), optional=("method", "ridge", "lambda", "window"))
        try:
            ident = IdentConfig(
                taps=_number(idc["taps"], "identification.taps", integer=True),
                method=idc.get("method", "block-ls"),
                ridge=_number(idc.get("ridge", 1e-6 if idc.get("method") == "rls" else 0.0), "identification.ridge"),
                forgetting=_number(idc.get("lambda", 1.0), "identification.lambda"),
                window=idc.get("window", "covariance"),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError("identification", str(exc)) from None

        nz = raw["noise"]
        _check_keys(nz, "noise", required=("snrs",), optional=("seeds",))
        if not isinstance(nz["snrs"], list):
            raise ConfigError("noise.snrs", "expected a list")
        snrs = tuple(_number(v, f"noise.snrs[{i}]", positive=True) for i, v in enumerate(nz["snrs"]))
        seeds = nz.get("seeds", [0])
        if not isinstance(seeds, list) or not seeds:
            raise ConfigError("noise.seeds", "expected a non-empty list of integers")
        seeds = tuple(_number(s, f"noise.seeds[{i}]", integer=True) for i, s in enumerate(seeds))
        if any(s < 0 for s in seeds):
            raise ConfigError("noise.seeds", "seeds must be >= 0")
        return cls(T, out, ar, input_csv, model, structure, ident, snrs, seeds)


def make_inputs(cfg: ExperimentConfig, seed: int) -> MultichannelSignal:
    if cfg.ar is not None:
        chans = [ar_generate(replace(spec, seed=derive_seed(spec.seed, seed, p)), cfg.samples)
                 for p, spec in enumerate(cfg.ar)]
        return stack(*chans)
    x = stack(*[read_csv(p) for p in cfg.input_csv])
    if x.channels != cfg.inputs:
        raise ConfigError("generator.input_csv", f"files hold {x.channels} channels, model needs {cfg.inputs}")
    if x.length < cfg.samples:
        raise ConfigError("samples", f"input files hold only {x.length} samples")
    return MultichannelSignal(x.data[:, : cfg.samples])


def make_outputs(cfg: ExperimentConfig, x: MultichannelSignal, seed: int, snr: Optional[float]) -> MultichannelSignal:
    d = mimo_apply(cfg.true_model, x)
    if snr is None or d.length == 0:
        return d
    return add_noise(d, NoiseSpec(snr, derive_seed(seed, _snr_key(snr))))


def run_job(cfg: ExperimentConfig, seed: int, snr: Optional[float]):
    x = make_inputs(cfg, seed)
    d = make_outputs(cfg, x, seed, snr)
    return identify(x, d, cfg.ident, reference=_reference(cfg))


def _reference(cfg: ExperimentConfig) -> Optional[MimoFirModel]:
    """True model at the identification order, if the orders agree."""
    h = cfg.true_model.coefficients
    L = cfg.ident.taps
    if h.shape[2] > L:
        return None
    return MimoFirModel(np.pad(h, ((0, 0), (0, 0), (0, L - h.shape[2]))))


def worker_count(jobs: int, requested: Optional[int] = None) -> int:
    cap = requested or os.environ.get("FBIDENT_THREADS")
    cap = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(jobs, cap))


@dataclass(frozen=True)
class SweepRow:
    snr: float
    m: int
    p: int
    l: int
    true: Optional[float]
    estimated: float
    abs_error: Optional[float]


def sweep(cfg: ExperimentConfig, workers: Optional[int] = None) -> list[SweepRow]:
    """Mean estimate over seeds for every SNR; jobs run in a thread pool."""
    if not cfg.snrs:
        raise ConfigError("noise.snrs", "sweep needs at least one SNR")
    jobs = [(snr, seed) for snr in cfg.snrs for seed in cfg.seeds]
    with ThreadPoolExecutor(max_workers=worker_count(len(jobs), workers)) as pool:
        reports = list(pool.map(lambda job: run_job(cfg, job[1], job[0]), jobs))
    ref = _reference(cfg)
    rows = []
    for i, snr in enumerate(cfg.snrs):
        chunk = reports[i * len(cfg.seeds) : (i + 1) * len(cfg.seeds)]
        mean = np.mean([r.model.coefficients for r in chunk], axis=0)
        for (m, p, l), est in np.ndenumerate(mean):
            true = err = None
            if ref is not None:
                true = float(ref.coefficients[m, p, l])
                err = abs(float(est) - true)
            rows.append(SweepRow(snr, m, p, l, true, float(est), err))
    return rows


def format_table(rows: list[SweepRow], structure: str = "full") -> str:
    """Text table of mean estimates: one block per output, one line per SNR."""
    lines = []
    outputs = sorted({r.m for r in rows})
    for m in outputs:
        sel = [r for r in rows if r.m == m and (structure != "diagonal" or r.p == m)]
        paths = sorted({(r.p, r.l) for r in sel})
        head = ["SNR"] + [f"h{m}({l})" if structure == "diagonal" else f"h{m}[{p}]({l})" for p, l in paths]
        lines.append("  ".join(f"{h:>10}" for h in head))
        truth = {(r.p, r.l): r.true for r in sel}
        if all(v is not None for v in truth.values()):
            lines.append("  ".join([f"{'actual':>10}"] + [f"{truth[k]:>10.4f}" for k in paths]))
        for snr in dict.fromkeys(r.snr for r in sel):
            est = {(r.p, r.l): r.estimated for r in sel if r.snr == snr}
            lines.append("  ".join([f"{snr_label(snr):>10}"] + [f"{est[k]:>10.4f}" for k in paths]))
        lines.append("")
    return "\n".join(lines)
