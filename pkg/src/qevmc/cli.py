"""Command-line interface and experiment presets.

Config files are INI-style: ``[section]`` headers followed by ``key = value``
lines (``#`` starts a comment).  Every key must appear in :data:`SCHEMA`;
anything else is rejected.  ``--set section.key=value`` overrides a key from
the command line.

Seeds: the master seed ``run.seed`` is split per component by
``SeedSequence(master, spawn_key=(component_id, index))``, where the
component ids are listed in :data:`COMPONENTS` and ``index`` counts the
instances of that component within one run (layer count, system size or
source number).  The derived seeds are written to the manifest.

Exit codes: 0 on success, 2 for configuration errors (including missing
prerequisite files), 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    BoundViolation,
    NonReversibleChain,
    default_tvd_grid,
    mixing_report,
    speedup_factor,
    transition_matrix,
)
from .exact_engine import ConvergenceError, expectation
from .mcmc import ChainConfig, Mixer, SlaterSource, StoreSource, UniformSource, run
from .models import (
    Boundary,
    FixedFill,
    HamiltonianSpec,
    LatticeSpec,
    ModelKind,
    enumerate_sector,
)
from .samples import (
    EmptySelection,
    SampleFileError,
    SampleStore,
    concatenate,
    empirical_distribution,
    mix_with_uniform,
    postselect,
)
from .sr_optimizer import (
    Diverged,
    SolveFailure,
    SrConfig,
    compare_sources,
    reference_energy,
    tfi_ground_energy,
    train,
)
from .trial_wavefunctions import (
    GutzwillerWF,
    NqsWF,
    SlaterDeterminant,
    ZeroAmplitudeError,
    slater_distribution,
)
from .vqe import HvaCircuit, SizeLimitExceeded, optimize, sample_state

logger = logging.getLogger("qevmc")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

COMPONENTS = {
    "vqe": 0,
    "vqe-samples": 1,
    "chain": 2,
    "sr": 3,
    "mix": 4,
    "concat": 5,
    "reference": 6,
    "nqs-init": 7,
}

PRESETS = (
    "hubbard-1x4",
    "hubbard-1x8",
    "hubbard-2x4",
    "hubbard-large-L",
    "tfi-16-exact",
    "tfi-24-sampled",
    "tfi-concat-40-80",
    "sr-compare-24",
    "acceptance-study",
)


class ConfigError(ValueError):
    pass


class MissingPrerequisite(ConfigError):
    pass


def derive_seed(master: int, component: str, index: int = 0) -> int:
    ss = np.random.SeedSequence(master, spawn_key=(COMPONENTS[component], index))
    return int(ss.generate_state(1, np.uint32)[0])


# --------------------------------------------------------------------------- config


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _intlist(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


SCHEMA: dict[str, dict[str, tuple]] = {
    "model": {
        "kind": (str, "hubbard"),
        "rows": (int, 1),
        "cols": (int, 4),
        "boundary": (str, "open"),
        "U": (float, 4.0),
        "J": (float, 1.0),
        "h": (float, 1.0),
    },
    "wavefunction": {
        "type": (str, "gutzwiller"),
        "c": (float, 0.421),
        "alpha": (int, 1),
        "nqs_path": (str, ""),
    },
    "vqe": {
        "layers": (_intlist, [2]),
        "restarts": (int, 10),
        "samples": (int, 5000),
        "init_scale": (float, 0.5),
        "gradient": (str, "adjoint"),
        # start layer count L from the optimum for L - 1 padded with zeros
        "warm_start": (_bool, True),
        # optimise on a chain of this many spins and reuse the angles (0 = optimise directly)
        "transfer_from": (int, 0),
    },
    "chain": {
        "n_chains": (int, 5000),
        "chain_length": (int, 200),
        "burn_in": (int, 0),
        "thinning": (int, 1),
        "block_size": (int, 4096),
        "source": (str, "uniform"),
        "samples_path": (str, ""),
        "reference_length": (int, 500),
        "reference_window": (int, 10),
    },
    "sr": {
        "iterations": (int, 200),
        "n_samples": (int, 5000),
        "chain_length": (int, 0),
        "eta": (float, 0.05),
        "lam0": (float, 100.0),
        "lam_decay": (float, 0.9),
        "lam_min": (float, 1e-4),
        "lam_floor": (float, 1e-4),
        "init_std": (float, 0.01),
    },
    "analysis": {
        "steps": (int, 200),
        "tvd_min": (float, 1e-4),
        "tvd_max": (float, 0.5),
        "n_targets": (int, 40),
        "check_bounds": (_bool, True),
        "external": (str, ""),
    },
    "large": {
        "sizes": (_intlist, [16, 24, 48]),
        "block": (int, 8),
    },
    "concat": {
        "sizes": (_intlist, [40, 80]),
        "block": (int, 20),
    },
    "run": {
        "seed": (int, 0),
        "out": (str, "out"),
    },
}


@dataclass
class ExperimentConfig:
    values: dict[str, dict] = field(default_factory=dict)
    source: str = "<defaults>"

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        return cls({s: {k: _copy(v[1]) for k, v in keys.items()} for s, keys in SCHEMA.items()})

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, raw):
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {section}.{key}")
        conv = SCHEMA[section][key][0]
        try:
            value = conv(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: {exc}") from exc
        self.values[section][key] = value

    @property
    def seed(self) -> int:
        return self.get("run", "seed")

    def spec(self) -> HamiltonianSpec:
        m = self.values["model"]
        lattice = LatticeSpec((m["rows"], m["cols"]), Boundary(m["boundary"]), ModelKind(m["kind"]))
        return HamiltonianSpec(lattice, U=m["U"], J=m["J"], h=m["h"])

    def sr_config(self, alpha: int | None = None, seed_index: int = 0) -> SrConfig:
        s = self.values["sr"]
        return SrConfig(
            iterations=s["iterations"], n_samples=s["n_samples"],
            chain_length=s["chain_length"] or None, eta=s["eta"], lam0=s["lam0"],
            lam_decay=s["lam_decay"], lam_min=s["lam_min"], lam_floor=s["lam_floor"],
            alpha=self.get("wavefunction", "alpha") if alpha is None else alpha,
            init_std=s["init_std"], seed=derive_seed(self.seed, "sr", seed_index))

    def chain_config(self, seed_index: int = 0, **overrides) -> ChainConfig:
        c = self.values["chain"]
        kw = dict(n_chains=c["n_chains"], chain_length=c["chain_length"], burn_in=c["burn_in"],
                  thinning=c["thinning"], block_size=c["block_size"],
                  seed=derive_seed(self.seed, "chain", seed_index))
        kw.update(overrides)
        return ChainConfig(**kw)

    def validate(self):
        m = self.values["model"]
        for key in ("rows", "cols"):
            if m[key] < 1:
                raise ConfigError(f"model.{key}: must be a positive integer")
        for sec, key in (("model", "kind"), ("model", "boundary")):
            try:
                (ModelKind if key == "kind" else Boundary)(m[key])
            except ValueError as exc:
                raise ConfigError(f"{sec}.{key}: {exc}") from exc
        if m["kind"] == "hubbard" and m["U"] < 0:
            logger.warning("model.U = %g < 0: attractive Hubbard model (outside the studied regime)", m["U"])
        if self.get("wavefunction", "type") not in ("gutzwiller", "nqs"):
            raise ConfigError("wavefunction.type: expected 'gutzwiller' or 'nqs'")
        if self.get("wavefunction", "alpha") < 1:
            raise ConfigError("wavefunction.alpha: must be at least 1")
        c = self.values["chain"]
        if c["n_chains"] < 1:
            raise ConfigError("chain.n_chains: must be at least 1")
        for key in ("chain_length", "burn_in"):
            if c[key] < 0:
                raise ConfigError(f"chain.{key}: must be non-negative")
        if c["thinning"] < 1:
            raise ConfigError("chain.thinning: must be at least 1")
        if any(L < 0 for L in self.get("vqe", "layers")):
            raise ConfigError("vqe.layers: must be non-negative")
        if self.get("vqe", "gradient") not in ("fd", "adjoint"):
            raise ConfigError("vqe.gradient: expected 'fd' or 'adjoint'")
        if self.get("vqe", "samples") < 1:
            raise ConfigError("vqe.samples: must be at least 1")
        if self.get("sr", "iterations") < 0:
            raise ConfigError("sr.iterations: must be non-negative")
        if self.get("analysis", "steps") < 0:
            raise ConfigError("analysis.steps: must be non-negative")

    def manifest(self) -> dict:
        return {s: dict(v) for s, v in self.values.items()}


def _copy(v):
    return list(v) if isinstance(v, list) else v


def _line_col(lines: list[str], lineno: int) -> tuple[int, int]:
    text = lines[lineno - 1] if 0 < lineno <= len(lines) else ""
    return lineno, len(text) - len(text.lstrip()) + 1


def parse_config(path: str | Path, cfg: ExperimentConfig | None = None) -> ExperimentConfig:
    """Strict INI parsing on top of the defaults (or of ``cfg``)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    text = path.read_text(encoding="utf-8")
    return parse_config_text(text, str(path), cfg)


def parse_config_text(text: str, name: str = "<string>",
                      cfg: ExperimentConfig | None = None) -> ExperimentConfig:
    lines = text.splitlines()
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=name)
    except configparser.MissingSectionHeaderError as exc:
        ln, col = _line_col(lines, exc.lineno)
        raise ConfigError(f"{name}:{ln}:{col}: key outside any [section]") from exc
    except configparser.ParsingError as exc:
        ln, _ = exc.errors[0]
        ln, col = _line_col(lines, ln)
        raise ConfigError(f"{name}:{ln}:{col}: syntax error, expected 'key = value'") from exc
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        ln, col = _line_col(lines, exc.lineno or 0)
        raise ConfigError(f"{name}:{ln}:{col}: {exc.message if hasattr(exc, 'message') else exc}") from exc
    cfg = ExperimentConfig.defaults() if cfg is None else cfg
    cfg.source = name
    where = _positions(lines)
    for section in parser.sections():
        if section not in SCHEMA:
            ln, col = where.get((section, None), (0, 1))
            raise ConfigError(f"{name}:{ln}:{col}: unknown section [{section}]")
        for key, raw in parser.items(section):
            ln, col = where.get((section, key), (0, 1))
            if key not in SCHEMA[section]:
                raise ConfigError(f"{name}:{ln}:{col}: unknown key {section}.{key}")
            try:
                cfg.set(section, key, raw)
            except ConfigError as exc:
                vcol = lines[ln - 1].index("=") + 2 if 0 < ln <= len(lines) and "=" in lines[ln - 1] else col
                raise ConfigError(f"{name}:{ln}:{vcol}: {exc}") from exc
    cfg.validate()
    return cfg


def _positions(lines: list[str]) -> dict:
    """(section, key) -> (line, column) of each key; (section, None) for headers."""
    out, section = {}, None
    for k, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text[0] in "#;":
            continue
        col = len(raw) - len(raw.lstrip()) + 1
        if text.startswith("[") and "]" in text:
            section = text[1:text.index("]")].strip()
            out.setdefault((section, None), (k, col))
        elif "=" in text:
            out.setdefault((section, text.split("=", 1)[0].strip()), (k, col))
    return out


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    for item in overrides or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        cfg.set(section, key, value.strip())
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------- output helpers


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def write_json(path: Path, doc: dict) -> Path:
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _outdir(cfg: ExperimentConfig, override: str | None = None) -> Path:
    out = Path(override or cfg.get("run", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------- building blocks


def build_wavefunction(cfg: ExperimentConfig, spec: HamiltonianSpec):
    kind = cfg.get("wavefunction", "type")
    if kind == "gutzwiller":
        if spec.model is not ModelKind.HUBBARD:
            raise ConfigError("wavefunction.type = gutzwiller needs model.kind = hubbard")
        return GutzwillerWF(cfg.get("wavefunction", "c"), SlaterDeterminant.ground_state(spec.lattice))
    path = cfg.get("wavefunction", "nqs_path")
    if not path:
        raise ConfigError("wavefunction.nqs_path is required for an NQS wavefunction")
    return load_nqs(Path(path), spec, producer="sr train")


def load_nqs(path: Path, spec: HamiltonianSpec, producer: str) -> NqsWF:
    if not path.exists():
        raise MissingPrerequisite(f"trained NQS file {path} not found; produce it with `qevmc {producer}`"
                                  if producer.startswith("sr ") else
                                  f"trained NQS file {path} not found; run `qevmc preset {producer}` first")
    wf = NqsWF.load(path)
    if wf.n_visible != spec.n_sites:
        raise ConfigError(f"{path}: NQS has {wf.n_visible} visible units, model has {spec.n_sites} spins")
    return wf


def _vqe_theta(cfg: ExperimentConfig, spec: HamiltonianSpec, layers: int, index: int,
               log: dict) -> tuple[np.ndarray, HvaCircuit]:
    """Optimal HVA angles, optimised on ``spec`` or on a smaller chain (vqe.transfer_from)."""
    seed = derive_seed(cfg.seed, "vqe", index)
    n_small = cfg.get("vqe", "transfer_from")
    kw = dict(restarts=cfg.get("vqe", "restarts"), seed=seed, init_scale=cfg.get("vqe", "init_scale"),
              gradient=cfg.get("vqe", "gradient"))
    prev = log.get("_warm", {}).get(layers - 1) if cfg.get("vqe", "warm_start") else None
    if prev is not None:
        kw["x0"] = np.concatenate([prev, np.zeros(3)])
    transfer = bool(n_small) and spec.model is ModelKind.TFI and n_small < spec.n_sites
    if transfer:
        small = HamiltonianSpec(LatticeSpec((1, n_small), spec.lattice.boundary, ModelKind.TFI),
                                J=spec.J, h=spec.h)
        res = optimize(small, layers, **kw)
        circuit = HvaCircuit(spec)
    else:
        circuit = HvaCircuit(spec)
        res = optimize(spec, layers, circuit=circuit, **kw)
    theta = res.ansatz.theta
    log.setdefault("_warm", {})[layers] = theta
    log[f"vqe-{layers}"] = {"optimised_on": n_small if transfer else spec.n_sites,
                            "optimised_energy": res.energy, "initial_energy": res.initial_energy,
                            "theta": theta.tolist(), "seed": seed, "warm_start": prev is not None}
    return theta, circuit


def _public(log: dict) -> dict:
    return {k: v for k, v in log.items() if not k.startswith("_")}


def _tfi_nqs(cfg: ExperimentConfig, spec: HamiltonianSpec, out: Path, tag: str, index: int,
             log: dict) -> NqsWF:
    """Load ``wavefunction.nqs_path`` if set, else train and save an NQS for ``spec``."""
    path = cfg.get("wavefunction", "nqs_path")
    if path:
        return load_nqs(Path(path), spec, producer="sr train")
    sr = cfg.sr_config(seed_index=index)
    trace, wf = train(sr, spec)
    wf.save(out / f"nqs-{tag}.weights")
    write_csv(out / f"sr_trace_{tag}.csv", ["iteration", "energy", "sem", "rel_error", "param_norm"],
              trace.rows())
    log[f"nqs-{tag}"] = {"final_energy": trace.final_energy(), "reference": trace.reference,
                         "rel_error": trace.final_rel_error() if len(trace) else None,
                         "seed": sr.seed, "file": f"nqs-{tag}.weights"}
    return wf


def _tvd_grid(cfg: ExperimentConfig) -> np.ndarray:
    a = cfg.values["analysis"]
    return default_tvd_grid(a["n_targets"], a["tvd_min"], a["tvd_max"])


def _write_mixing_outputs(out: Path, report, l1_too: bool = True) -> dict:
    rows, erows = [], []
    for name, tr in report.sources.items():
        err = report.energy_error(name) if tr.energy is not None else None
        for n, t in enumerate(tr.tvd):
            rows.append((n, name, t, 2.0 * t))
            if err is not None:
                erows.append((n, name, tr.energy[n], err[n]))
    write_csv(out / "tvd.csv", ["step", "source", "tvd", "l1"], rows)
    write_csv(out / "energy.csv", ["step", "source", "energy", "energy_error"], erows)
    srows = []
    for metric, table in (("tvd", report.speedups), ("energy_error", report.energy_speedups)):
        for name, curve in table.items():
            for target, factor in sorted(curve.items(), reverse=True):
                srows.append((name, metric, target, factor))
    write_csv(out / "speedup.csv", ["source", "metric", "target", "factor"], srows)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    contraction = {name: float(np.max(np.diff(tr.tvd))) if len(tr.tvd) > 1 else 0.0
                   for name, tr in report.sources.items()}
    return {"max_tvd_increase": contraction,
            "chi2": {k: s.chi2 for k, s in report.sources.items()},
            "lambda2": report.lam2, "relaxation_time": report.tau}


# --------------------------------------------------------------------------- presets


# (shape, Gutzwiller c, HVA layers) of the three small Hubbard studies
HUBBARD_PRESETS = {
    "hubbard-1x4": ((1, 4), 0.421, 2),
    "hubbard-1x8": ((1, 8), 0.431, 1),
    "hubbard-2x4": ((2, 4), 0.453, 1),
}


def preset_defaults(name: str) -> ExperimentConfig:
    cfg = ExperimentConfig.defaults()
    if name in HUBBARD_PRESETS:
        (r, c), gw, layers = HUBBARD_PRESETS[name]
        cfg.values["model"].update(kind="hubbard", rows=r, cols=c)
        cfg.values["wavefunction"].update(type="gutzwiller", c=gw)
        cfg.values["vqe"]["layers"] = [layers]
    elif name == "hubbard-large-L":
        cfg.values["model"].update(kind="hubbard", rows=1, cols=8)
        cfg.values["wavefunction"].update(type="gutzwiller", c=0.431)
        cfg.values["vqe"].update(layers=[1], samples=5000)
        cfg.values["chain"].update(n_chains=1000, chain_length=200, thinning=10)
    elif name == "tfi-16-exact":
        cfg.values["model"].update(kind="tfi", rows=1, cols=16, h=1.0)
        cfg.values["wavefunction"].update(type="nqs", alpha=1)
        cfg.values["vqe"].update(layers=[1, 2, 3, 4], restarts=3)
        cfg.values["analysis"]["steps"] = 300
    elif name == "tfi-24-sampled":
        cfg.values["model"].update(kind="tfi", rows=1, cols=24, h=1.0)
        cfg.values["wavefunction"].update(type="nqs", alpha=1)
        cfg.values["vqe"].update(layers=[1, 2], transfer_from=16)
        cfg.values["chain"].update(n_chains=5000, chain_length=200)
    elif name == "sr-compare-24":
        cfg.values["model"].update(kind="tfi", rows=1, cols=24, h=1.0)
        cfg.values["wavefunction"].update(type="nqs", alpha=1)
        cfg.values["vqe"].update(layers=[1, 4], transfer_from=16, samples=100000)
    elif name == "tfi-concat-40-80":
        cfg.values["model"].update(kind="tfi", rows=1, cols=20, h=1.0)
        cfg.values["wavefunction"].update(type="nqs", alpha=1)
        cfg.values["vqe"].update(layers=[2], transfer_from=12, samples=5000)
        cfg.values["chain"].update(n_chains=5000, chain_length=200)
    elif name == "acceptance-study":
        cfg.values["model"].update(kind="hubbard", rows=1, cols=8)
        cfg.values["wavefunction"].update(type="gutzwiller", c=0.431)
        cfg.values["vqe"]["layers"] = [1]
        cfg.values["chain"].update(n_chains=20000, chain_length=100)
    else:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    return cfg


def preset_hubbard_exact(cfg: ExperimentConfig, out: Path) -> dict:
    spec = cfg.spec()
    basis = enumerate_sector(spec)
    wf = build_wavefunction(cfg, spec)
    tm = transition_matrix(wf, Mixer.for_spec(spec), basis)
    sources = {"slater": slater_distribution(wf.slater, basis)}
    log: dict = {}
    vqe_energy = {}
    for k, layers in enumerate(cfg.get("vqe", "layers")):
        theta, circuit = _vqe_theta(cfg, spec, layers, k, log)
        vec = circuit.prepare(theta)
        vqe_energy[f"vqe-sim-{layers}layer"] = expectation(circuit.hamiltonian, vec)
        sources[f"vqe-sim-{layers}layer"] = vec.probabilities()
    ext = cfg.get("analysis", "external")
    if ext:
        store = postselect(SampleStore.load(ext), basis.constraint)
        sources["external"] = empirical_distribution(store, basis)
        log["external"] = {"file": ext, "retention": float(store.extra["retention"])}
    report = mixing_report(tm, sources, cfg.get("analysis", "steps"), spec=spec, baseline="slater",
                           tvd_grid=_tvd_grid(cfg), check_bounds=cfg.get("analysis", "check_bounds"))
    summary = _write_mixing_outputs(out, report)
    summary.update(vqe=_public(log), vqe_exact_energy=vqe_energy, target_energy=report.target_energy,
                   support=int(tm.dim), sector=int(basis.dim))
    return summary


def preset_hubbard_large(cfg: ExperimentConfig, out: Path) -> dict:
    small = cfg.spec()
    block = cfg.get("large", "block")
    if small.n_sites != block or small.lattice.shape[0] != 1:
        raise ConfigError(f"hubbard-large-L needs model 1x{block} for the VQE block")
    layers = cfg.get("vqe", "layers")[0]
    log: dict = {}
    theta, circuit = _vqe_theta(cfg, small, layers, 0, log)
    store = sample_state(circuit.prepare(theta), cfg.get("vqe", "samples"),
                         derive_seed(cfg.seed, "vqe-samples", 0), small, layers)
    store.save(out / f"vqe-1x{block}.samples")
    rows = []
    for k, L in enumerate(cfg.get("large", "sizes")):
        if L % block:
            raise ConfigError(f"large.sizes: {L} is not a multiple of the block size {block}")
        spec = HamiltonianSpec(LatticeSpec((1, L)), U=small.U)
        sd = SlaterDeterminant.ground_state(spec.lattice)
        wf = GutzwillerWF(cfg.get("wavefunction", "c"), sd)
        big = concatenate(store, L // block, derive_seed(cfg.seed, "concat", k))
        srcs = {"slater": SlaterSource(sd), "vqe-concat": StoreSource(big, replace=True)}
        for j, (name, src) in enumerate(srcs.items()):
            res = run(cfg.chain_config(seed_index=2 * k + j), wf, Mixer.for_spec(spec), spec, src)
            for s, e, se, a in zip(res.steps, res.mean_energy, res.sem, res.acceptance):
                rows.append((L, name, s, e, se, a))
    write_csv(out / "energy.csv", ["L", "source", "step", "mean_energy", "sem", "acceptance"], rows)
    return {"vqe": _public(log)}


def preset_tfi16(cfg: ExperimentConfig, out: Path) -> dict:
    spec = cfg.spec()
    log: dict = {}
    wf = _tfi_nqs(cfg, spec, out, f"tfi{spec.n_sites}", 0, log)
    circuit = HvaCircuit(spec)
    basis = circuit.basis
    e0 = reference_energy(spec)
    sources = {"uniform": np.full(basis.dim, 1.0 / basis.dim)}
    vqe_err = {}
    for k, layers in enumerate(cfg.get("vqe", "layers")):
        theta, _ = _vqe_theta(cfg, spec, layers, k, log)
        vec = circuit.prepare(theta)
        e = expectation(circuit.hamiltonian, vec)
        vqe_err[f"vqe-{layers}"] = abs(e - e0) / abs(e0)
        sources[f"vqe-{layers}"] = vec.probabilities()
    tm = transition_matrix(wf, Mixer.for_spec(spec), basis)
    report = mixing_report(tm, sources, cfg.get("analysis", "steps"), spec=spec, baseline="uniform",
                           tvd_grid=_tvd_grid(cfg), check_bounds=cfg.get("analysis", "check_bounds"))
    summary = _write_mixing_outputs(out, report)
    nqs_err = abs(report.target_energy - e0) / abs(e0)
    final_vmc_err = {k: abs(s.energy[-1] - e0) / abs(e0) for k, s in report.sources.items()}
    summary.update(runs=_public(log), ground_energy=e0, nqs_energy=report.target_energy,
                   nqs_rel_error=nqs_err, vqe_rel_error=vqe_err, vmc_final_rel_error=final_vmc_err)
    return summary


def _nqs_energy_estimate(cfg: ExperimentConfig, wf, spec: HamiltonianSpec, seed_index: int) -> tuple[float, float]:
    """Long uniform-start chain; mean over the last ``chain.reference_window`` steps."""
    length = cfg.get("chain", "reference_length")
    window = cfg.get("chain", "reference_window")
    cc = cfg.chain_config(seed_index=seed_index, chain_length=length, burn_in=max(length - window + 1, 0),
                          thinning=1)
    cc.seed = derive_seed(cfg.seed, "reference", seed_index)
    res = run(cc, wf, Mixer.spin_flip(spec.n_sites), spec, UniformSource.for_spec(spec))
    tail = res.mean_energy[-window:]
    return float(np.mean(tail)), float(np.sqrt(np.mean(res.sem[-window:] ** 2) / window))


def _energy_curves(cfg, wf, spec, sources: dict, reference: float, tag, seed_base: int, rows: list):
    curves = {}
    for j, (name, src) in enumerate(sources.items()):
        res = run(cfg.chain_config(seed_index=seed_base + j), wf, Mixer.spin_flip(spec.n_sites), spec, src)
        err = np.abs(res.mean_energy - reference) / abs(reference)
        curves[name] = err
        for s, e, se, er, a in zip(res.steps, res.mean_energy, res.sem, err, res.acceptance):
            rows.append((tag, name, s, e, se, er, a))
    return curves


def _energy_speedups(curves: dict, baseline: str, grid) -> dict:
    return {name: speedup_factor(curves[baseline], c, grid) for name, c in curves.items() if name != baseline}


ENERGY_GRID = np.geomspace(0.3, 1e-4, 30)


def preset_tfi24(cfg: ExperimentConfig, out: Path) -> dict:
    spec = cfg.spec()
    tag = f"tfi{spec.n_sites}"
    path = cfg.get("wavefunction", "nqs_path") or str(out / f"nqs-{tag}.weights")
    wf = load_nqs(Path(path), spec, producer="sr-compare-24")
    log: dict = {}
    sources = {"uniform": UniformSource.for_spec(spec)}
    vqe_energy = {}
    for k, layers in enumerate(cfg.get("vqe", "layers")):
        theta, circuit = _vqe_theta(cfg, spec, layers, k, log)
        vec = circuit.prepare(theta)
        vqe_energy[f"vqe-{layers}"] = expectation(circuit.hamiltonian, vec)
        store = sample_state(vec, cfg.get("vqe", "samples"), derive_seed(cfg.seed, "vqe-samples", k),
                             spec, layers)
        del vec, circuit
        sources[f"vqe-{layers}"] = StoreSource(store, replace=True)
    ref, ref_sem = _nqs_energy_estimate(cfg, wf, spec, 0)
    rows: list = []
    curves = _energy_curves(cfg, wf, spec, sources, ref, tag, 1, rows)
    write_csv(out / "energy.csv", ["system", "source", "step", "mean_energy", "sem", "rel_error", "acceptance"], rows)
    speed = _energy_speedups(curves, "uniform", ENERGY_GRID)
    write_csv(out / "speedup.csv", ["source", "metric", "target", "factor"],
              [(n, "energy_error", t, f) for n, c in speed.items() for t, f in sorted(c.items(), reverse=True)])
    return {"vqe": _public(log), "vqe_exact_energy": vqe_energy, "nqs_energy_estimate": ref,
            "nqs_energy_sem": ref_sem, "ground_energy": tfi_ground_energy(spec.n_sites, spec.J, spec.h)}


def preset_sr_compare(cfg: ExperimentConfig, out: Path) -> dict:
    spec = cfg.spec()
    tag = f"tfi{spec.n_sites}"
    log: dict = {}
    sources = {"uniform": None}
    for k, layers in enumerate(cfg.get("vqe", "layers")):
        theta, circuit = _vqe_theta(cfg, spec, layers, k, log)
        store = sample_state(circuit.prepare(theta), cfg.get("vqe", "samples"),
                             derive_seed(cfg.seed, "vqe-samples", k), spec, layers)
        del circuit
        sources[f"vqe-{layers}"] = StoreSource(store, replace=True)
    ref = reference_energy(spec)
    traces = {}
    rows = []
    for name, src in sources.items():
        # identical seeds for every source; only the initial distribution differs
        trace, wf = train(cfg.sr_config(seed_index=0), spec, source=src, reference=ref)
        traces[name] = trace
        for row in trace.rows():
            rows.append((name,) + tuple(row))
        if name == "uniform":
            wf.save(out / f"nqs-{tag}.weights")
    write_csv(out / "sr_trace.csv", ["source", "iteration", "energy", "sem", "rel_error", "param_norm"], rows)
    table = compare_sources(traces, ENERGY_GRID)
    write_csv(out / "speedup.csv", ["source", "metric", "target", "factor"],
              [(n, "sr_iterations", t, f) for n, c in table.items() if n != "uniform"
               for t, f in sorted(c.items(), reverse=True)])
    return {"vqe": _public(log), "ground_energy": ref,
            "final_rel_error": {k: t.final_rel_error() if len(t) else None for k, t in traces.items()},
            "nqs_file": f"nqs-{tag}.weights"}


def preset_tfi_concat(cfg: ExperimentConfig, out: Path) -> dict:
    small = cfg.spec()
    block = cfg.get("concat", "block")
    if small.n_sites != block or small.model is not ModelKind.TFI:
        raise ConfigError(f"tfi-concat-40-80 needs a TFI model of {block} spins for the VQE block")
    log: dict = {}
    layers = cfg.get("vqe", "layers")[0]
    theta, circuit = _vqe_theta(cfg, small, layers, 0, log)
    store = sample_state(circuit.prepare(theta), cfg.get("vqe", "samples"),
                         derive_seed(cfg.seed, "vqe-samples", 0), small, layers)
    del circuit
    store.save(out / f"vqe-{block}.samples")
    rows: list = []
    summary: dict = {"vqe": _public(log), "sizes": {}}
    all_speed = []
    for k, N in enumerate(cfg.get("concat", "sizes")):
        if N % block:
            raise ConfigError(f"concat.sizes: {N} is not a multiple of the block size {block}")
        spec = HamiltonianSpec(LatticeSpec((1, N), Boundary.PERIODIC, ModelKind.TFI), J=small.J, h=small.h)
        tag = f"tfi{N}"
        nqs_log: dict = {}
        path = cfg.get("wavefunction", "nqs_path")
        if path and len(cfg.get("concat", "sizes")) > 1:
            raise ConfigError("wavefunction.nqs_path can only be given together with a single concat size")
        wf = _tfi_nqs(cfg, spec, out, tag, k, nqs_log)
        big = concatenate(store, N // block, derive_seed(cfg.seed, "concat", k))
        ref, ref_sem = _nqs_energy_estimate(cfg, wf, spec, 100 + k)
        sources = {"uniform": UniformSource.for_spec(spec), "vqe-concat": StoreSource(big, replace=True)}
        curves = _energy_curves(cfg, wf, spec, sources, ref, tag, 10 * (k + 1), rows)
        speed = _energy_speedups(curves, "uniform", ENERGY_GRID)["vqe-concat"]
        all_speed += [(tag, "vqe-concat", t, f) for t, f in sorted(speed.items(), reverse=True)]
        summary["sizes"][tag] = {"nqs": nqs_log, "nqs_energy_estimate": ref, "nqs_energy_sem": ref_sem,
                                 "ground_energy": tfi_ground_energy(N, spec.J, spec.h, Boundary.PERIODIC),
                                 "fraction_not_slower": _not_slower_fraction(curves["uniform"], curves["vqe-concat"],
                                                                             ENERGY_GRID)}
    write_csv(out / "energy.csv", ["system", "source", "step", "mean_energy", "sem", "rel_error", "acceptance"], rows)
    write_csv(out / "speedup.csv", ["system", "source", "target", "factor"], all_speed)
    return summary


def _not_slower_fraction(base: np.ndarray, cand: np.ndarray, grid) -> float | None:
    speed = speedup_factor(base, cand, grid)
    if not speed:
        return None
    return sum(f >= 1.0 for f in speed.values()) / len(speed)


def preset_acceptance(cfg: ExperimentConfig, out: Path) -> dict:
    spec = cfg.spec()
    wf = build_wavefunction(cfg, spec)
    log: dict = {}
    basis = enumerate_sector(spec)
    sources = {"slater": SlaterSource(wf.slater), "uniform": UniformSource.for_spec(spec)}
    for k, layers in enumerate(cfg.get("vqe", "layers")):
        theta, circuit = _vqe_theta(cfg, spec, layers, k, log)
        store = sample_state(circuit.prepare(theta), cfg.get("vqe", "samples"),
                             derive_seed(cfg.seed, "vqe-samples", k), spec, layers)
        sources[f"vqe-sim-{layers}layer"] = StoreSource(store, replace=True)
    rows = []
    summary = {"vqe": _public(log), "sector": int(basis.dim), "mean_acceptance": {}}
    for j, (name, src) in enumerate(sources.items()):
        res = run(cfg.chain_config(seed_index=j), wf, Mixer.for_spec(spec), spec, src, record_energy=False)
        for s in range(len(res.step_acceptance)):
            rows.append((name, s + 1, res.step_acceptance[s], res.self_loop_fraction[s]))
        summary["mean_acceptance"][name] = float(res.step_acceptance.mean()) if len(res.step_acceptance) else None
        summary.setdefault("resampled", {})[name] = res.n_resampled
    write_csv(out / "acceptance.csv", ["source", "step", "acceptance", "self_loop_fraction"], rows)
    return summary


PRESET_RUNNERS = {
    "hubbard-1x4": preset_hubbard_exact,
    "hubbard-1x8": preset_hubbard_exact,
    "hubbard-2x4": preset_hubbard_exact,
    "hubbard-large-L": preset_hubbard_large,
    "tfi-16-exact": preset_tfi16,
    "tfi-24-sampled": preset_tfi24,
    "tfi-concat-40-80": preset_tfi_concat,
    "sr-compare-24": preset_sr_compare,
    "acceptance-study": preset_acceptance,
}


def run_preset(name: str, out: str | Path | None = None, config: str | Path | None = None,
               overrides: list[str] | None = None) -> dict:
    """Run a named preset; returns the manifest (also written to ``manifest.json``)."""
    if name not in PRESET_RUNNERS:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    cfg = preset_defaults(name)
    if config is not None:
        cfg = parse_config(config, cfg)
    cfg = apply_overrides(cfg, overrides or [])
    outdir = _outdir(cfg, str(out) if out is not None else None)
    results = PRESET_RUNNERS[name](cfg, outdir)
    manifest = {"preset": name, "version": __version__, "config": cfg.manifest(),
                "seed_scheme": "SeedSequence(run.seed, spawn_key=(component_id, index))",
                "components": COMPONENTS, "results": results}
    write_json(outdir / "manifest.json", manifest)
    return manifest


# --------------------------------------------------------------------------- subcommands


def _load_cfg(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if getattr(args, "config", None) else ExperimentConfig.defaults()
    return apply_overrides(cfg, getattr(args, "set", None) or [])


def _size(text: str) -> tuple[int, int]:
    try:
        r, c = (int(t) for t in text.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"--size expects RxC, got {text!r}") from exc
    return r, c


def cmd_vqe(args) -> int:
    cfg = _load_cfg(args)
    if args.model:
        cfg.set("model", "kind", args.model)
    if args.size:
        r, c = _size(args.size)
        cfg.set("model", "rows", r)
        cfg.set("model", "cols", c)
    if args.layers is not None:
        cfg.set("vqe", "layers", [args.layers])
    if args.restarts is not None:
        cfg.set("vqe", "restarts", args.restarts)
    if args.samples is not None:
        cfg.set("vqe", "samples", args.samples)
    if args.seed is not None:
        cfg.set("run", "seed", args.seed)
    cfg.validate()
    spec = cfg.spec()
    layers = cfg.get("vqe", "layers")[0]
    log: dict = {}
    theta, circuit = _vqe_theta(cfg, spec, layers, 0, log)
    vec = circuit.prepare(theta)
    energy = expectation(circuit.hamiltonian, vec)
    store = sample_state(vec, cfg.get("vqe", "samples"), derive_seed(cfg.seed, "vqe-samples", 0), spec, layers)
    store.extra["energy"] = repr(energy)
    store.save(args.out)
    print(json.dumps(_jsonable({"energy": energy, "layers": layers, "theta": theta.tolist(),
                                "samples": len(store), "file": str(args.out)}), sort_keys=True))
    return EXIT_OK


def cmd_samples(args) -> int:
    store = SampleStore.load(args.input)
    if args.action == "filter":
        c = store.constraint
        n_up = args.n_up if args.n_up is not None else getattr(c, "n_up", None)
        n_down = args.n_down if args.n_down is not None else getattr(c, "n_down", None)
        if n_up is None or n_down is None:
            raise ConfigError("filter needs --n-up and --n-down for stores without a fixed-fill constraint")
        result = postselect(store, FixedFill(n_up, n_down))
        info = {"kept": len(result), "retention": float(result.extra["retention"])}
    elif args.action == "concat":
        result = concatenate(store, args.factor, args.seed, args.n)
        info = {"samples": len(result), "shape": f"{result.shape[0]}x{result.shape[1]}"}
    else:
        result = mix_with_uniform(store, args.epsilon, args.n or len(store), args.seed)
        info = {"samples": len(result), "epsilon": args.epsilon}
    result.save(args.output)
    print(json.dumps(info, sort_keys=True))
    return EXIT_OK


def _chain_source(cfg: ExperimentConfig, spec: HamiltonianSpec, wf, override: str | None):
    kind = override or cfg.get("chain", "source")
    path = cfg.get("chain", "samples_path")
    if kind == "uniform":
        return UniformSource.for_spec(spec)
    if kind == "slater":
        if not isinstance(wf, GutzwillerWF):
            raise ConfigError("chain.source = slater needs a Gutzwiller wavefunction")
        return SlaterSource(wf.slater)
    if kind == "file":
        if not path:
            raise ConfigError("chain.source = file needs chain.samples_path")
        return StoreSource(SampleStore.load(path), replace=True)
    raise ConfigError(f"chain.source: expected uniform, slater or file, got {kind!r}")


def cmd_vmc(args) -> int:
    cfg = _load_cfg(args)
    if args.samples:
        cfg.set("chain", "samples_path", args.samples)
        cfg.set("chain", "source", "file")
    spec = cfg.spec()
    wf = build_wavefunction(cfg, spec)
    src = _chain_source(cfg, spec, wf, args.source)
    res = run(cfg.chain_config(), wf, Mixer.for_spec(spec), spec, src)
    ref = None
    if spec.model is ModelKind.TFI and spec.lattice.shape[0] == 1:
        ref = reference_energy(spec)
    elif spec.model is ModelKind.HUBBARD:
        basis = enumerate_sector(spec)
        if basis.dim <= 1 << 16:
            from .trial_wavefunctions import exact_energy

            ref = exact_energy(wf, spec, basis)
    header = ["step", "mean_energy", "sem", "acceptance"] + (["exact_energy_error"] if ref is not None else [])
    rows = []
    for s, e, se, a in zip(res.steps, res.mean_energy, res.sem, res.acceptance):
        row = [s, e, se, a]
        if ref is not None:
            row.append(abs(e - ref) / abs(ref))
        rows.append(row)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, header, rows)
    print(json.dumps(_jsonable({"final_energy": res.mean_energy[-1], "sem": res.sem[-1],
                                "reference": ref, "resampled": res.n_resampled}), sort_keys=True))
    return EXIT_OK


def cmd_sr(args) -> int:
    cfg = _load_cfg(args)
    spec = cfg.spec()
    out = _outdir(cfg, args.out)
    trace, wf = train(cfg.sr_config(), spec)
    write_csv(out / "sr_trace.csv", ["iteration", "energy", "sem", "rel_error", "param_norm"], trace.rows())
    wf.save(out / "nqs.weights")
    write_json(out / "manifest.json", {"config": cfg.manifest(), "final_energy": trace.final_energy(),
                                       "reference": trace.reference,
                                       "rel_error": trace.final_rel_error() if len(trace) else None})
    print(json.dumps(_jsonable({"final_energy": trace.final_energy(), "reference": trace.reference}),
                     sort_keys=True))
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _load_cfg(args)
    spec = cfg.spec()
    out = _outdir(cfg, args.out)
    basis = enumerate_sector(spec)
    wf = build_wavefunction(cfg, spec)
    tm = transition_matrix(wf, Mixer.for_spec(spec), basis)
    sources = {"uniform": np.full(basis.dim, 1.0 / basis.dim)}
    if isinstance(wf, GutzwillerWF):
        sources["slater"] = slater_distribution(wf.slater, basis)
    for item in args.source or ():
        if "=" not in item:
            raise ConfigError(f"--source expects name=path, got {item!r}")
        name, path = item.split("=", 1)
        store = SampleStore.load(path)
        if spec.model is ModelKind.HUBBARD:
            store = postselect(store, basis.constraint)
        sources[name] = empirical_distribution(store, basis)
    baseline = args.baseline or ("slater" if "slater" in sources else "uniform")
    report = mixing_report(tm, sources, cfg.get("analysis", "steps"), spec=spec, baseline=baseline,
                           tvd_grid=_tvd_grid(cfg), check_bounds=cfg.get("analysis", "check_bounds"))
    for name, tr in report.sources.items():
        err = report.energy_error(name) if tr.energy is not None else np.full(len(tr.tvd), np.nan)
        write_csv(out / f"tvd_{name}.csv", ["step", "tvd", "l1", "energy_error"],
                  [(n, t, 2 * t, e) for n, (t, e) in enumerate(zip(tr.tvd, err))])
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.to_json())
    return EXIT_OK


def cmd_preset(args) -> int:
    manifest = run_preset(args.name, args.out, args.config, args.set)
    print(json.dumps(_jsonable({"preset": args.name, "out": args.out or manifest["config"]["run"]["out"]}),
                     sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qevmc", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config key")

    v = sub.add_parser("vqe", help="optimise an HVA circuit and sample it")
    common(v)
    v.add_argument("--model", choices=[m.value for m in ModelKind])
    v.add_argument("--size", help="RxC lattice, e.g. 1x8")
    v.add_argument("--layers", type=int)
    v.add_argument("--restarts", type=int)
    v.add_argument("--samples", type=int)
    v.add_argument("--seed", type=int)
    v.add_argument("--out", required=True, help="sample file to write")
    v.set_defaults(func=cmd_vqe)

    s = sub.add_parser("samples", help="sample-store transformations")
    ssub = s.add_subparsers(dest="action", required=True)
    f = ssub.add_parser("filter", help="postselect on particle numbers")
    f.add_argument("--n-up", type=int)
    f.add_argument("--n-down", type=int)
    c = ssub.add_parser("concat", help="stitch independent draws into a longer chain")
    c.add_argument("--factor", type=int, required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--n", type=int)
    m = ssub.add_parser("mix", help="mix with the uniform distribution over the sector")
    m.add_argument("--epsilon", type=float, required=True)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--n", type=int)
    for sp in (f, c, m):
        sp.add_argument("input")
        sp.add_argument("output")
        sp.set_defaults(func=cmd_samples)

    vm = sub.add_parser("vmc", help="variational Monte Carlo runs")
    vsub = vm.add_subparsers(dest="action", required=True)
    vr = vsub.add_parser("run")
    common(vr)
    vr.add_argument("--source", choices=["uniform", "slater", "file"])
    vr.add_argument("--samples", help="sample file used as the initial distribution")
    vr.add_argument("--out", default="energy.csv")
    vr.set_defaults(func=cmd_vmc)

    sr = sub.add_parser("sr", help="stochastic reconfiguration")
    srsub = sr.add_subparsers(dest="action", required=True)
    st = srsub.add_parser("train")
    common(st)
    st.add_argument("--out")
    st.set_defaults(func=cmd_sr)

    a = sub.add_parser("analyze", help="exact mixing analysis on an enumerable sector")
    common(a)
    a.add_argument("--source", action="append", metavar="NAME=PATH")
    a.add_argument("--baseline")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    pr = sub.add_parser("preset", help="run a canonical experiment")
    pr.add_argument("name", help="one of: " + ", ".join(PRESETS))
    common(pr)
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_preset)
    return p


NUMERIC_ERRORS = (ConvergenceError, SolveFailure, Diverged, BoundViolation, NonReversibleChain,
                  ZeroAmplitudeError, FloatingPointError, np.linalg.LinAlgError)
CONFIG_ERRORS = (ConfigError, SampleFileError, EmptySelection, SizeLimitExceeded, FileNotFoundError)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
