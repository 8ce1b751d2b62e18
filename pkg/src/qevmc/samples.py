"""Sample stores: persistence, postselection, noise mixing and concatenation.

File format (UTF-8 text)::

    QEVMC-SAMPLES v1
    model=hubbard
    shape=1x8
    constraint=fixed-fill 4 4
    source=vqe-sim
    seed=7
    layers=1

    01100110|00011010
    ...

Hubbard samples are written as up-bits ``|`` down-bits with site 0 leftmost;
TFI samples are one character per spin.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .models import AllSpins, Constraint, FixedFill, ModelKind, SectorBasis, pack_bits

MAGIC = "QEVMC-SAMPLES v1"
SOURCES = ("vqe-sim", "external", "uniform", "slater", "mixed", "concat", "vmc", "exact")


class SampleFileError(ValueError):
    pass


class EmptySelection(ValueError):
    pass


def format_constraint(c: Constraint) -> str:
    if isinstance(c, FixedFill):
        return f"fixed-fill {c.n_up} {c.n_down}"
    return "all-spins"


def parse_constraint(text: str) -> Constraint:
    parts = text.split()
    if parts == ["all-spins"]:
        return AllSpins()
    if len(parts) == 3 and parts[0] == "fixed-fill":
        return FixedFill(int(parts[1]), int(parts[2]))
    raise ValueError(f"unknown constraint {text!r}")


@dataclass
class SampleStore:
    model: ModelKind
    shape: tuple[int, int]
    constraint: Constraint
    samples: np.ndarray
    source: str = "external"
    seed: int | None = None
    layers: int | None = None
    extra: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.model = ModelKind(self.model)
        self.shape = (int(self.shape[0]), int(self.shape[1]))
        self.samples = np.asarray(self.samples, dtype=np.uint8).reshape(-1, self.width)

    @property
    def n_sites(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def width(self) -> int:
        return 2 * self.n_sites if self.model is ModelKind.HUBBARD else self.n_sites

    def __len__(self) -> int:
        return len(self.samples)

    def metadata(self) -> dict[str, str]:
        meta = {
            "model": self.model.value,
            "shape": f"{self.shape[0]}x{self.shape[1]}",
            "constraint": format_constraint(self.constraint),
            "source": self.source,
        }
        if self.seed is not None:
            meta["seed"] = str(self.seed)
        if self.layers is not None:
            meta["layers"] = str(self.layers)
        meta.update(self.extra)
        return meta

    def format_sample(self, row: np.ndarray) -> str:
        text = "".join("1" if b else "0" for b in row)
        if self.model is ModelKind.HUBBARD:
            L = self.n_sites
            return text[:L] + "|" + text[L:]
        return text

    def save(self, path: str | Path):
        lines = [MAGIC]
        lines += [f"{k}={v}" for k, v in self.metadata().items()]
        lines.append("")
        lines += [self.format_sample(row) for row in self.samples]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SampleStore":
        text = Path(path).read_text(encoding="utf-8")
        return cls.parse(text, str(path))

    @classmethod
    def parse(cls, text: str, name: str = "<string>") -> "SampleStore":
        lines = text.split("\n")
        if text.endswith("\n"):
            lines = lines[:-1]
        if not lines or lines[0].strip() != MAGIC:
            first = lines[0].strip() if lines else ""
            if first.startswith("QEVMC-SAMPLES"):
                raise SampleFileError(f"{name}:1: unknown version {first!r}")
            raise SampleFileError(f"{name}:1: missing header {MAGIC!r}")
        meta: dict[str, str] = {}
        lineno = 1
        for lineno, line in enumerate(lines[1:], start=2):
            if line == "":
                break
            if "=" not in line:
                raise SampleFileError(f"{name}:{lineno}: malformed metadata line {line!r}")
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
        else:
            raise SampleFileError(f"{name}:{lineno + 1}: truncated file, no blank line after metadata")
        for key in ("model", "shape", "constraint"):
            if key not in meta:
                raise SampleFileError(f"{name}: metadata key {key!r} missing")
        try:
            model = ModelKind(meta.pop("model"))
            rows, cols = (int(t) for t in meta.pop("shape").split("x"))
            constraint = parse_constraint(meta.pop("constraint"))
        except ValueError as exc:
            raise SampleFileError(f"{name}: bad metadata: {exc}") from exc
        source = meta.pop("source", "external")
        seed = int(meta.pop("seed")) if "seed" in meta else None
        layers = int(meta.pop("layers")) if "layers" in meta else None
        L = rows * cols
        width = 2 * L if model is ModelKind.HUBBARD else L
        body = lines[lineno:]
        samples = np.zeros((len(body), width), dtype=np.uint8)
        for k, line in enumerate(body):
            ln = lineno + 1 + k
            raw = line.strip()
            if model is ModelKind.HUBBARD:
                parts = raw.split("|")
                if len(parts) != 2 or len(parts[0]) != L or len(parts[1]) != L:
                    raise SampleFileError(f"{name}:{ln}: expected {L}|{L} bits, got {raw!r}")
                raw = parts[0] + parts[1]
            if len(raw) != width or set(raw) - {"0", "1"}:
                raise SampleFileError(f"{name}:{ln}: expected {width} binary digits, got {raw!r}")
            samples[k] = np.frombuffer(raw.encode(), dtype=np.uint8) - ord("0")
        return cls(model, (rows, cols), constraint, samples, source, seed, layers, meta)

    def sector_counts(self) -> tuple[np.ndarray, np.ndarray]:
        L = self.n_sites
        return self.samples[:, :L].sum(axis=1), self.samples[:, L:].sum(axis=1)


def postselect(store: SampleStore, constraint: FixedFill | None = None) -> SampleStore:
    """Keep samples with the constrained per-spin particle numbers.

    The retention fraction is recorded as ``extra['retention']`` of the result.
    """
    constraint = store.constraint if constraint is None else constraint
    if not isinstance(constraint, FixedFill) or store.model is not ModelKind.HUBBARD:
        raise ValueError("postselection needs a Hubbard store and a fixed-fill constraint")
    n_up, n_down = store.sector_counts()
    keep = (n_up == constraint.n_up) & (n_down == constraint.n_down)
    if not keep.any():
        raise EmptySelection("no sample satisfies the occupation constraint")
    retention = float(keep.mean()) if len(store) else 0.0
    extra = dict(store.extra, retention=repr(retention))
    return replace(store, constraint=constraint, samples=store.samples[keep], extra=extra)


def retention(store: SampleStore) -> float:
    return float(store.extra.get("retention", "1.0"))


def empirical_distribution(store: SampleStore, basis: SectorBasis) -> np.ndarray:
    idx = basis.index_array(pack_bits(store.samples))
    return np.bincount(idx, minlength=basis.dim) / len(store)


def mix_distribution(p: np.ndarray, epsilon: float) -> np.ndarray:
    """(1 - eps) p + eps * uniform, exactly."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    p = np.asarray(p, dtype=float)
    return (1.0 - epsilon) * p + epsilon / len(p)


def uniform_configs(model: ModelKind, n_sites: int, constraint: Constraint, n: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Uniform draws over a sector without enumerating it."""
    if isinstance(constraint, AllSpins):
        width = 2 * n_sites if model is ModelKind.HUBBARD else n_sites
        return rng.integers(0, 2, size=(n, width), dtype=np.uint8)
    parts = []
    for k in (constraint.n_up, constraint.n_down):
        keys = rng.random((n, n_sites))
        ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
        parts.append((ranks < k).astype(np.uint8))
    return np.concatenate(parts, axis=1)


def mix_with_uniform(base: SampleStore, epsilon: float, n: int, seed) -> SampleStore:
    """Each output sample comes from ``base`` w.p. 1 - eps, else uniform over the sector."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    from_base = rng.random(n) >= epsilon
    out = uniform_configs(base.model, base.n_sites, base.constraint, n, rng)
    k = int(from_base.sum())
    if k:
        out[from_base] = base.samples[rng.integers(0, len(base), size=k)]
    extra = dict(base.extra, epsilon=repr(float(epsilon)))
    return replace(base, samples=out, source="mixed", seed=_seed_meta(seed), extra=extra)


def _seed_meta(seed):
    return seed if isinstance(seed, (int, np.integer)) else None


def concatenate(store: SampleStore, factor: int, seed, n: int | None = None) -> SampleStore:
    """Stitch ``factor`` independent draws (with replacement) into one larger sample.

    Chains only (rows = 1).  Hubbard blocks are joined sector by sector, so the
    up bits of all blocks come first, then the down bits.
    """
    if factor < 2:
        raise ValueError("factor must be at least 2")
    if store.shape[0] != 1:
        raise ValueError("concatenation is defined for 1D chains")
    rng = np.random.default_rng(seed)
    n = len(store) if n is None else n
    picks = rng.integers(0, len(store), size=(n, factor))
    blocks = store.samples[picks]  # (n, factor, width)
    L = store.n_sites
    if store.model is ModelKind.HUBBARD:
        up = blocks[:, :, :L].reshape(n, factor * L)
        down = blocks[:, :, L:].reshape(n, factor * L)
        out = np.concatenate([up, down], axis=1)
        c = store.constraint
        constraint = FixedFill(c.n_up * factor, c.n_down * factor) if isinstance(c, FixedFill) else c
    else:
        out = blocks.reshape(n, factor * L)
        constraint = store.constraint
    extra = dict(store.extra, factor=str(factor), source_shape=f"{store.shape[0]}x{store.shape[1]}")
    return SampleStore(store.model, (1, factor * L), constraint, out, "concat",
                       _seed_meta(seed), store.layers, extra)
