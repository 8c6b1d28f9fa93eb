"""Flat ``key = value`` run configuration.

Keys are dotted by section (``prep.*``, ``train.*``, ``svm.*``, ``grid.*``,
``wd.*``); ``#`` starts a comment. Numbers may be written as ``2^-12``.
The SHA-256 of the normalized key/value listing is the config digest that
every artifact records.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .imageprep import PrepConfig
from .protocol import SplitSpec, WdProtocol
from .svm import DEFAULT_C_GRID, DEFAULT_GAMMA_GRID, SvmConfig
from .training import TrainConfig


def parse_number(text: str) -> float:
    text = text.strip()
    if "^" in text:
        base, exp = text.split("^", 1)
        return float(base) ** float(exp)
    return float(text)


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {n}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in out:
            raise ConfigError(f"config line {n}: duplicate key {key!r}")
        out[key] = value
    return out


@dataclass(frozen=True)
class GridConfig:
    C: tuple[float, ...] = DEFAULT_C_GRID
    gamma: tuple[float, ...] = DEFAULT_GAMMA_GRID
    dev_users: int = 10


@dataclass(frozen=True)
class RunConfig:
    seed: int
    corpus_root: Path = Path("corpus")
    work_dir: Path = Path("work")
    network: str = "reduced"
    prep: PrepConfig = PrepConfig()
    split: SplitSpec = SplitSpec(10)
    train: TrainConfig = TrainConfig()
    svm: SvmConfig = SvmConfig()
    grid: GridConfig = GridConfig()
    wd: WdProtocol = WdProtocol(14, 14)
    use_gridsearch: bool = True
    jobs: int = 1
    extras: dict = field(default_factory=dict, compare=False)

    def to_kv(self) -> dict[str, str]:
        kv = {
            "seed": str(self.seed),
            "corpus_root": str(self.corpus_root),
            "work_dir": str(self.work_dir),
            "network": self.network,
            "split.exploitation_users": str(self.split.exploitation_user_count),
            "use_gridsearch": str(self.use_gridsearch).lower(),
        }
        for prefix, obj in (("prep", self.prep), ("train", self.train), ("svm", self.svm), ("wd", self.wd)):
            for f in fields(obj):
                if prefix == "prep" and f.name == "dataset_pixel_std":
                    continue  # measured by the preprocess stage
                if prefix == "train" and f.name == "seed":
                    continue  # derived from the run seed
                kv[f"{prefix}.{f.name}"] = repr(getattr(obj, f.name)) if isinstance(getattr(obj, f.name), float) else str(getattr(obj, f.name))
        kv["grid.C"] = ",".join(repr(v) for v in self.grid.C)
        kv["grid.gamma"] = ",".join(repr(v) for v in self.grid.gamma)
        kv["grid.dev_users"] = str(self.grid.dev_users)
        return kv

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in sorted(self.to_kv().items()))

    @property
    def digest(self) -> bytes:
        # paths and job count do not change results
        kv = {k: v for k, v in self.to_kv().items() if k not in ("corpus_root", "work_dir")}
        text = "".join(f"{k}={v}\n" for k, v in sorted(kv.items()))
        return hashlib.sha256(text.encode("utf-8")).digest()

    @property
    def digest_hex(self) -> str:
        return self.digest.hex()


def _coerce(cls, section: str, values: dict[str, str]):
    kwargs = {}
    types = {f.name: f.type for f in fields(cls)}
    for name, raw in values.items():
        if name not in types:
            raise ConfigError(f"unknown config key {section}.{name}")
        t = str(types[name])
        try:
            if "int" in t and "float" not in t:
                kwargs[name] = int(raw)
            elif "float" in t:
                kwargs[name] = parse_number(raw)
            elif "bool" in t:
                kwargs[name] = raw.lower() in ("1", "true", "yes")
            else:
                kwargs[name] = raw
        except ValueError:
            raise ConfigError(f"bad value for {section}.{name}: {raw!r}") from None
    return kwargs


def load_config(text: str, base_dir: Path | None = None, seed: int | None = None) -> RunConfig:
    """Parse a config file body; relative paths resolve against ``base_dir``."""
    kv = parse_kv(text)
    sections: dict[str, dict[str, str]] = {"prep": {}, "train": {}, "svm": {}, "wd": {}, "grid": {}}
    top = {}
    for key, value in kv.items():
        if "." in key:
            sec, name = key.split(".", 1)
            if sec == "split":
                top["split." + name] = value
                continue
            if sec not in sections:
                raise ConfigError(f"unknown config section {sec!r}")
            sections[sec][name] = value
        else:
            top[key] = value
    if seed is None:
        if "seed" not in top:
            raise ConfigError("config must set 'seed' (or pass --seed)")
        seed = int(top["seed"])
    known_top = {"seed", "corpus_root", "work_dir", "network", "split.exploitation_users", "use_gridsearch", "jobs"}
    unknown = set(top) - known_top
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    base = Path(base_dir) if base_dir is not None else Path(".")

    def path(key, default):
        p = Path(top.get(key, default))
        return p if p.is_absolute() else base / p

    grid = GridConfig()
    g = sections["grid"]
    if g:
        grid = GridConfig(
            C=tuple(parse_number(v) for v in g.pop("C").split(",")) if "C" in g else grid.C,
            gamma=tuple(parse_number(v) for v in g.pop("gamma").split(",")) if "gamma" in g else grid.gamma,
            dev_users=int(g.pop("dev_users", grid.dev_users)),
        )
        if g:
            raise ConfigError(f"unknown grid keys: {', '.join(sorted(g))}")
    train = TrainConfig(**_coerce(TrainConfig, "train", sections["train"]))
    cfg = RunConfig(
        seed=seed,
        corpus_root=path("corpus_root", "corpus"),
        work_dir=path("work_dir", "work"),
        network=top.get("network", "reduced"),
        prep=PrepConfig(**_coerce(PrepConfig, "prep", sections["prep"])),
        split=SplitSpec(int(top.get("split.exploitation_users", 10))),
        train=replace(train, seed=seed),
        svm=SvmConfig(**_coerce(SvmConfig, "svm", sections["svm"])),
        grid=grid,
        wd=WdProtocol(**_coerce(WdProtocol, "wd", sections["wd"])) if sections["wd"] else WdProtocol(14, 14),
        use_gridsearch=top.get("use_gridsearch", "true").lower() in ("1", "true", "yes"),
        jobs=int(top.get("jobs", 1)),
    )
    return cfg


def read_config(path: Path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    return load_config(path.read_text(encoding="utf-8"), path.parent, seed)


DESK_CONFIG = """\
# Desk-scale run on the synthetic corpus (reduced, NON-CANONICAL network).
seed = 7
corpus_root = corpus
work_dir = work
network = reduced
split.exploitation_users = 10

prep.mode = canvas-then-resize
prep.canvas_h = 110
prep.canvas_w = 160
prep.target_h = 55
prep.target_w = 80

train.initial_lr = 0.01
train.lr_decay_factor = 0.1
train.lr_decay_every = 20
train.momentum = 0.9
train.weight_decay = 0.0005
train.batch_size = 32
train.epochs = 40

svm.kernel = rbf
svm.C = 1
svm.gamma = 2^-12
svm.tolerance = 1e-3

use_gridsearch = true
grid.dev_users = 10

wd.n_genuine_train = 14
wd.n_neg_per_dev_user = 14
wd.n_genuine_test = 10
wd.forgery_policy = skilled
"""
