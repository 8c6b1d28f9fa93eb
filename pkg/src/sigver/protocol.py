"""Corpus bookkeeping: D/E split and writer-dependent train/test sets.

On disk a corpus is ``root/userNNN/{genuine,simple,skilled}_MM.png`` plus a
``manifest.txt`` listing ``relative path, user id, label`` per line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Mapping

import numpy as np

from .errors import ConfigError, FormatError, ProtocolError
from .svm import WdTrainSet

LABELS = ("genuine", "simple", "skilled")
MANIFEST_NAME = "manifest.txt"
MANIFEST_MAGIC = "#SGMF 1"

SampleKey = tuple[int, str, int]
_FILE_RE = re.compile(r"^(genuine|simple|skilled)_(\d+)\.png$")


@dataclass(frozen=True, order=True)
class Sample:
    user: int
    label: str
    index: int

    @property
    def key(self) -> SampleKey:
        return (self.user, self.label, self.index)

    @property
    def relpath(self) -> str:
        return f"user{self.user:03d}/{self.label}_{self.index:02d}.png"


@dataclass
class Corpus:
    samples: list[Sample]
    root: Path | None = None
    images: dict[SampleKey, np.ndarray] = field(default_factory=dict, repr=False)
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.samples = sorted(self.samples)
        keys = [s.key for s in self.samples]
        if len(set(keys)) != len(keys):
            raise ConfigError("duplicate samples in corpus")
        for s in self.samples:
            if s.label not in LABELS:
                raise ConfigError(f"unknown sample label {s.label!r}")

    @property
    def users(self) -> list[int]:
        return sorted({s.user for s in self.samples})

    def of(self, user: int, label: str) -> list[Sample]:
        return [s for s in self.samples if s.user == user and s.label == label]

    def load(self, sample: Sample) -> np.ndarray:
        if sample.key in self.images:
            return self.images[sample.key]
        if self.root is None:
            raise ConfigError(f"no image data for {sample.relpath}")
        from PIL import Image

        with Image.open(self.root / sample.relpath) as im:
            if im.mode != "L":
                raise FormatError(f"{sample.relpath}: expected 8-bit grayscale, got mode {im.mode}")
            return np.asarray(im, dtype=np.uint8).copy()


def manifest_text(corpus: Corpus) -> str:
    lines = [MANIFEST_MAGIC]
    lines += [f"{s.relpath}\t{s.user}\t{s.label}" for s in corpus.samples]
    return "\n".join(lines) + "\n"


def write_corpus(corpus: Corpus, root: Path) -> Path:
    """Write PNGs and the manifest; returns the manifest path."""
    from PIL import Image

    root = Path(root)
    for s in corpus.samples:
        path = root / s.relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.asarray(corpus.load(s), dtype=np.uint8)).save(path, optimize=False)
    manifest = root / MANIFEST_NAME
    manifest.write_text(manifest_text(corpus), encoding="utf-8")
    return manifest


def read_manifest(root: Path) -> Corpus:
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise FormatError(f"{path} not found")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MANIFEST_MAGIC:
        raise FormatError(f"{path}: missing {MANIFEST_MAGIC!r} header")
    samples = []
    for n, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            rel, user, label = line.split("\t")
        except ValueError:
            raise FormatError(f"{path}:{n}: expected 3 tab-separated fields") from None
        m = _FILE_RE.match(Path(rel).name)
        if m is None or m.group(1) != label:
            raise FormatError(f"{path}:{n}: file name {rel!r} does not match label {label!r}")
        sample = Sample(int(user), label, int(m.group(2)))
        if sample.relpath != rel:
            raise FormatError(f"{path}:{n}: {rel!r} breaks the userNNN/label_MM.png layout")
        if not (root / rel).is_file():
            raise FormatError(f"{path}:{n}: {rel} does not exist")
        samples.append(sample)
    return Corpus(samples, root=root)


@dataclass(frozen=True)
class SplitSpec:
    exploitation_user_count: int


GPDS_160 = SplitSpec(160)
GPDS_300 = SplitSpec(300)
BRAZILIAN_SPLIT = SplitSpec(60)


def split(users: Corpus | Iterable[int], spec: SplitSpec) -> tuple[list[int], list[int]]:
    """``(D, E)``: E is the first ``exploitation_user_count`` users by id."""
    ids = users.users if isinstance(users, Corpus) else sorted(set(users))
    k = spec.exploitation_user_count
    if not 0 < k < len(ids):
        raise ConfigError(f"exploitation_user_count must lie in [1, {len(ids) - 1}], got {k}")
    return ids[k:], ids[:k]


@dataclass(frozen=True)
class WdProtocol:
    n_genuine_train: int
    n_neg_per_dev_user: int
    n_genuine_test: int = 10
    forgery_policy: Literal["skilled", "all"] = "skilled"
    n_random_test: int = 10

    def __post_init__(self):
        if self.n_genuine_train < 1 or self.n_neg_per_dev_user < 1 or self.n_genuine_test < 1:
            raise ConfigError("protocol counts must be >= 1")
        if self.forgery_policy not in ("skilled", "all"):
            raise ConfigError(f"unknown forgery policy {self.forgery_policy!r}")

    @property
    def report_protocol(self) -> str:
        return "brazilian" if self.forgery_policy == "all" else "gpds"


def gpds_protocol(n_genuine_train: int = 14) -> WdProtocol:
    return WdProtocol(n_genuine_train, 14, 10, "skilled")


def brazilian_protocol(n_genuine_train: int = 30) -> WdProtocol:
    return WdProtocol(n_genuine_train, 30, 10, "all")


@dataclass
class WdSelection:
    user: int
    train_pos: list[Sample]
    train_neg: list[Sample]
    test_genuine: list[Sample]
    test_skilled: list[Sample]
    test_simple: list[Sample] = field(default_factory=list)
    test_random: list[Sample] = field(default_factory=list)

    @property
    def train_keys(self) -> set[SampleKey]:
        return {s.key for s in self.train_pos + self.train_neg}

    @property
    def test_keys(self) -> set[SampleKey]:
        return {s.key for s in self.test_genuine + self.test_skilled + self.test_simple + self.test_random}


def _user_rng(seed: int, user: int) -> np.random.Generator:
    return np.random.default_rng([seed, user])


def build_wd_sets(user: int, dev_users: Iterable[int], exp_users: Iterable[int], corpus: Corpus,
                  proto: WdProtocol, seed: int = 0) -> WdSelection:
    """Select the WD training and test samples for one enrolled user.

    Positives are the user's first ``n_genuine_train`` genuine signatures,
    test genuines the last ``n_genuine_test``; negatives are the first
    ``n_neg_per_dev_user`` genuines of every other development user.
    """
    genuine = corpus.of(user, "genuine")
    n_tr, n_te = proto.n_genuine_train, proto.n_genuine_test
    if n_tr + n_te > len(genuine):
        raise ProtocolError(f"user {user} has {len(genuine)} genuine signatures, protocol needs {n_tr + n_te}")
    negatives = []
    for d in dev_users:
        if d == user:
            continue
        pool = corpus.of(d, "genuine")
        if len(pool) < proto.n_neg_per_dev_user:
            raise ProtocolError(f"development user {d} has only {len(pool)} genuine signatures")
        negatives.extend(pool[:proto.n_neg_per_dev_user])
    if not negatives:
        raise ProtocolError("no development users available for negatives")
    sel = WdSelection(
        user=user,
        train_pos=genuine[:n_tr],
        train_neg=negatives,
        test_genuine=genuine[-n_te:],
        test_skilled=corpus.of(user, "skilled"),
    )
    if proto.forgery_policy == "all":
        sel.test_simple = corpus.of(user, "simple")
        others = [u for u in exp_users if u != user]
        if len(others) < proto.n_random_test:
            raise ProtocolError(f"need {proto.n_random_test} other enrolled users for random forgeries")
        rng = _user_rng(seed, user)
        chosen = sorted(rng.choice(others, size=proto.n_random_test, replace=False).tolist())
        for other in chosen:
            # never a signature the other user trains on
            spare = corpus.of(other, "genuine")[n_tr:]
            if not spare:
                raise ProtocolError(f"user {other} has no genuine signature outside its training set")
            sel.test_random.append(spare[int(rng.integers(len(spare)))])
    return sel


@dataclass
class WdTestSet:
    genuine: np.ndarray
    skilled: np.ndarray
    simple: np.ndarray | None = None
    random: np.ndarray | None = None


def materialize(sel: WdSelection, features: Mapping[SampleKey, np.ndarray]) -> tuple[WdTrainSet, WdTestSet]:
    def stack(samples):
        if not samples:
            return None
        return np.stack([np.asarray(features[s.key], dtype=np.float64) for s in samples])

    train = WdTrainSet(stack(sel.train_pos), stack(sel.train_neg))
    test = WdTestSet(stack(sel.test_genuine), stack(sel.test_skilled), stack(sel.test_simple), stack(sel.test_random))
    return train, test
