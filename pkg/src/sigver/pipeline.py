"""Pipeline stages over a work directory.

Each ``stage_*`` function reads the previous stage's artifacts from
``cfg.work_dir``, writes its own, and returns a small summary. The pure
helpers underneath (``wd_models``, ``score_users`` ...) are usable without
touching disk.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import formats
from .config import RunConfig
from .errors import ConfigError, FormatError, ShapeError, StageOrderError
from .formats import FeatureSet
from .imageprep import PrepConfig, compute_dataset_std, normalize_std, prepare_unscaled
from .metrics import EvalReport, UserScores, aggregate
from .nn.network import Network, load_network_spec
from .protocol import Corpus, Sample, SampleKey, WdProtocol, WdTestSet, build_wd_sets, materialize, read_manifest, split
from .svm import SvmConfig, SvmModel, WdProblem, WdTrainSet, decide, grid_search, kkt_violation, smo_train
from .training import EpochLog, train_wi

log = logging.getLogger(__name__)

PREP_TENSOR = "prep/images.sgtn"
PREP_INDEX = "prep/index.tsv"
NETWORK_FILE = "model/network.sgnt"
TRAIN_LOG = "model/train_log.csv"
FEATURES_FILE = "features/features.sgft"
FEATURES_INDEX = "features/index.tsv"
GRID_TABLE = "gridsearch/grid.csv"
GRID_BEST = "gridsearch/best.txt"
WD_DIR = "wd"
REPORT_CSV = "report/eval.csv"
REPORT_TXT = "report/summary.txt"


def _text_header(magic: str, cfg: RunConfig) -> str:
    return f"#{magic} 1 config={cfg.digest_hex}\n"


def _check_text_header(text: str, magic: str, path: Path) -> list[str]:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(f"#{magic} 1"):
        raise FormatError(f"{path}: expected a #{magic} version 1 header")
    return lines[1:]


def _require(cfg: RunConfig, rel: str, stage: str) -> Path:
    path = cfg.work_dir / rel
    if not path.exists():
        raise StageOrderError(f"{path} is missing; run `sigver {stage}` first")
    return path


# ---------------------------------------------------------------- preprocess

def preprocess_corpus(corpus: Corpus, prep: PrepConfig, dev_users: Sequence[int]):
    """Preprocess every sample; the pixel std comes from development users only.

    Returns ``(samples, images, prep_with_std)``.
    """
    samples = list(corpus.samples)
    unscaled = [prepare_unscaled(corpus.load(s), prep) for s in samples]
    dev = set(dev_users)
    std = compute_dataset_std([im for s, im in zip(samples, unscaled) if s.user in dev])
    if not std > 0:
        raise ConfigError("development images have zero pixel variance")
    prep = replace(prep, dataset_pixel_std=std)
    images = np.stack([normalize_std(im, std) for im in unscaled]).astype(np.float32)
    return samples, images, prep


def stage_preprocess(cfg: RunConfig) -> dict:
    corpus = read_manifest(cfg.corpus_root)
    dev, exp = split(corpus, cfg.split)
    samples, images, prep = preprocess_corpus(corpus, cfg.prep, dev)
    formats.write_bytes(cfg.work_dir / PREP_TENSOR, formats.dumps_tensor(images, cfg.digest))
    lines = [_text_header("SGPI", cfg), f"dataset_pixel_std={prep.dataset_pixel_std!r}\n",
             "row\tuser\tlabel\tindex\n"]
    lines += [f"{i}\t{s.user}\t{s.label}\t{s.index}\n" for i, s in enumerate(samples)]
    (cfg.work_dir / PREP_INDEX).write_text("".join(lines), encoding="utf-8")
    return {"images": len(samples), "dataset_pixel_std": prep.dataset_pixel_std,
            "dev_users": len(dev), "exp_users": len(exp)}


def load_preprocessed(cfg: RunConfig) -> tuple[list[Sample], np.ndarray, float]:
    images, _ = formats.loads_tensor(_require(cfg, PREP_TENSOR, "preprocess").read_bytes(), PREP_TENSOR)
    path = _require(cfg, PREP_INDEX, "preprocess")
    lines = _check_text_header(path.read_text(encoding="utf-8"), "SGPI", path)
    std = float(lines[0].split("=", 1)[1])
    samples = []
    for line in lines[2:]:
        _, user, label, index = line.split("\t")
        samples.append(Sample(int(user), label, int(index)))
    if len(samples) != len(images):
        raise FormatError(f"{path}: {len(samples)} index rows for {len(images)} images")
    return samples, images, std


# ---------------------------------------------------------------- WI training

def wi_training_set(samples: Sequence[Sample], images: np.ndarray, dev_users: Sequence[int]):
    """Genuine development signatures labelled by their user's rank in ``dev_users``."""
    label_of = {u: i for i, u in enumerate(sorted(dev_users))}
    rows = [i for i, s in enumerate(samples) if s.user in label_of and s.label == "genuine"]
    if not rows:
        raise ConfigError("no genuine development signatures to train on")
    return images[rows], np.array([label_of[samples[i].user] for i in rows], dtype=np.int64)


def build_network(cfg: RunConfig, n_classes: int) -> Network:
    spec = load_network_spec(cfg.network)
    if tuple(spec.input_shape[1:]) != (cfg.prep.target_h, cfg.prep.target_w):
        raise ShapeError(f"network input {spec.input_shape[1:]} != preprocessing target "
                         f"{(cfg.prep.target_h, cfg.prep.target_w)}")
    return Network.initialize(spec, n_classes, seed=cfg.seed)


def train_log_text(history: Sequence[EpochLog], cfg: RunConfig) -> str:
    buf = io.StringIO()
    buf.write(_text_header("SGTL", cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("epoch", "lr", "mean_loss", "accuracy"))
    for e in history:
        w.writerow((e.epoch, repr(e.lr), repr(e.mean_loss), repr(e.accuracy)))
    return buf.getvalue()


def stage_train_wi(cfg: RunConfig) -> dict:
    samples, images, _ = load_preprocessed(cfg)
    dev, _ = split({s.user for s in samples}, cfg.split)
    x, y = wi_training_set(samples, images, dev)
    net = build_network(cfg, len(dev))
    every = cfg.train.checkpoint_every

    def checkpoint(entry: EpochLog, network: Network):
        if every and (entry.epoch + 1) % every == 0:
            path = cfg.work_dir / f"model/checkpoint_e{entry.epoch + 1:03d}.sgnt"
            formats.write_bytes(path, formats.dumps_network(network, cfg.digest))

    history = train_wi(net, x, y, cfg.train, on_epoch=checkpoint)
    formats.write_bytes(cfg.work_dir / NETWORK_FILE, formats.dumps_network(net, cfg.digest))
    (cfg.work_dir / TRAIN_LOG).write_text(train_log_text(history, cfg), encoding="utf-8")
    last = history[-1] if history else None
    return {"samples": len(x), "classes": len(dev), "epochs": len(history),
            "final_loss": last.mean_loss if last else None, "final_accuracy": last.accuracy if last else None}


def load_network(cfg: RunConfig) -> Network:
    net, _ = formats.loads_network(_require(cfg, NETWORK_FILE, "train-wi").read_bytes(), NETWORK_FILE)
    return net


# ---------------------------------------------------------------- features

def extract_all(net: Network, samples: Sequence[Sample], images: np.ndarray) -> FeatureSet:
    return FeatureSet([s.key for s in samples], net.extract_features(images).astype(np.float32))


def stage_extract(cfg: RunConfig) -> dict:
    samples, images, _ = load_preprocessed(cfg)
    fs = extract_all(load_network(cfg), samples, images)
    formats.write_bytes(cfg.work_dir / FEATURES_FILE, formats.dumps_features(fs, cfg.digest))
    (cfg.work_dir / FEATURES_INDEX).write_text(formats.feature_index_text(fs), encoding="utf-8")
    return {"vectors": len(fs.keys), "dim": int(fs.vectors.shape[1])}


def load_features(cfg: RunConfig) -> FeatureSet:
    fs, _ = formats.loads_features(_require(cfg, FEATURES_FILE, "extract").read_bytes(), FEATURES_FILE)
    return fs


def corpus_from_keys(keys: Sequence[SampleKey]) -> Corpus:
    return Corpus([Sample(*k) for k in keys])


# ---------------------------------------------------------------- WD classifiers

@dataclass
class WdResult:
    user: int
    model: SvmModel
    train: WdTrainSet
    scores: UserScores
    kkt: float


def user_scores(model: SvmModel, test: WdTestSet) -> UserScores:
    def scores(a):
        return None if a is None else np.atleast_1d(decide(model, a)).tolist()

    return UserScores(scores(test.genuine), scores(test.random), scores(test.simple), scores(test.skilled))


def _fit_user(user, dev, exp, corpus, features, proto, svm_cfg, seed) -> WdResult:
    sel = build_wd_sets(user, dev, exp, corpus, proto, seed)
    train, test = materialize(sel, features)
    model = smo_train(train, svm_cfg)
    return WdResult(user, model, train, user_scores(model, test), kkt_violation(model, train))


def wd_models(corpus: Corpus, features: Mapping[SampleKey, np.ndarray], dev: Sequence[int],
              exp: Sequence[int], proto: WdProtocol, svm_cfg: SvmConfig, seed: int,
              jobs: int = 1) -> list[WdResult]:
    """Train and score one classifier per enrolled user, in user order."""
    def fit(u):
        return _fit_user(u, dev, exp, corpus, features, proto, svm_cfg, seed)

    users = sorted(exp)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(fit, users))
    return [fit(u) for u in users]


def grid_problems(corpus: Corpus, features: Mapping[SampleKey, np.ndarray], dev: Sequence[int],
                  proto: WdProtocol, n_users: int, seed: int) -> list[WdProblem]:
    """WD problems for the first ``n_users`` development users (negatives from the rest of D)."""
    chosen = sorted(dev)[:n_users]
    problems = []
    for u in chosen:
        sel = build_wd_sets(u, dev, [], corpus, replace(proto, forgery_policy="skilled"), seed)
        if not sel.test_skilled:
            raise ConfigError(f"development user {u} has no skilled forgeries for grid search")
        train, test = materialize(sel, features)
        problems.append(WdProblem(train, test.genuine, test.skilled))
    return problems


def stage_gridsearch(cfg: RunConfig) -> dict:
    fs = load_features(cfg)
    corpus = corpus_from_keys(fs.keys)
    dev, _ = split(corpus, cfg.split)
    problems = grid_problems(corpus, fs.as_dict(), dev, cfg.wd, cfg.grid.dev_users, cfg.seed)
    (C, gamma), table = grid_search(problems, cfg.grid.C, cfg.grid.gamma, cfg.svm.kernel, cfg.svm.tolerance)
    buf = io.StringIO()
    buf.write(_text_header("SGGS", cfg))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("C", "gamma", "mean_error"))
    for (c, g), err in table.items():
        w.writerow((repr(c), repr(g), repr(err)))
    formats.write_bytes(cfg.work_dir / GRID_TABLE, buf.getvalue().encode("utf-8"))
    (cfg.work_dir / GRID_BEST).write_text(_text_header("SGGB", cfg) + f"C={C!r}\ngamma={gamma!r}\n", encoding="utf-8")
    return {"C": C, "gamma": gamma, "error": table[(C, gamma)], "users": len(problems)}


def effective_svm_config(cfg: RunConfig) -> SvmConfig:
    if not cfg.use_gridsearch or cfg.svm.kernel == "linear":
        return cfg.svm
    path = _require(cfg, GRID_BEST, "gridsearch")
    lines = _check_text_header(path.read_text(encoding="utf-8"), "SGGB", path)
    kv = dict(line.split("=", 1) for line in lines if line)
    return replace(cfg.svm, C=float(kv["C"]), gamma=float(kv["gamma"]))


def stage_train_wd(cfg: RunConfig, jobs: int | None = None) -> dict:
    fs = load_features(cfg)
    corpus = corpus_from_keys(fs.keys)
    dev, exp = split(corpus, cfg.split)
    svm_cfg = effective_svm_config(cfg)
    results = wd_models(corpus, fs.as_dict(), dev, exp, cfg.wd, svm_cfg, cfg.seed, jobs or cfg.jobs)
    wd_dir = cfg.work_dir / WD_DIR
    for r in results:
        formats.write_bytes(wd_dir / f"user{r.user:03d}.sgsv", formats.dumps_svm(r.model, cfg.digest))
    rows = "".join(f"{r.user}\t{r.kkt!r}\t{len(r.model.dual_coef)}\t{r.model.iterations}\n" for r in results)
    (wd_dir / "kkt.tsv").write_text(_text_header("SGKK", cfg) + "user\tmax_kkt_violation\tn_sv\titerations\n" + rows,
                                    encoding="utf-8")
    worst = max(r.kkt for r in results)
    return {"users": len(results), "C": svm_cfg.C, "gamma": svm_cfg.gamma, "max_kkt_violation": worst}


def score_users(models: Mapping[int, SvmModel], corpus: Corpus, features: Mapping[SampleKey, np.ndarray],
                dev: Sequence[int], exp: Sequence[int], proto: WdProtocol, seed: int) -> dict[int, UserScores]:
    out = {}
    for u in sorted(exp):
        sel = build_wd_sets(u, dev, exp, corpus, proto, seed)
        _, test = materialize(sel, features)
        out[u] = user_scores(models[u], test)
    return out


def stage_evaluate(cfg: RunConfig) -> EvalReport:
    fs = load_features(cfg)
    corpus = corpus_from_keys(fs.keys)
    dev, exp = split(corpus, cfg.split)
    models = {}
    for u in exp:
        path = _require(cfg, f"{WD_DIR}/user{u:03d}.sgsv", "train-wd")
        models[u], _ = formats.loads_svm(path.read_bytes(), str(path))
    report = aggregate(score_users(models, corpus, fs.as_dict(), dev, exp, cfg.wd, cfg.seed),
                       cfg.wd.report_protocol)
    out = cfg.work_dir / REPORT_CSV
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_csv(f"SGEV 1 config={cfg.digest_hex}"), encoding="utf-8")
    (cfg.work_dir / REPORT_TXT).write_text(report.summary(), encoding="utf-8")
    return report


def run_all(cfg: RunConfig) -> EvalReport:
    """preprocess -> train-wi -> extract -> (gridsearch) -> train-wd -> evaluate."""
    log.info("config digest %s", cfg.digest_hex)
    stage_preprocess(cfg)
    stage_train_wi(cfg)
    stage_extract(cfg)
    if cfg.use_gridsearch and cfg.svm.kernel == "rbf":
        stage_gridsearch(cfg)
    stage_train_wd(cfg)
    return stage_evaluate(cfg)
