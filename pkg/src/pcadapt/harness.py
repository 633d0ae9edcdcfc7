"""Benchmark harness: synthetic datasets, scenario streams, and the
end-to-end corrupt -> adapt -> predict -> vote pipeline.

Design notes that matter for reproducibility:

* Every random quantity is keyed by (run seed, purpose tags, instance
  identity). Instance identity is (dataset index, replica), fixed when
  the stream multiset is composed, before ordering. Batch size and
  stream order therefore cannot change any per-instance result while
  online adaptation is off.
* Adaptation runs in the diffusion frame; adapted clouds are mapped back
  through the stored (center, scale) and re-normalized to the classifier
  frame before prediction. Chamfer-to-clean is measured in the
  classifier frame.
* The "unadapted" baseline always uses the pristine trained classifier,
  even when online updates are evolving a live copy.
"""

from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .classifier import OnlineAdapter, OnlineConfig, PointClassifier, predict, train_source
from .cloud import PointCloud, denormalize, normalize_for_classifier, normalize_for_diffusion
from .corruptions import CorruptionSpec, corrupt
from .denoisers import EmpiricalPosteriorDenoiser, EmpiricalSource, ExternalDenoiser, PointMixtureDenoiser
from .engine import AdaptConfig, adapt_input, vote
from .errors import ConfigError, InfeasibleImbalance, UndefinedClassRecall
from .geometry import chamfer
from .rng import derive_seed, stream
from .schedule import NoiseSchedule, make_polynomial_schedule
from .shapes import DEFAULT_CLASSES, SHAPE_SAMPLERS

JITTER_ANGLE = 0.15  # canonical-frame jitter, radians
SCALE_RANGE = (0.8, 1.2)


@dataclass
class LabeledDataset:
    clouds: list
    class_names: list

    def __len__(self) -> int:
        return len(self.clouds)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def by_class(self) -> dict:
        out: dict = {c: [] for c in range(self.n_classes)}
        for i, cloud in enumerate(self.clouds):
            out[cloud.label].append(i)
        return out


def _jitter_rotation(rng) -> np.ndarray:
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = float(rng.uniform(-JITTER_ANGLE, JITTER_ANGLE))
    from .corruptions import _rotation_matrix

    return _rotation_matrix(axis, angle)


def gen_source_dataset(classes, n_per_class: int, n_points: int, seed: int) -> LabeledDataset:
    """Sampled parametric shapes, scale/pose jittered, classifier-normalized."""
    classes = list(classes)
    if len(classes) < 2:
        raise ConfigError("need at least 2 shape classes")
    for name in classes:
        if name not in SHAPE_SAMPLERS:
            raise ConfigError(f"unknown shape class {name!r}; options: {sorted(SHAPE_SAMPLERS)}")
    clouds = []
    for ci, name in enumerate(classes):
        sampler = SHAPE_SAMPLERS[name]
        for i in range(n_per_class):
            rng = stream(seed, "gen", ci, i)
            pts = sampler(rng, n_points)
            pts = pts * rng.uniform(*SCALE_RANGE)
            pts = pts @ _jitter_rotation(rng).T
            normalized, _, _ = normalize_for_classifier(pts)
            clouds.append(PointCloud(normalized.points, label=ci))
    return LabeledDataset(clouds=clouds, class_names=classes)


# --- streams -----------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    batch_size: int = 1
    order: str = "iid_shuffled"  # or "label_sorted"
    imbalance_ratio: float = 1.0
    n_instances: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.order not in ("iid_shuffled", "label_sorted"):
            raise ConfigError(f"unknown stream order {self.order!r}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.imbalance_ratio < 1.0:
            raise ConfigError("imbalance_ratio must be >= 1")


@dataclass(frozen=True)
class StreamItem:
    ds_index: int
    replica: int
    cloud: PointCloud

    @property
    def uid(self) -> str:
        return f"{self.ds_index}.{self.replica}"

    @property
    def label(self) -> int:
        return self.cloud.label


def class_count_profile(n_instances: int, n_classes: int, rho: float) -> list:
    """Geometric class counts with max/min ratio rho, largest-remainder rounded."""
    if n_classes == 1:
        return [n_instances]
    r = rho ** (-1.0 / (n_classes - 1))
    weights = np.array([r ** i for i in range(n_classes)])
    raw = n_instances * weights / weights.sum()
    counts = np.floor(raw).astype(int)
    remainder = n_instances - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    for i in range(remainder):
        counts[order[i]] += 1
    if (counts == 0).any():
        raise InfeasibleImbalance(
            f"{n_instances} instances over {n_classes} classes at ratio {rho} "
            "gives some class zero instances"
        )
    return counts.tolist()


def make_stream(dataset: LabeledDataset, scenario: ScenarioSpec) -> list:
    """Ordered evaluation stream of (dataset index, replica) instances."""
    pools = dataset.by_class()
    n_instances = scenario.n_instances if scenario.n_instances is not None else len(dataset)
    counts = class_count_profile(n_instances, dataset.n_classes, scenario.imbalance_ratio)

    items = []
    for c in range(dataset.n_classes):
        pool = pools[c]
        if not pool:
            raise InfeasibleImbalance(f"class {c} has no dataset instances")
        want = counts[c]
        reps, rem = divmod(want, len(pool))
        for rep in range(reps):
            for i in pool:
                items.append(StreamItem(i, rep, dataset.clouds[i]))
        if rem:
            extra = stream(scenario.seed, "select", c).choice(len(pool), size=rem, replace=False)
            for i in np.sort(extra):
                items.append(StreamItem(pool[int(i)], reps, dataset.clouds[pool[int(i)]]))

    perm = stream(scenario.seed, "order").permutation(len(items))
    shuffled = [items[int(p)] for p in perm]
    if scenario.order == "label_sorted":
        shuffled.sort(key=lambda it: it.label)  # stable: within-class keeps shuffle order
    return shuffled


def batches(items: list, batch_size: int):
    for start in range(0, len(items), batch_size):
        yield items[start:start + batch_size]


# --- metrics -----------------------------------------------------------------


def confusion_matrix(true_labels, pred_labels, n_classes: int) -> np.ndarray:
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(true_labels, pred_labels):
        m[t, p] += 1
    return m


def macro_recall(confusion: np.ndarray) -> float:
    """Mean per-class recall; zero-support classes excluded with a warning."""
    confusion = np.asarray(confusion)
    support = confusion.sum(axis=1)
    if (support == 0).all():
        raise UndefinedClassRecall("no evaluated class has any true instance")
    if (support == 0).any():
        missing = np.flatnonzero(support == 0).tolist()
        warnings.warn(f"classes {missing} have zero support; excluded from macro-recall")
    present = np.flatnonzero(support > 0)
    recalls = confusion[present, present] / support[present]
    return float(recalls.mean())


# --- pipeline ----------------------------------------------------------------


@dataclass
class PipelineConfig:
    seed: int = 0
    classes: tuple = DEFAULT_CLASSES
    n_train_per_class: int = 24
    n_eval_per_class: int = 8
    n_points: int = 1024
    hidden: int = 64
    train_epochs: int = 60
    train_lr: float = 0.05
    train_batch: int = 16
    corruptions: tuple = (("gaussian", 5),)
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    adapt: AdaptConfig | None = field(default_factory=AdaptConfig)
    online: OnlineConfig | None = None
    denoiser: str = "auto"  # "auto" | "empirical" | "mixture" | "external"
    external_cmd: tuple | None = None
    schedule_T: int = 500
    mixture_pool: int = 8192
    workers: int = 1

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "classes": list(self.classes),
            "n_train_per_class": self.n_train_per_class,
            "n_eval_per_class": self.n_eval_per_class,
            "n_points": self.n_points,
            "hidden": self.hidden,
            "train_epochs": self.train_epochs,
            "train_lr": self.train_lr,
            "train_batch": self.train_batch,
            "corruptions": [list(c) for c in self.corruptions],
            "scenario": {
                "batch_size": self.scenario.batch_size,
                "order": self.scenario.order,
                "imbalance_ratio": self.scenario.imbalance_ratio,
                "n_instances": self.scenario.n_instances,
                "seed": self.scenario.seed,
            },
            "adapt": self.adapt.to_dict() if self.adapt else None,
            "online": None,
            "denoiser": self.denoiser,
            "external_cmd": list(self.external_cmd) if self.external_cmd else None,
            "schedule_T": self.schedule_T,
            "mixture_pool": self.mixture_pool,
            "workers": self.workers,
        }
        if self.online:
            d["online"] = {
                "update_steps": self.online.update_steps,
                "lr": self.online.lr,
                "votes": self.online.votes,
                "weight_decay": self.online.weight_decay,
            }
        return d

    @staticmethod
    def from_dict(d: dict) -> "PipelineConfig":
        d = dict(d)
        if "scenario" in d and isinstance(d["scenario"], dict):
            d["scenario"] = ScenarioSpec(**d["scenario"])
        if d.get("adapt") is not None and isinstance(d["adapt"], dict):
            d["adapt"] = AdaptConfig.from_dict(d["adapt"])
        if d.get("online") is not None and isinstance(d["online"], dict):
            d["online"] = OnlineConfig(**d["online"])
        if "corruptions" in d:
            d["corruptions"] = tuple(tuple(c) for c in d["corruptions"])
        if "classes" in d:
            d["classes"] = tuple(d["classes"])
        if d.get("external_cmd") is not None:
            d["external_cmd"] = tuple(d["external_cmd"])
        known = {f for f in PipelineConfig.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return PipelineConfig(**d)


@dataclass
class Benchmark:
    """Everything the pipeline needs that is derived from (config, seed)."""

    config: PipelineConfig
    train_data: LabeledDataset
    eval_data: LabeledDataset
    model: PointClassifier
    sched: NoiseSchedule
    empirical: EmpiricalPosteriorDenoiser
    mixture: PointMixtureDenoiser
    source_n: int
    train_seconds: float


def build_benchmark(cfg: PipelineConfig) -> Benchmark:
    t0 = time.perf_counter()
    train_data = gen_source_dataset(cfg.classes, cfg.n_train_per_class, cfg.n_points,
                                    derive_seed(cfg.seed, "train-data"))
    eval_data = gen_source_dataset(cfg.classes, cfg.n_eval_per_class, cfg.n_points,
                                   derive_seed(cfg.seed, "eval-data"))
    model = PointClassifier.init(len(cfg.classes), cfg.hidden, derive_seed(cfg.seed, "clf-init"))
    train_source(model, train_data.clouds, cfg.train_epochs, cfg.train_lr,
                 derive_seed(cfg.seed, "clf-train"), cfg.train_batch)
    sched = make_polynomial_schedule(cfg.schedule_T)
    source = EmpiricalSource([normalize_for_diffusion(c)[0] for c in eval_data.clouds])
    empirical = EmpiricalPosteriorDenoiser(source, sched)
    mixture = PointMixtureDenoiser(source, sched, max_pool=cfg.mixture_pool,
                                   seed=derive_seed(cfg.seed, "pool"))
    return Benchmark(
        config=cfg,
        train_data=train_data,
        eval_data=eval_data,
        model=model,
        sched=sched,
        empirical=empirical,
        mixture=mixture,
        source_n=source.n,
        train_seconds=time.perf_counter() - t0,
    )


def _pick_denoiser(bench: Benchmark, external, choice: str, n_query: int, kind: str):
    if choice == "empirical":
        return bench.empirical
    if choice == "mixture":
        return bench.mixture
    if choice == "external":
        return external
    if choice == "auto":
        # The whole-cloud posterior compares clouds in their stored point
        # order, so it is only trustworthy when the corruption left every
        # row in place; anything that resamples, drops, or appends points
        # goes to the order-free per-point mixture.
        from .corruptions import ORDER_PRESERVING_KINDS

        if n_query == bench.source_n and kind in ORDER_PRESERVING_KINDS:
            return bench.empirical
        return bench.mixture
    raise ConfigError(f"unknown denoiser choice {choice!r}")


def _process_instance(bench: Benchmark, live_model: PointClassifier, item: StreamItem,
                      kind: str, severity: int, cfg: PipelineConfig,
                      external, votes: int) -> dict:
    seed = cfg.seed
    row = {"uid": item.uid, "label": int(item.label)}
    t_start = time.perf_counter()
    try:
        spec = CorruptionSpec(kind, severity,
                              derive_seed(seed, "corrupt", kind, severity, item.ds_index, item.replica))
        corrupted = corrupt(item.cloud, spec)
        cls_corr, _, _ = normalize_for_classifier(corrupted)
        un_probs = predict(bench.model, cls_corr)
        row["unadapted_probs"] = un_probs.tolist()
        row["unadapted_pred"] = int(np.argmax(un_probs))
        row["chamfer_before"] = chamfer(cls_corr, item.cloud)

        if cfg.adapt is not None:
            diff_corr, center, scale = normalize_for_diffusion(corrupted)
            acfg = replace(
                cfg.adapt,
                votes=votes,
                seed=derive_seed(seed, "adapt", kind, severity, item.ds_index, item.replica),
            )
            den = _pick_denoiser(bench, external, cfg.denoiser, diff_corr.n, kind)
            adapted = adapt_input(diff_corr, den, bench.sched, acfg)
            adapted_cls = [normalize_for_classifier(denormalize(a, center, scale))[0]
                           for a in adapted]
            per_vote = [predict(live_model, a) for a in adapted_cls]
            probs, pred = vote(per_vote)
            row["probs"] = probs.tolist()
            row["pred"] = pred
            chs = [chamfer(a, item.cloud) for a in adapted_cls]
            row["chamfer_after"] = float(np.mean(chs))
            row["_adapted_cls"] = adapted_cls
            row["_cls_corr"] = cls_corr
        row["error"] = None
    except Exception as e:  # instance-level failure: record, never abort the run
        row["error"] = f"{type(e).__name__}: {e}"
    row["_seconds"] = time.perf_counter() - t_start
    return row


def run_pipeline(cfg: PipelineConfig, bench: Benchmark | None = None):
    """Run every corruption scenario; returns (Report, timing dict)."""
    if bench is None:
        bench = build_benchmark(cfg)
    t_run0 = time.perf_counter()
    external = None
    if cfg.denoiser == "external":
        if not cfg.external_cmd:
            raise ConfigError("denoiser=external requires external_cmd")
        external = ExternalDenoiser.spawn(list(cfg.external_cmd), bench.sched.T)

    sections = {}
    timing = {"train_seconds": bench.train_seconds, "per_instance_seconds": {}}
    try:
        for kind, severity in cfg.corruptions:
            key = f"{kind}:{severity}"
            scen = replace(cfg.scenario, seed=derive_seed(cfg.seed, "stream", key))
            items = make_stream(bench.eval_data, scen)
            votes = (cfg.online.votes if cfg.online else cfg.adapt.votes) if cfg.adapt else 1
            live_model = bench.model.copy() if cfg.online else bench.model
            adapter = OnlineAdapter(live_model, cfg.online) if cfg.online else None

            rows = []
            for batch in batches(items, cfg.scenario.batch_size):
                if cfg.workers > 1:
                    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                        out = list(pool.map(
                            lambda it: _process_instance(bench, live_model, it, kind,
                                                         severity, cfg, external, votes),
                            batch,
                        ))
                else:
                    out = [_process_instance(bench, live_model, it, kind, severity,
                                             cfg, external, votes) for it in batch]
                if adapter is not None:
                    pairs = [(r["_cls_corr"], r["_adapted_cls"])
                             for r in out if r["error"] is None and "_adapted_cls" in r]
                    if pairs:
                        adapter.update(pairs, batch_size_for_lr=cfg.scenario.batch_size)
                rows.extend(out)

            timing["per_instance_seconds"][key] = [r.pop("_seconds") for r in rows]
            for r in rows:
                r.pop("_adapted_cls", None)
                r.pop("_cls_corr", None)
            sections[key] = _aggregate(rows, bench.eval_data.n_classes, cfg.adapt is not None)
            if cfg.online:
                sections[key]["online_head_unchanged"] = bool(
                    (live_model.W3 == bench.model.W3).all()
                    and (live_model.b3 == bench.model.b3).all()
                )
    finally:
        if external is not None:
            external.close()

    timing["total_seconds"] = time.perf_counter() - t_run0
    report = Report(seed=cfg.seed, config=cfg.to_dict(), sections=sections)
    return report, timing


def _aggregate(rows: list, n_classes: int, adapted: bool) -> dict:
    ok = [r for r in rows if r["error"] is None]
    out = {
        "n_instances": len(rows),
        "n_errors": len(rows) - len(ok),
        "per_instance": rows,
    }
    if ok:
        true = [r["label"] for r in ok]
        un_pred = [r["unadapted_pred"] for r in ok]
        out["unadapted_accuracy"] = float(np.mean([t == p for t, p in zip(true, un_pred)]))
        out["unadapted_macro_recall"] = macro_recall(confusion_matrix(true, un_pred, n_classes))
        before = [r["chamfer_before"] for r in ok]
        out["chamfer_before"] = {"mean": float(np.mean(before)), "median": float(np.median(before))}
        if adapted:
            pred = [r["pred"] for r in ok]
            out["accuracy"] = float(np.mean([t == p for t, p in zip(true, pred)]))
            out["macro_recall"] = macro_recall(confusion_matrix(true, pred, n_classes))
            after = [r["chamfer_after"] for r in ok]
            out["chamfer_after"] = {"mean": float(np.mean(after)), "median": float(np.median(after))}
    return out


@dataclass
class Report:
    """Deterministic result record: reconstructible from (config, seed)."""

    seed: int
    config: dict
    sections: dict

    def to_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "config": self.config, "sections": self.sections},
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "Report":
        obj = json.loads(text)
        return Report(seed=obj["seed"], config=obj["config"], sections=obj["sections"])

    def accuracy_over(self, keys=None, unadapted: bool = False) -> float:
        """Instance-weighted accuracy over the chosen corruption sections."""
        field_name = "unadapted_accuracy" if unadapted else "accuracy"
        total, weight = 0.0, 0
        for key, sec in self.sections.items():
            if keys is not None and key not in keys:
                continue
            n_ok = sec["n_instances"] - sec["n_errors"]
            if n_ok and field_name in sec:
                total += sec[field_name] * n_ok
                weight += n_ok
        if weight == 0:
            raise UndefinedClassRecall("no successful instances in the chosen sections")
        return total / weight
