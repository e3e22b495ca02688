"""Zero-shot protocol: class splits, prototype-swap evaluation, the ConSE
baseline, paired significance testing and the seen/unseen trade-off curve."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CoverageMismatch, InvalidConfig, InvalidCount, LabelOutsideUnseen, TopTOutOfRange
from .net import Network, TrainSchedule, build_network, softmax, train
from .net.train import evaluate
from .proto import PrototypeSet, swap


@dataclass(frozen=True)
class ClassSplit:
    seen: tuple
    unseen: tuple
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "seen", tuple(self.seen))
        object.__setattr__(self, "unseen", tuple(self.unseen))
        if not self.seen or not self.unseen:
            raise InvalidCount("both seen and unseen class sets must be non-empty")
        if set(self.seen) & set(self.unseen):
            raise InvalidConfig("seen and unseen classes overlap")

    def to_dict(self):
        return {"seen": list(self.seen), "unseen": list(self.unseen), "seed": self.seed}


@dataclass(frozen=True)
class ConseConfig:
    # None means "all seen classes"
    top_t: int | None = None

    def resolve(self, num_seen: int) -> int:
        t = num_seen if self.top_t is None else self.top_t
        if not 1 <= t <= num_seen:
            raise TopTOutOfRange(f"top_t={t} outside [1, {num_seen}]")
        return t


@dataclass
class EvalReport:
    class_ids: tuple
    per_class_accuracy: dict
    overall_accuracy: float
    confusion: np.ndarray  # rows: true class, columns: predicted class
    trial_seed: int | None = None
    checkpoint_id: int | None = None

    def to_dict(self):
        return {
            "class_ids": list(self.class_ids),
            "per_class_accuracy": self.per_class_accuracy,
            "overall_accuracy": self.overall_accuracy,
            "confusion": self.confusion.tolist(),
            "trial_seed": self.trial_seed,
            "checkpoint_id": self.checkpoint_id,
        }


def make_report(true_idx, pred_idx, class_ids, trial_seed=None, checkpoint_id=None) -> EvalReport:
    c = len(class_ids)
    conf = np.zeros((c, c), dtype=np.int64)
    np.add.at(conf, (np.asarray(true_idx), np.asarray(pred_idx)), 1)
    totals = conf.sum(axis=1)
    per_class = {
        cid: (float(conf[i, i] / totals[i]) if totals[i] else float("nan"))
        for i, cid in enumerate(class_ids)
    }
    n = int(totals.sum())
    overall = float(np.trace(conf) / n) if n else float("nan")
    return EvalReport(tuple(class_ids), per_class, overall, conf, trial_seed, checkpoint_id)


def make_splits(class_ids, num_unseen: int, num_trials: int, master_seed: int = 0) -> list[ClassSplit]:
    """``num_trials`` seeded random seen/unseen partitions; classes keep their input order."""
    class_ids = tuple(class_ids)
    if not 0 < num_unseen < len(class_ids):
        raise InvalidCount(f"num_unseen must be in [1, {len(class_ids) - 1}], got {num_unseen}")
    if num_trials < 1:
        raise InvalidCount("num_trials must be >= 1")
    rng = np.random.default_rng(master_seed)
    splits = []
    for _ in range(num_trials):
        chosen = set(rng.choice(len(class_ids), size=num_unseen, replace=False).tolist())
        seed = int(rng.integers(2**31 - 1))
        seen = tuple(c for i, c in enumerate(class_ids) if i not in chosen)
        unseen = tuple(c for i, c in enumerate(class_ids) if i in chosen)
        splits.append(ClassSplit(seen, unseen, seed))
    return splits


def evaluate_unseen(
    net: Network, split: ClassSplit, prototypes_unseen: PrototypeSet, images, labels, checkpoint_id=None
) -> EvalReport:
    """Swap the head to the unseen prototypes and classify every test sample.

    ``labels`` are class ids, all of which must belong to ``split.unseen``.
    """
    if set(prototypes_unseen.class_ids) != set(split.unseen) or len(prototypes_unseen) != len(split.unseen):
        raise CoverageMismatch(
            f"prototypes cover {prototypes_unseen.class_ids}, split expects {split.unseen}"
        )
    ids = prototypes_unseen.class_ids
    pos = {c: i for i, c in enumerate(ids)}
    bad = [c for c in labels if c not in pos]
    if bad:
        raise LabelOutsideUnseen(f"test labels {sorted(set(bad))} are not unseen classes")
    zs_net = swap(net, prototypes_unseen)
    true = np.array([pos[c] for c in labels], dtype=np.intp)
    pred = np.argmax(zs_net.predict_logits(images), axis=1) if len(true) else true
    return make_report(true, pred, ids, split.seed, checkpoint_id)


def conse_embedding(probs: np.ndarray, seen_matrix: np.ndarray, top_t: int) -> np.ndarray:
    """Probability-weighted mean of the top-T seen prototype columns, per row of ``probs``."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    top = np.argsort(-probs, axis=1, kind="stable")[:, :top_t]
    rows = np.arange(len(probs))[:, None]
    weights = np.zeros_like(probs)
    weights[rows, top] = probs[rows, top]
    return (weights @ seen_matrix.T) / weights.sum(axis=1, keepdims=True)


def conse_from_probs(probs, seen_matrix, unseen_matrix, top_t: int) -> np.ndarray:
    """Index of the unseen column with the highest cosine similarity to the ConSE embedding."""
    if not 1 <= top_t <= seen_matrix.shape[1]:
        raise TopTOutOfRange(f"top_t={top_t} outside [1, {seen_matrix.shape[1]}]")
    e = conse_embedding(probs, seen_matrix, top_t)
    sims = (e @ unseen_matrix) / (
        np.linalg.norm(e, axis=1, keepdims=True) * np.linalg.norm(unseen_matrix, axis=0)
    )
    return np.argmax(sims, axis=1)


def conse_predict(
    net_seen: Network,
    prototypes_seen: PrototypeSet,
    prototypes_unseen: PrototypeSet,
    image,
    config: ConseConfig = ConseConfig(),
):
    """ConSE label for one image (or a tuple of labels for a batch)."""
    if tuple(net_seen.class_ids) != prototypes_seen.class_ids:
        raise CoverageMismatch("seen network and seen prototypes list classes in different orders")
    t = config.resolve(len(prototypes_seen))
    image = np.asarray(image)
    single = image.ndim == len(net_seen.input_shape)
    batch = image[None] if single else image
    probs = softmax(net_seen.predict_logits(batch).astype(np.float64))
    idx = conse_from_probs(probs, prototypes_seen.matrix, prototypes_unseen.matrix, t)
    labels = tuple(prototypes_unseen.class_ids[i] for i in idx)
    return labels[0] if single else labels


def evaluate_conse(net_seen, split, prototypes_seen, prototypes_unseen, images, labels, config) -> EvalReport:
    ids = prototypes_unseen.class_ids
    pos = {c: i for i, c in enumerate(ids)}
    true = np.array([pos[c] for c in labels], dtype=np.intp)
    pred = conse_predict(net_seen, prototypes_seen, prototypes_unseen, images, config) if len(true) else ()
    return make_report(true, [pos[c] for c in pred], ids, split.seed)


def permutation_test(a, b, n_resamples: int = 10_000, seed: int = 0) -> float:
    """Two-sided paired sign-flip permutation test on the mean of ``a - b``."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    if len(d) == 0:
        return 1.0
    observed = abs(d.mean())
    rng = np.random.default_rng(seed)
    signs = rng.choice((-1.0, 1.0), size=(n_resamples, len(d)))
    stats = np.abs((signs * d).mean(axis=1))
    # tolerance guards against the sign-flipped mean differing only by rounding
    hits = int(np.sum(stats >= observed - 1e-12))
    return (hits + 1) / (n_resamples + 1)


@dataclass
class TrialResult:
    split: ClassSplit
    proposed: EvalReport
    conse: EvalReport
    seen_accuracy: float

    def to_dict(self):
        return {
            "split": self.split.to_dict(),
            "proposed_accuracy": self.proposed.overall_accuracy,
            "conse_accuracy": self.conse.overall_accuracy,
            "seen_accuracy": self.seen_accuracy,
            "proposed": self.proposed.to_dict(),
            "conse": self.conse.to_dict(),
        }


@dataclass
class ZeroShotComparison:
    trials: list = field(default_factory=list)
    p_value: float = 1.0
    top_t: int | None = None

    @property
    def proposed(self):
        return [t.proposed.overall_accuracy for t in self.trials]

    @property
    def conse(self):
        return [t.conse.overall_accuracy for t in self.trials]

    @property
    def proposed_mean(self):
        return float(np.mean(self.proposed))

    @property
    def conse_mean(self):
        return float(np.mean(self.conse))

    def to_dict(self):
        return {
            "trials": [t.to_dict() for t in self.trials],
            "proposed_mean": self.proposed_mean,
            "conse_mean": self.conse_mean,
            "mean_gain": self.proposed_mean - self.conse_mean,
            "p_value": self.p_value,
            "conse_top_t": self.top_t,
        }


def run_zero_shot_comparison(
    dataset,
    splits,
    make_net,
    prototypes_all: PrototypeSet,
    schedule: TrainSchedule,
    conse_config: ConseConfig = ConseConfig(),
    separate_conse_model: bool = False,
    make_learned_net=None,
    n_resamples: int = 10_000,
    log=None,
    num_val_classes: int = 0,
) -> ZeroShotComparison:
    """Paired comparison of prototype swapping against ConSE over ``splits``.

    ``make_net(prototypes_seen, seed)`` builds a fresh prototype-head network.
    By default ConSE reuses that trained network as its seen-class classifier;
    with ``separate_conse_model`` a learned-head network from
    ``make_learned_net(class_ids, seed)`` is trained for it instead.

    Validation normally uses val samples of the seen classes. With
    ``num_val_classes > 0`` that many seen classes are withheld from training
    in each trial and validation instead swaps in their prototypes, so model
    selection (``schedule.select_best``) tracks accuracy on classes the
    network never trained on.
    """
    result = ZeroShotComparison()
    for i, split in enumerate(splits):
        if num_val_classes:
            split, val = _hold_out_validation(dataset, split, prototypes_all, num_val_classes)
        else:
            val = dataset.select("val", split.seen)
        seen_p = prototypes_all.subset(split.seen)
        unseen_p = prototypes_all.subset(split.unseen)
        sched = TrainSchedule(**{**schedule.to_dict(), "seed": split.seed})
        net = make_net(seen_p, split.seed)
        train(net, *dataset.select("train", split.seen), sched, val=val)
        seen_acc = evaluate(net, *dataset.select("test", split.seen))[1]

        x_u, y_u = dataset.select("test", split.unseen)
        labels_u = [split.unseen[j] for j in y_u]
        proposed = evaluate_unseen(net, split, unseen_p, x_u, labels_u)

        conse_net = net
        if separate_conse_model:
            conse_net = make_learned_net(split.seen, split.seed)
            conse_val = dataset.select("val", split.seen) if num_val_classes else val
            train(conse_net, *dataset.select("train", split.seen), sched, val=conse_val)
        t = conse_config.resolve(len(split.seen))
        result.top_t = t
        conse = evaluate_conse(conse_net, split, seen_p, unseen_p, x_u, labels_u, ConseConfig(t))
        trial = TrialResult(split, proposed, conse, seen_acc)
        result.trials.append(trial)
        if log is not None:
            log(i, trial)
    result.p_value = permutation_test(result.proposed, result.conse, n_resamples)
    return result


def _hold_out_validation(dataset, split: ClassSplit, prototypes_all: PrototypeSet, count: int):
    """Move ``count`` seen classes into a validation-only role; returns the reduced split and a validator."""
    if not 0 < count < len(split.seen):
        raise InvalidCount(f"num_val_classes must be in [1, {len(split.seen) - 1}], got {count}")
    rng = np.random.default_rng([split.seed, 1])
    held = set(rng.choice(len(split.seen), size=count, replace=False).tolist())
    val_ids = tuple(c for j, c in enumerate(split.seen) if j in held)
    train_ids = tuple(c for j, c in enumerate(split.seen) if j not in held)
    val_protos = prototypes_all.subset(val_ids)
    x, y = dataset.select("val", val_ids)

    def validate(net):
        return evaluate(swap(net, val_protos), x, y)

    return ClassSplit(train_ids, split.unseen, split.seed), validate


@dataclass
class TradeoffPoint:
    checkpoint_id: int
    seen_accuracy: float
    unseen_accuracy: float


def tradeoff_curve(net: Network, checkpoints, seen_test, unseen_test, prototypes_all: PrototypeSet, split: ClassSplit):
    """Seen and unseen accuracy at each ``(checkpoint_id, state)``.

    ``seen_test``/``unseen_test`` are ``(images, labels)`` with labels indexing
    ``split.seen`` / ``split.unseen``. ``net`` is reloaded with each state.
    """
    seen_net = swap(net, prototypes_all.subset(split.seen))
    unseen_net = swap(net, prototypes_all.subset(split.unseen))
    points = []
    for ckpt_id, state in checkpoints:
        net.load_state(state)
        seen_acc = evaluate(seen_net, *seen_test)[1]
        unseen_acc = evaluate(unseen_net, *unseen_test)[1]
        points.append(TradeoffPoint(ckpt_id, seen_acc, unseen_acc))
    return points


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2 or x.std() == 0 or y.std() == 0:
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])


def curve_correlations(points) -> dict:
    """Pearson correlation of seen vs unseen accuracy over the first and second halves of the curve."""
    half = (len(points) + 1) // 2
    seen = [p.seen_accuracy for p in points]
    unseen = [p.unseen_accuracy for p in points]
    return {
        "first_half_r": pearson(seen[:half], unseen[:half]),
        "second_half_r": pearson(seen[half:], unseen[half:]),
    }
