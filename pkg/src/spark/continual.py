"""Incremental training: replay, distillation, parameter anchoring, phases.

The anchor penalty is a plain (unweighted) squared L2 distance to the
previous parameter state; the distillation term matches both the fused
embedding and the raw logit of a frozen teacher copy. When every lambda is
zero and the replay fraction is zero, a phase reduces bit-for-bit to plain
fine-tuning with the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Node, Tape, backward
from .errors import InvalidInputError
from .params import ParameterStore, adam_step
from .retrieval import VectorStore


@dataclass(frozen=True)
class ContinualConfig:
    lambda_emb: float = 1.0
    lambda_logit: float = 0.5
    lambda_reg: float = 1.0
    replay_capacity: int = 256
    replay_fraction: float = 0.5  # share of each batch drawn from the buffer

    def __post_init__(self):
        if min(self.lambda_emb, self.lambda_logit, self.lambda_reg) < 0:
            raise InvalidInputError("lambda weights must be >= 0")
        if not (0.0 <= self.replay_fraction <= 1.0):
            raise InvalidInputError("replay_fraction must be in [0, 1]")
        if self.replay_capacity < 1:
            raise InvalidInputError("replay_capacity must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 64


class ReplayBuffer:
    """Per-technique reservoir sampling with a deterministic internal rng."""

    def __init__(self, capacity_per_technique: int = 256, seed: int = 0):
        if capacity_per_technique < 1:
            raise InvalidInputError("capacity must be >= 1")
        self.capacity = capacity_per_technique
        self._rng = np.random.default_rng([0xB0FF, seed])
        self._reservoirs: dict[str, list] = {}
        self._seen: dict[str, int] = {}

    def add(self, sample) -> None:
        gid = sample.generator_id
        res = self._reservoirs.setdefault(gid, [])
        seen = self._seen.get(gid, 0)
        if len(res) < self.capacity:
            res.append(sample)
        else:
            j = int(self._rng.integers(seen + 1))
            if j < self.capacity:
                res[j] = sample
        self._seen[gid] = seen + 1

    def __len__(self) -> int:
        return sum(len(r) for r in self._reservoirs.values())

    def items(self) -> list:
        out = []
        for gid in sorted(self._reservoirs):
            out.extend(self._reservoirs[gid])
        return out

    def sample(self, n: int, seed: int) -> list:
        """n uniform draws (with replacement) across all retained items."""
        if n == 0:
            return []
        pool = self.items()
        if not pool:
            raise InvalidInputError("cannot sample from an empty replay buffer")
        rng = np.random.default_rng([0x5A3D, seed])
        return [pool[i] for i in rng.integers(len(pool), size=n)]


class TeacherSnapshot:
    """Frozen copy of the parameters plus a gradient-free forward handle."""

    def __init__(self, model, store: ParameterStore):
        self._model = model
        self.store = store.snapshot()
        for p in self.store._params.values():
            p.value.setflags(write=False)

    def outputs(self, sample) -> tuple[np.ndarray, float]:
        return self._model.embed_and_logit(self.store, sample)


def distill_loss(tape: Tape, student_h: Node, student_logit: Node,
                 teacher_h: np.ndarray, teacher_logit: float,
                 lambda_emb: float, lambda_logit: float) -> Node:
    """lambda_emb * ||h - h_teacher||^2 + lambda_logit * (y - y_teacher)^2."""
    teacher_h = np.asarray(teacher_h, dtype=np.float64)
    if teacher_h.shape != student_h.value.shape:
        raise InvalidInputError(
            f"distill embedding shapes differ: {student_h.value.shape} vs {teacher_h.shape}")
    dh = tape.sub(student_h, tape.constant(teacher_h))
    emb_term = tape.smul(tape.sum(tape.mul(dh, dh)), lambda_emb)
    dl = tape.sub(student_logit, tape.constant(np.full_like(student_logit.value, teacher_logit)))
    logit_term = tape.smul(tape.sum(tape.mul(dl, dl)), lambda_logit)
    return tape.add(emb_term, logit_term)


def ewc_loss(tape: Tape, leaves: dict[str, Node], anchor: ParameterStore,
             lambda_reg: float) -> Node:
    """lambda_reg * sum over trainable params of ||theta - theta_prev||^2.

    Summation order is fixed: lexicographic parameter names.
    """
    total = tape.constant(np.asarray(0.0))
    for name in sorted(leaves):
        leaf = leaves[name]
        if leaf.param is None or not leaf.param.trainable:
            continue
        if name not in anchor:
            raise InvalidInputError(f"anchor missing parameter {name}")
        prev = anchor[name].value
        if prev.shape != leaf.value.shape:
            raise InvalidInputError(f"anchor shape mismatch for {name}")
        d = tape.sub(leaf, tape.constant(prev))
        total = tape.add(total, tape.sum(tape.mul(d, d)))
    return tape.smul(total, lambda_reg)


def ewc_loss_value(current: ParameterStore, anchor: ParameterStore,
                   lambda_reg: float) -> float:
    tape = Tape()
    return float(ewc_loss(tape, tape.leaves(current), anchor, lambda_reg).value)


def total_loss(tape: Tape, model, leaves: dict[str, Node], batch,
               teacher: TeacherSnapshot | None, ccfg: ContinualConfig,
               anchor: ParameterStore | None) -> tuple[Node, dict[str, float]]:
    """Mean BCE over the batch, plus mean distillation and the anchor term.

    Terms with zero weight (or no teacher) are not built at all, so the
    plain fine-tuning reduction is bitwise exact.
    """
    if not batch:
        raise InvalidInputError("empty batch")
    use_distill = teacher is not None and (ccfg.lambda_emb > 0 or ccfg.lambda_logit > 0)
    use_ewc = anchor is not None and ccfg.lambda_reg > 0

    bce_sum = None
    distill_sum = None
    for sample in batch:
        h_fused, logit = model.forward(tape, leaves, sample)
        term = tape.bce_with_logits(logit, sample.label)
        bce_sum = term if bce_sum is None else tape.add(bce_sum, term)
        if use_distill:
            th, tl = teacher.outputs(sample)
            d = distill_loss(tape, h_fused, logit, th, tl,
                             ccfg.lambda_emb, ccfg.lambda_logit)
            distill_sum = d if distill_sum is None else tape.add(distill_sum, d)

    inv = 1.0 / len(batch)
    loss = tape.smul(bce_sum, inv)
    terms = {"bce": float(loss.value), "distill": 0.0, "ewc": 0.0}
    if use_distill:
        d_mean = tape.smul(distill_sum, inv)
        terms["distill"] = float(d_mean.value)
        loss = tape.add(loss, d_mean)
    if use_ewc:
        e = ewc_loss(tape, leaves, anchor, ccfg.lambda_reg)
        terms["ewc"] = float(e.value)
        loss = tape.add(loss, e)
    return loss, terms


def train_loop(model, store: ParameterStore, samples, tcfg: TrainConfig,
               seed: int, teacher: TeacherSnapshot | None = None,
               ccfg: ContinualConfig | None = None,
               replay: ReplayBuffer | None = None,
               anchor: ParameterStore | None = None,
               log: list | None = None) -> None:
    """Adam training over epochs; identical code path for all phases."""
    if ccfg is None:
        ccfg = ContinualConfig(lambda_emb=0, lambda_logit=0, lambda_reg=0,
                               replay_fraction=0)
    rng = np.random.default_rng([0x7EA1, seed])
    mix_replay = (replay is not None and len(replay) > 0 and ccfg.replay_fraction > 0)
    step = 0
    for epoch in range(tcfg.epochs):
        order = rng.permutation(len(samples))
        for start in range(0, len(samples), tcfg.batch_size):
            chunk = [samples[i] for i in order[start:start + tcfg.batch_size]]
            if mix_replay:
                n_replay = int(round(ccfg.replay_fraction * len(chunk)))
                if n_replay > 0:
                    chunk = chunk + replay.sample(n_replay, seed=int(rng.integers(2**31)))
            tape = Tape()
            leaves = tape.leaves(store)
            loss, terms = total_loss(tape, model, leaves, chunk, teacher, ccfg, anchor)
            store.zero_grad()
            backward(tape, loss)
            step += 1
            adam_step(store, lr=tcfg.lr, beta1=tcfg.beta1, beta2=tcfg.beta2,
                      eps=tcfg.adam_eps, t=step)
            if log is not None:
                log.append({"epoch": epoch, "step": step,
                            "loss": float(loss.value), **terms})


@dataclass
class PhaseReport:
    phase: int
    accuracy: dict[str, float] = field(default_factory=dict)
    losses: list = field(default_factory=list)
    store_count: int = 0

    @property
    def mean_accuracy(self) -> float:
        if not self.accuracy:
            return float("nan")
        return float(np.mean(list(self.accuracy.values())))


class ContinualTrainer:
    """Phase orchestration over one model/store/vector-store triple."""

    def __init__(self, model, store: ParameterStore, vstore: VectorStore,
                 tcfg: TrainConfig, ccfg: ContinualConfig, k_retrieve: int = 5,
                 seed: int = 0):
        self.model = model
        self.store = store
        self.vstore = vstore
        self.tcfg = tcfg
        self.ccfg = ccfg
        self.k = k_retrieve
        self.seed = seed
        self.replay = ReplayBuffer(ccfg.replay_capacity, seed=seed)
        self.teacher: TeacherSnapshot | None = None
        self.next_phase = 0

    def run_phase(self, phase: int, phase_data, eval_sets: dict[str, list]) -> PhaseReport:
        if phase != self.next_phase:
            raise InvalidInputError(
                f"phases must be consecutive: expected {self.next_phase}, got {phase}")
        anchor = self.teacher.store if self.teacher is not None else None
        log: list = []
        train_loop(self.model, self.store, phase_data, self.tcfg,
                   seed=self.seed + phase, teacher=self.teacher, ccfg=self.ccfg,
                   replay=self.replay, anchor=anchor, log=log)
        for s in phase_data:
            self.replay.add(s)
        self.teacher = TeacherSnapshot(self.model, self.store)
        for s in phase_data:
            emb, _ = self.model.embed_and_logit(self.store, s)
            self.vstore.insert(emb, s.label, s.generator_id, phase=phase)
        report = PhaseReport(phase=phase, losses=log, store_count=self.vstore.count)
        for name, samples in eval_sets.items():
            report.accuracy[name] = self.evaluate(samples)
        self.next_phase = phase + 1
        return report

    def evaluate(self, samples) -> float:
        correct = 0
        for s in samples:
            emb, _ = self.model.embed_and_logit(self.store, s)
            pred, _ = self.vstore.predict(emb, self.k)
            correct += int(pred == s.label)
        return correct / len(samples)
