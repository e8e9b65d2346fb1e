"""Distribution Classification: learn (p, q) by minimizing classifier accuracy."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import rng as rngmod
from .cascade import BaselineModel, DimensionError, SpreadParams
from .classify import ClassifierSpec, entity_accuracy, global_accuracy, grid_search
from .features import OBSERVED, SIMULATED, CascadeBank, FeatureSet, generate_feature_set
from .graph import Graph, SeedSchedule
from .powell import PowellConfig, powell_minimize

log = logging.getLogger(__name__)

DEFAULT_START = (0.5, 0.5)
DEFAULT_RESTART_CAP = 3
FLAT_TOLERANCE = 0.05
PARAM_NAMES = ("p", "q")


@dataclass
class ObjectiveContext:
    """Everything the objective needs besides the candidate parameters.

    ``specs`` maps entity -> classifier spec; a single spec applies to all.
    The simulated side uses a fixed cascade bank (common random numbers), so
    the objective is a deterministic function of theta.
    """

    graph: Graph
    seeds: SeedSchedule
    baseline: BaselineModel
    ground_truth: FeatureSet
    specs: Mapping[int, ClassifierSpec] | ClassifierSpec
    seed: int
    split_fraction: float = 0.6
    bank: CascadeBank | None = field(default=None, repr=False)

    def __post_init__(self):
        gt = self.ground_truth
        if gt.label != OBSERVED:
            raise ValueError("ground-truth features must carry label 0")
        if gt.entities != self.graph.node_count:
            raise DimensionError(
                f"ground truth has {gt.entities} entities, graph has {self.graph.node_count}")
        if isinstance(self.specs, ClassifierSpec):
            self.specs = {e: self.specs for e in range(gt.entities)}
        if set(self.specs) != set(range(gt.entities)):
            raise DimensionError("need one classifier spec per entity")
        if self.bank is None:
            self.bank = CascadeBank(self.graph, self.seeds, self.baseline, gt.m, gt.n_cascades,
                                    rngmod.derive_seed(self.seed, rngmod.SIMULATED))
        elif (self.bank.m, self.bank.n) != (gt.m, gt.n_cascades):
            raise DimensionError("cascade bank and ground truth disagree on M or N")

    @property
    def kind(self) -> str:
        return self.ground_truth.kind

    def with_specs(self, specs) -> "ObjectiveContext":
        return replace(self, specs=specs, bank=self.bank)

    def simulated(self, theta: SpreadParams) -> FeatureSet:
        return self.bank.features(theta, SIMULATED, self.kind)

    def entity_accuracies(self, theta: SpreadParams, simulated: FeatureSet | None = None
                          ) -> dict[int, float]:
        sim = simulated if simulated is not None else self.simulated(theta)
        gt = self.ground_truth
        return {e: entity_accuracy(gt.values[e], sim.values[e], self.specs[e],
                                   self.split_fraction, self.seed, e, gt.train_rows)
                for e in range(gt.entities)}

    def evaluate(self, theta: SpreadParams) -> float:
        return global_accuracy(self.entity_accuracies(theta)).global_accuracy


def dc_objective(theta_hat: SpreadParams, ctx: ObjectiveContext) -> float:
    """Global classification accuracy of real-vs-simulated at ``theta_hat``."""
    return ctx.evaluate(theta_hat)


def make_synthetic_context(graph: Graph, seeds: SeedSchedule, baseline: BaselineModel,
                           truth: SpreadParams, m: int, n: int, kind: str,
                           spec: ClassifierSpec, seed: int) -> ObjectiveContext:
    """Context whose ground truth is simulated at ``truth`` (label 0)."""
    gt = generate_feature_set(OBSERVED, truth, graph, seeds, baseline, m, n, kind,
                              rngmod.derive_seed(seed, rngmod.TRUTH))
    return ObjectiveContext(graph, seeds, baseline, gt, spec, seed)


@dataclass
class LearnResult:
    theta: SpreadParams
    fun: float
    evaluations: int
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)


class _Memo:
    """Clamps probes into [0, 1]^2 and caches values (the objective is deterministic)."""

    def __init__(self, ctx):
        self.ctx = ctx
        self.cache: dict[tuple[float, float], float] = {}

    def __call__(self, x) -> float:
        key = (min(max(float(x[0]), 0.0), 1.0), min(max(float(x[1]), 0.0), 1.0))
        if key not in self.cache:
            self.cache[key] = self.ctx.evaluate(SpreadParams(*key))
        return self.cache[key]


def learn_params(ctx: ObjectiveContext, start=DEFAULT_START, config: PowellConfig | None = None
                 ) -> LearnResult:
    """Powell minimization of the objective over the unit box."""
    config = config or PowellConfig()
    if config.bounds is None:
        config = replace(config, bounds=((0.0, 1.0), (0.0, 1.0)))
    start = tuple(start.as_tuple()) if isinstance(start, SpreadParams) else tuple(start)
    memo = _Memo(ctx)
    res = powell_minimize(memo, start, config)
    theta = SpreadParams(*(float(v) for v in np.clip(res.x, 0.0, 1.0)))
    log.info("powell: theta=(%.4f, %.4f) ca=%.4f evals=%d", theta.p, theta.q, res.fun,
             len(memo.cache))
    return LearnResult(theta, res.fun, len(memo.cache), res.iterations, res.converged, res.history)


@dataclass
class InferenceResult:
    theta_hat: SpreadParams
    final_global_ca: float
    objective_evaluations: int
    restarts: int
    per_entity_ca: dict[int, float]
    mse_vs_truth: float | None = None
    converged: bool = True
    flat_params: list[str] = field(default_factory=list)
    specs: dict[int, ClassifierSpec] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        kinds: dict[str, int] = {}
        for spec in self.specs.values():
            key = ",".join(f"{k}={v}" for k, v in sorted(spec.params.items()))
            kinds[key] = kinds.get(key, 0) + 1
        return {
            "p_hat": self.theta_hat.p,
            "q_hat": self.theta_hat.q,
            "final_global_ca": self.final_global_ca,
            "objective_evaluations": self.objective_evaluations,
            "restarts": self.restarts,
            "converged": self.converged,
            "mse_vs_truth": self.mse_vs_truth,
            "flat_params": list(self.flat_params),
            "per_entity_ca": [self.per_entity_ca[e] for e in sorted(self.per_entity_ca)],
            "classifier_spec_counts": dict(sorted(kinds.items())),
        }


def mse(theta_hat: SpreadParams, truth: SpreadParams) -> float:
    return ((theta_hat.p - truth.p) ** 2 + (theta_hat.q - truth.q) ** 2) / 2.0


def tune_specs(ctx: ObjectiveContext, theta: SpreadParams, round_index: int = 0
               ) -> dict[int, ClassifierSpec]:
    """Per-entity grid search on features freshly simulated at ``theta``.

    The tuning features come from their own stream, not the objective's
    bank, so the chosen hyperparameters are not fitted to the very draws
    the objective will later be judged on.
    """
    gt = ctx.ground_truth
    tuning = generate_feature_set(SIMULATED, theta, ctx.graph, ctx.seeds, ctx.baseline, gt.m,
                                  gt.n_cascades, gt.kind,
                                  rngmod.derive_seed(ctx.seed, rngmod.TUNING, round_index))
    return {e: grid_search(ctx.specs[e].kind, gt.values[e], tuning.values[e], ctx.seed, e,
                           ctx.split_fraction, gt.train_rows)
            for e in range(gt.entities)}


def flat_diagnostic(ctx: ObjectiveContext, theta: SpreadParams, probes=(0.0, 0.25, 0.5, 0.75, 1.0),
                    tolerance: float = FLAT_TOLERANCE, objective=None) -> list[str]:
    """Names of parameters along which the objective barely moves through theta."""
    objective = objective or ctx.evaluate
    flat = []
    for i, name in enumerate(PARAM_NAMES):
        vals = []
        for v in probes:
            point = list(theta.as_tuple())
            point[i] = v
            vals.append(objective(SpreadParams(*point)))
        if max(vals) - min(vals) < tolerance:
            flat.append(name)
    return flat


def tune_and_restart(ctx: ObjectiveContext, pre: LearnResult, config: PowellConfig | None = None,
                     restart_cap: int = DEFAULT_RESTART_CAP, truth: SpreadParams | None = None,
                     tuner: Callable | None = None, diagnose: bool = True) -> InferenceResult:
    """Tune classifiers at the converged point; restart Powell while tuning helps.

    A restart happens when the tuned classifiers' accuracy at the converged
    theta beats the accuracy of the classifiers in use there by more than
    ftol.  The restart starts from that theta with the tuned specs fixed.
    """
    config = config or PowellConfig()
    tuner = tuner or tune_specs
    evaluations = pre.evaluations
    restarts = 0
    current = pre
    converged = pre.converged
    while restarts < restart_cap:
        tuned = tuner(ctx, current.theta, restarts)
        candidate = ctx.with_specs(tuned)
        tuned_ca = candidate.evaluate(current.theta)
        evaluations += 1
        log.info("tuning round %d: ca %.4f -> %.4f", restarts, current.fun, tuned_ca)
        if not tuned_ca > current.fun + config.ftol:
            break
        ctx = candidate
        restarts += 1
        current = learn_params(ctx, current.theta, config)
        evaluations += current.evaluations
        converged = current.converged

    per_entity = ctx.entity_accuracies(current.theta)
    final_ca = global_accuracy(per_entity).global_accuracy
    flat = flat_diagnostic(ctx, current.theta) if diagnose else []
    return InferenceResult(
        theta_hat=current.theta,
        final_global_ca=final_ca,
        objective_evaluations=evaluations,
        restarts=restarts,
        per_entity_ca=per_entity,
        mse_vs_truth=float(mse(current.theta, truth)) if truth is not None else None,
        converged=converged,
        flat_params=flat,
        specs=dict(ctx.specs),
    )


def infer(ctx: ObjectiveContext, start=DEFAULT_START, config: PowellConfig | None = None,
          restart_cap: int = DEFAULT_RESTART_CAP, truth: SpreadParams | None = None,
          tune: bool = True, diagnose: bool = True) -> InferenceResult:
    """Full pipeline: learn, then tune-and-restart (skipped when ``tune`` is false)."""
    config = config or PowellConfig()
    pre = learn_params(ctx, start, config)
    return tune_and_restart(ctx, pre, config, restart_cap if tune else 0, truth,
                            diagnose=diagnose)


@dataclass(frozen=True)
class SyntheticProblem:
    """A picklable recipe for one synthetic inference at a given seed."""

    graph: Graph
    seeds: SeedSchedule
    baseline: BaselineModel
    truth: SpreadParams
    m: int = 50
    n: int = 100
    kind: str = "reduced"
    classifier: ClassifierSpec = field(default_factory=lambda: ClassifierSpec.make("svm"))
    start: tuple[float, float] = DEFAULT_START
    powell: PowellConfig = field(default_factory=PowellConfig)
    restart_cap: int = DEFAULT_RESTART_CAP
    tune: bool = True
    diagnose: bool = True

    def context(self, seed: int) -> ObjectiveContext:
        return make_synthetic_context(self.graph, self.seeds, self.baseline, self.truth, self.m,
                                      self.n, self.kind, self.classifier, seed)

    def __call__(self, seed: int) -> InferenceResult:
        return infer(self.context(seed), self.start, self.powell, self.restart_cap, self.truth,
                     self.tune, self.diagnose)


@dataclass
class ReplicateSummary:
    p_mean: float
    p_std: float
    q_mean: float
    q_std: float
    mse_mean: float | None
    ca_mean: float
    evaluations: int
    seeds: list[int]
    results: list[InferenceResult] = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "p_hat_mean": self.p_mean, "p_hat_std": self.p_std,
            "q_hat_mean": self.q_mean, "q_hat_std": self.q_std,
            "mse_mean": self.mse_mean, "ca_mean": self.ca_mean,
            "evaluations": self.evaluations, "seeds": self.seeds,
            "runs": [r.to_dict() for r in self.results],
        }


def summarize_runs(results: Sequence[InferenceResult], seeds: Sequence[int]) -> ReplicateSummary:
    ps = np.array([r.theta_hat.p for r in results])
    qs = np.array([r.theta_hat.q for r in results])
    mses = [r.mse_vs_truth for r in results]
    return ReplicateSummary(
        p_mean=float(ps.mean()), p_std=float(ps.std()),
        q_mean=float(qs.mean()), q_std=float(qs.std()),
        mse_mean=None if any(v is None for v in mses) else math.fsum(mses) / len(mses),
        ca_mean=math.fsum(r.final_global_ca for r in results) / len(results),
        evaluations=sum(r.objective_evaluations for r in results),
        seeds=list(seeds), results=list(results))


def replicate_seeds(base_seed: int, repeats: int) -> list[int]:
    return [rngmod.derive_seed(base_seed, rngmod.REPLICATE, r) for r in range(repeats)]


def replicate(run: Callable[[int], InferenceResult], repeats: int, base_seed: int = 0,
              parallelism: int = 1) -> ReplicateSummary:
    """R independent inferences with distinct derived seeds, reported in seed order."""
    if repeats < 1:
        raise ValueError(f"repeat count must be >= 1, got {repeats}")
    seeds = replicate_seeds(base_seed, repeats)
    if parallelism > 1 and repeats > 1:
        with ProcessPoolExecutor(max_workers=min(parallelism, repeats)) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]
    return summarize_runs(results, seeds)
