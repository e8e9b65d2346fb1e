"""Independent Cascade spreading with a noisy symptom overlay.

Two engines live here.  ``run_ic`` is the literal step-by-step procedure:
each newly infected node tries every untried out-arc once and the arc fires
when its uniform ``r`` satisfies ``r < p``.  ``infection_thresholds`` is the
batch engine used for feature generation: with one uniform committed per arc,
a node ends up infected exactly when some path from a seed has every arc
uniform below ``p``, so the smallest achievable path-maximum is a per-node
threshold and ``infected = threshold < p`` for every ``p`` at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, SeedSchedule

SEED_THRESHOLD = -1.0
NEVER = np.inf


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class SpreadParams:
    p: float
    q: float

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def as_tuple(self) -> tuple[float, float]:
        return (self.p, self.q)


class BaselineModel:
    """Per-entity non-carrier symptom law; columns are (b0, b1, b2).

    b0 = no symptom, b1 = positive, b2 = negative.
    """

    def __init__(self, probs):
        probs = np.array(probs, dtype=float)
        if probs.ndim != 2 or probs.shape[1] != 3:
            raise DimensionError(f"baseline must be (E, 3), got shape {probs.shape}")
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValueError("baseline probabilities must lie in [0, 1]")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("each baseline triple must sum to 1")
        probs.setflags(write=False)
        self.probs = probs

    @classmethod
    def uniform(cls, entities: int, b0: float = 0.5, b1: float = 0.25, b2: float = 0.25):
        return cls(np.tile([b0, b1, b2], (entities, 1)))

    def __len__(self) -> int:
        return len(self.probs)

    @property
    def b0(self) -> np.ndarray:
        return self.probs[:, 0]

    @property
    def b1(self) -> np.ndarray:
        return self.probs[:, 1]

    @property
    def b2(self) -> np.ndarray:
        return self.probs[:, 2]


def run_ic(graph: Graph, seeds: SeedSchedule, p: float, rng=None, arc_uniforms=None) -> np.ndarray:
    """One Independent Cascade run; returns the boolean carrier vector.

    Seed k joins the frontier at its activation offset, even when the
    spread from earlier seeds has already died out.  A seed that is already a
    carrier when its offset arrives is left alone.  The uniform for arc k is
    ``arc_uniforms[k]``; when only ``rng`` is given one uniform per arc is
    drawn up front, so the result does not depend on visiting order.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    seeds.validate(graph)
    if arc_uniforms is None:
        if rng is None:
            raise ValueError("need rng or arc_uniforms")
        arc_uniforms = rng.random(graph.arc_count)
    elif len(arc_uniforms) != graph.arc_count:
        raise DimensionError("one uniform per arc required")

    ptr = graph.out_arc_ptr
    dst = graph.dst
    infected = np.zeros(graph.node_count, dtype=bool)
    tried = np.zeros(graph.arc_count, dtype=bool)
    pending = list(seeds.entries)  # offsets already nondecreasing
    frontier: list[int] = []
    t = 0
    while frontier or pending:
        while pending and pending[0][1] <= t:
            node, _ = pending.pop(0)
            if not infected[node]:
                infected[node] = True
                frontier.append(node)
        newly = []
        for u in frontier:
            for k in range(ptr[u], ptr[u + 1]):
                if tried[k]:
                    continue
                tried[k] = True
                v = dst[k]
                if arc_uniforms[k] < p and not infected[v]:
                    infected[v] = True
                    newly.append(v)
        frontier = newly
        t += 1
    return infected


def assign_symptoms(infections, q: float, baseline: BaselineModel, rng=None, uniforms=None) -> np.ndarray:
    """Draw z in {-1, 0, +1} per entity from one uniform each.

    Carriers: +1 with probability q, else 0 (never -1).
    Non-carriers: +1 below b1, -1 below b1 + b2, else 0.
    """
    infections = np.asarray(infections, dtype=bool)
    if len(baseline) != infections.shape[-1]:
        raise DimensionError(
            f"baseline has {len(baseline)} entities, infections have {infections.shape[-1]}")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if uniforms is None:
        if rng is None:
            raise ValueError("need rng or uniforms")
        uniforms = rng.random(infections.shape)
    carrier = (uniforms < q).astype(np.int8)
    return np.where(infections, carrier, baseline_symptoms(uniforms, baseline))


def baseline_symptoms(uniforms, baseline: BaselineModel) -> np.ndarray:
    """Non-carrier symptoms for the given uniforms (last axis = entity)."""
    b1 = baseline.b1
    z = np.zeros(np.shape(uniforms), dtype=np.int8)
    z[uniforms < b1] = 1
    z[(uniforms >= b1) & (uniforms < b1 + baseline.b2)] = -1
    return z


def simulate_hidden_cascade(graph, seeds, theta: SpreadParams, baseline, rng=None,
                            arc_uniforms=None, symptom_uniforms=None) -> np.ndarray:
    """Symptoms of one cascade; the carrier vector is not returned."""
    if len(baseline) != graph.node_count:
        raise DimensionError("baseline must have one triple per node")
    infected = run_ic(graph, seeds, theta.p, rng=rng, arc_uniforms=arc_uniforms)
    return assign_symptoms(infected, theta.q, baseline, rng=rng, uniforms=symptom_uniforms)


def infection_thresholds(graph: Graph, seeds: SeedSchedule, arc_uniforms: np.ndarray) -> np.ndarray:
    """Minimax path thresholds for a batch of runs.

    ``arc_uniforms`` has shape (B, A).  Returns (B, node_count) where entry
    (b, v) is the smallest, over seed-to-v paths, of the largest arc uniform
    on the path; seeds get ``SEED_THRESHOLD`` and unreachable nodes ``NEVER``.
    Node v is a carrier of run b at propagation probability p exactly when
    the threshold is below p.
    """
    seeds.validate(graph)
    arc_uniforms = np.atleast_2d(arc_uniforms)
    batch = arc_uniforms.shape[0]
    if arc_uniforms.shape[1] != graph.arc_count:
        raise DimensionError("one uniform per arc required")
    thr = np.full((batch, graph.node_count), NEVER)
    thr[:, seeds.nodes] = SEED_THRESHOLD
    if graph.arc_count == 0:
        return thr

    order = np.argsort(graph.dst, kind="stable")
    dst_sorted = graph.dst[order]
    starts = np.flatnonzero(np.r_[True, dst_sorted[1:] != dst_sorted[:-1]])
    targets = dst_sorted[starts]
    src_sorted = graph.src[order]
    w = arc_uniforms[:, order]

    active = np.arange(batch)
    while active.size:
        cur = thr[active]
        cand = np.maximum(cur[:, src_sorted], w[active])
        best = np.minimum.reduceat(cand, starts, axis=1)
        old = cur[:, targets]
        improved = best < old
        rows = improved.any(axis=1)
        if not rows.any():
            break
        cur[:, targets] = np.minimum(old, best)
        thr[active] = cur
        active = active[rows]
    return thr


def symptoms_from_thresholds(thresholds, symptom_uniforms, theta: SpreadParams,
                             baseline_z=None, baseline: BaselineModel | None = None) -> np.ndarray:
    """Batch symptoms given thresholds and one uniform per (run, entity).

    ``baseline_z`` (the non-carrier draws, which do not depend on theta) can
    be passed in precomputed; otherwise it is derived from ``baseline``.
    """
    if baseline_z is None:
        if baseline is None:
            raise ValueError("need baseline or baseline_z")
        baseline_z = baseline_symptoms(symptom_uniforms, baseline)
    infected = thresholds < theta.p
    carrier = (symptom_uniforms < theta.q).astype(np.int8)
    return np.where(infected, carrier, baseline_z)
