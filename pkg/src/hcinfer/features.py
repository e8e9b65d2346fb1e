"""Per-entity summary statistics over batches of symptom vectors."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO

import numpy as np
from scipy.stats import ks_2samp

from . import rng as rngmod
from .cascade import (
    BaselineModel,
    DimensionError,
    SpreadParams,
    baseline_symptoms,
    infection_thresholds,
    symptoms_from_thresholds,
)
from .graph import UNREACHABLE, Graph, SeedSchedule

REDUCED = "reduced"
EXTENDED = "extended"
STAT_KINDS = (REDUCED, EXTENDED)

REDUCED_NAMES = ("f_pos", "f_neg", "f_none")
EXTENDED_NAMES = REDUCED_NAMES + ("mean", "variance", "entropy", "d_pos", "d_neg", "d_none")

OBSERVED = 0
SIMULATED = 1


def stat_names(kind: str) -> tuple[str, ...]:
    if kind == REDUCED:
        return REDUCED_NAMES
    if kind == EXTENDED:
        return EXTENDED_NAMES
    raise ValueError(f"unknown statistic kind {kind!r}")


def _frequencies(z: np.ndarray) -> np.ndarray:
    n = z.shape[-1]
    return np.stack([(z == 1).sum(-1), (z == -1).sum(-1), (z == 0).sum(-1)], axis=-1) / n


def reduced_summary(row) -> np.ndarray:
    """(f_+1, f_-1, f_0) of a symptom sequence; works on the last axis."""
    z = np.asarray(row)
    if z.shape[-1] < 1:
        raise DimensionError("summary of an empty row")
    return _frequencies(z)


def extended_summary(row) -> np.ndarray:
    """Reduced summary plus mean, variance, entropy and half-to-half deltas.

    Mean and population variance are over the raw {-1, 0, +1} values.
    Entropy is in nats with 0 log 0 = 0.  The deltas are, per symbol,
    (count in the later half - count in the earlier half) / ceil(N / 2);
    with odd N the earlier half holds the extra element.
    """
    z = np.asarray(row)
    n = z.shape[-1]
    if n < 2:
        raise DimensionError(f"extended summary needs N >= 2, got {n}")
    freqs = _frequencies(z)
    mean = z.mean(-1)
    var = z.var(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(freqs > 0, np.log(np.where(freqs > 0, freqs, 1.0)), 0.0)
    entropy = -(freqs * logs).sum(-1)
    half = (n + 1) // 2
    early, late = z[..., :half], z[..., half:]
    deltas = np.stack(
        [((late == k).sum(-1) - (early == k).sum(-1)) for k in (1, -1, 0)], axis=-1
    ) / half
    return np.concatenate(
        [freqs, mean[..., None], var[..., None], entropy[..., None], deltas], axis=-1)


def summarize(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == REDUCED:
        return reduced_summary(z)
    if kind == EXTENDED:
        return extended_summary(z)
    raise ValueError(f"unknown statistic kind {kind!r}")


@dataclass
class FeatureSet:
    """M labeled feature rows for each of E entities.

    ``values`` has shape (E, M, d).  ``train_rows``, when set, says the first
    that many rows of every entity are a fixed training block (the trade
    pipeline uses this); otherwise callers split as they see fit.
    """

    values: np.ndarray
    label: int
    kind: str
    n_cascades: int
    theta: SpreadParams | None = None
    train_rows: int | None = None

    def __post_init__(self):
        if self.values.ndim != 3:
            raise DimensionError(f"feature values must be (E, M, d), got {self.values.shape}")
        if self.label not in (OBSERVED, SIMULATED):
            raise ValueError(f"label must be 0 or 1, got {self.label}")
        if self.values.shape[2] != len(stat_names(self.kind)):
            raise DimensionError(f"{self.kind} statistic has d={len(stat_names(self.kind))}")

    @property
    def entities(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    def relabeled(self, label: int) -> "FeatureSet":
        return FeatureSet(self.values, label, self.kind, self.n_cascades, self.theta, self.train_rows)


class CascadeBank:
    """Cached random inputs for M x N cascades on one graph.

    The arc thresholds and non-carrier draws do not depend on (p, q), so a
    bank built once serves every parameter value with the same uniforms
    (common random numbers).  Block m uses streams keyed (seed, purpose, m);
    row n of the block is cascade n.
    """

    def __init__(self, graph: Graph, seeds: SeedSchedule, baseline: BaselineModel,
                 m: int, n: int, seed: int):
        if m < 1 or n < 1:
            raise DimensionError(f"M and N must be >= 1, got M={m}, N={n}")
        if len(baseline) != graph.node_count:
            raise DimensionError("baseline must have one triple per node")
        seeds.validate(graph)
        self.graph, self.seeds, self.baseline = graph, seeds, baseline
        self.m, self.n, self.seed = m, n, seed
        e = graph.node_count
        self.thresholds = np.empty((m, n, e))
        self.symptom_uniforms = np.empty((m, n, e))
        for block in range(m):
            arc_u = rngmod.uniform_block(seed, rngmod.ARC, block, n, graph.arc_count)
            self.thresholds[block] = infection_thresholds(graph, seeds, arc_u)
            self.symptom_uniforms[block] = rngmod.uniform_block(seed, rngmod.SYMPTOM, block, n, e)
        self.baseline_z = baseline_symptoms(self.symptom_uniforms, baseline)

    def symptoms(self, theta: SpreadParams) -> np.ndarray:
        """Symptom array of shape (M, N, E)."""
        return symptoms_from_thresholds(self.thresholds, self.symptom_uniforms, theta,
                                        baseline_z=self.baseline_z)

    def features(self, theta: SpreadParams, label: int, kind: str) -> FeatureSet:
        z = self.symptoms(theta)
        # (M, N, E) -> (E, M, N): row of entity e in block m is S_m[e, :]
        values = summarize(np.transpose(z, (2, 0, 1)), kind)
        return FeatureSet(values, label, kind, self.n, theta)


def generate_feature_set(label: int, theta: SpreadParams, graph: Graph, seeds: SeedSchedule,
                         baseline: BaselineModel, m: int, n: int, kind: str = REDUCED,
                         seed: int = 0) -> FeatureSet:
    """M feature rows per entity, each summarizing N fresh hidden cascades."""
    stat_names(kind)
    return CascadeBank(graph, seeds, baseline, m, n, seed).features(theta, label, kind)


def write_feature_set(fs: FeatureSet, sink: IO[str]) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(("entity", "m") + stat_names(fs.kind) + ("label",))
    for e in range(fs.entities):
        for j in range(fs.m):
            w.writerow([e, j] + [repr(float(x)) for x in fs.values[e, j]] + [fs.label])


def read_feature_set(source: IO[str], n_cascades: int = 0) -> FeatureSet:
    r = csv.reader(source)
    header = next(r)
    names = tuple(header[2:-1])
    kind = REDUCED if names == REDUCED_NAMES else EXTENDED if names == EXTENDED_NAMES else None
    if kind is None:
        raise ValueError(f"unrecognized feature header {header}")
    rows = [(int(x[0]), int(x[1]), [float(v) for v in x[2:-1]], int(x[-1])) for x in r if x]
    e = 1 + max(x[0] for x in rows)
    m = 1 + max(x[1] for x in rows)
    values = np.zeros((e, m, len(names)))
    labels = set()
    for ent, j, vals, lab in rows:
        values[ent, j] = vals
        labels.add(lab)
    if len(labels) != 1:
        raise ValueError(f"feature file mixes labels {sorted(labels)}")
    return FeatureSet(values, labels.pop(), kind, n_cascades)


def degree_buckets(degrees, edges=None) -> tuple[np.ndarray, list[str]]:
    """Bucket index per entity and bucket names.

    Default split is at the median degree: "low" (<= median), "high" (> median).
    """
    degrees = np.asarray(degrees)
    if edges is None:
        med = float(np.median(degrees))
        idx = (degrees > med).astype(int)
        return idx, [f"deg<={med:g}", f"deg>{med:g}"]
    edges = list(edges)
    idx = np.searchsorted(edges, degrees, side="right") - 1
    names = [f"{lo}<=deg<{hi}" for lo, hi in zip(edges, edges[1:] + [np.inf])]
    return np.clip(idx, 0, len(edges) - 1), names


def symptom_distribution_report(observed: FeatureSet, simulated: FeatureSet, distances,
                                degrees, bins: int = 20, degree_edges=None) -> list[dict]:
    """Histograms of f_+1 grouped by (hop distance, degree bucket).

    One row per non-empty bucket with the observed and simulated histogram
    masses, their means, and the two-sample KS statistic between them.
    """
    distances = np.asarray(distances)
    if not (observed.entities == simulated.entities == len(distances) == len(degrees)):
        raise DimensionError("entity counts of features, distances and degrees differ")
    dbucket, dnames = degree_buckets(degrees, degree_edges)
    edges = np.linspace(0.0, 1.0, bins + 1)
    rows = []
    for dist in sorted(set(distances.tolist()), key=lambda d: (d == UNREACHABLE, d)):
        for b, bname in enumerate(dnames):
            members = np.flatnonzero((distances == dist) & (dbucket == b))
            if members.size == 0:
                continue
            obs = observed.values[members, :, 0].ravel()
            sim = simulated.values[members, :, 0].ravel()
            h_obs = np.histogram(obs, bins=edges)[0] / obs.size
            h_sim = np.histogram(sim, bins=edges)[0] / sim.size
            rows.append({
                "distance": "unreachable" if dist == UNREACHABLE else int(dist),
                "degree_bucket": bname,
                "entities": int(members.size),
                "observed_mean": float(obs.mean()),
                "simulated_mean": float(sim.mean()),
                "ks": float(ks_2samp(obs, sim).statistic),
                "bin_edges": edges.tolist(),
                "observed_hist": h_obs.tolist(),
                "simulated_hist": h_sim.tolist(),
            })
    return rows
