"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) before
asserting.  The recovery runs are cached per session because criteria 3-5
reuse the runs of criteria 1 and 2.
"""

import functools
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from hcinfer import rng as rngmod
from hcinfer.cascade import BaselineModel, SpreadParams
from hcinfer.classify import ClassifierSpec
from hcinfer.empirical import EmpiricalConfig, infer_company, synth_baselines, synth_calendar, synth_trades
from hcinfer.features import OBSERVED, SIMULATED, generate_feature_set, symptom_distribution_report
from hcinfer.graph import SeedSchedule, gen_balanced_tree, gen_barabasi_albert, hop_distances
from hcinfer.optimize import SyntheticProblem, replicate

REPEATS = 3
M, N = 50, 100
GRID = [(0.1, 0.1), (0.5, 0.5), (0.9, 0.9), (0.3, 0.7), (0.7, 0.3)]
CA_LIMIT = 0.55

LOOPY = gen_barabasi_albert(200, 2, 0)
TREE = gen_balanced_tree(2, 7)
ROOT = SeedSchedule.single(0)


@functools.lru_cache(maxsize=None)
def recovery(topology: str, truth: tuple[float, float]):
    graph = LOOPY if topology == "loopy" else TREE
    problem = SyntheticProblem(graph, ROOT, BaselineModel.uniform(graph.node_count),
                               SpreadParams(*truth), M, N, "reduced", ClassifierSpec.make("svm"))
    started = time.perf_counter()
    summary = replicate(problem, REPEATS, base_seed=0)
    return summary, time.perf_counter() - started


def describe(summary, wall) -> str:
    return (f"p_hat={summary.p_mean:.4f}±{summary.p_std:.4f} q_hat={summary.q_mean:.4f}"
            f"±{summary.q_std:.4f} mse={summary.mse_mean:.2e} ca={summary.ca_mean:.4f}"
            f" wall={wall:.0f}s")


def test_criterion_1_loopy_recovery(acceptance_line):
    summary, wall = recovery("loopy", (0.3, 0.7))
    ok = (abs(summary.p_mean - 0.3) <= 0.05 and abs(summary.q_mean - 0.7) <= 0.07
          and summary.mse_mean <= 5e-3)
    assert acceptance_line("1", ok, "loopy BA(200,2) truth (0.3,0.7): " + describe(summary, wall))


def test_criterion_2_tree_recovery(acceptance_line):
    assert TREE.node_count == 255
    summary, wall = recovery("tree", (0.3, 0.7))
    ok = (abs(summary.p_mean - 0.3) <= 0.07 and abs(summary.q_mean - 0.7) <= 0.10
          and summary.mse_mean <= 1e-2)
    assert acceptance_line("2", ok, "tree(2,7) truth (0.3,0.7): " + describe(summary, wall))


def test_criterion_3_loopy_grid(acceptance_line):
    cells, ok, total = [], True, 0.0
    for truth in GRID:
        summary, wall = recovery("loopy", truth)
        total += wall
        ok &= summary.mse_mean <= 5e-3
        cells.append(f"{truth}:{summary.mse_mean:.1e}")
    assert acceptance_line("3", ok, f"per-cell mse {' '.join(cells)} total={total:.0f}s")


def test_criterion_4_confusion_at_convergence(acceptance_line):
    runs = [recovery("loopy", t)[0] for t in GRID] + [recovery("tree", (0.3, 0.7))[0]]
    worst = max(r.final_global_ca for s in runs for r in s.results)
    assert acceptance_line("4", worst <= CA_LIMIT,
                           f"max final CA over {sum(len(s.results) for s in runs)} runs = {worst:.4f}")


def test_criterion_5_structural_diagnostic(acceptance_line):
    summary, _ = recovery("loopy", (0.3, 0.7))
    theta_hat = summary.results[0].theta_hat
    baseline = BaselineModel.uniform(LOOPY.node_count)
    seed = summary.seeds[0]
    obs = generate_feature_set(OBSERVED, SpreadParams(0.3, 0.7), LOOPY, ROOT, baseline, 200, N,
                               "reduced", rngmod.derive_seed(seed, rngmod.TRUTH))
    sim = generate_feature_set(SIMULATED, theta_hat, LOOPY, ROOT, baseline, 200, N,
                               "reduced", rngmod.derive_seed(seed, rngmod.REPORT))
    dist = hop_distances(LOOPY, ROOT)
    rows = symptom_distribution_report(obs, sim, dist, LOOPY.out_degrees())
    worst_ks = max(r["ks"] for r in rows)
    means = [float(obs.values[dist == d, :, 0].mean()) for d in (1, 2, 3)]
    ok = worst_ks < 0.2 and means[0] > means[1] > means[2]
    assert acceptance_line("5", ok, f"max KS={worst_ks:.4f} over {len(rows)} buckets; "
                                    f"mean f+ by distance 1-3 = {[round(m, 4) for m in means]}")


def surrogate(theta_non: float, baselines_known: bool):
    graph = gen_barabasi_albert(100, 2, 0)
    seeds = SeedSchedule.staggered([0, 1, 2])
    calendar = synth_calendar(60, seed=0)
    baselines = synth_baselines(graph.node_count, seed=0)
    data = synth_trades(graph, seeds, SpreadParams(0.5, 0.6), SpreadParams(theta_non, 0.6),
                        calendar, baselines, seed=0)
    return infer_company(data.trades, data.calendar, graph, seeds, EmpiricalConfig(seed=0),
                         baselines if baselines_known else None)


def test_criterion_6_empirical_surrogate(acceptance_line):
    alt = surrogate(0.25, True)
    null = surrogate(0.5, True)
    ratio = alt.p_ratio
    gap = abs(null.announcement.theta_hat.p - null.non_announcement.theta_hat.p)
    ok = 1.3 <= ratio <= 3.0 and gap <= 0.1
    estimated = surrogate(0.25, False)
    acceptance_line("6-info", True,
                    f"with estimated baselines: p_ratio={estimated.p_ratio:.3f} "
                    f"(p_a={estimated.announcement.theta_hat.p:.3f}, "
                    f"p_n={estimated.non_announcement.theta_hat.p:.3f}); informational only")
    assert acceptance_line("6", ok, f"p_ratio={ratio:.3f} (p_a={alt.announcement.theta_hat.p:.3f}, "
                                    f"p_n={alt.non_announcement.theta_hat.p:.3f}); null |dp|={gap:.3f}")


PROPERTY_TESTS = [
    "test_features.py::test_frequency_normalization",
    "test_cascade.py::test_carriers_never_negative",
    "test_cascade.py::test_p_coupling_monotone",
    "test_cascade.py::test_q_coupling_monotone",
    "test_features.py::test_extended_identities",
    "test_powell.py::test_quadratic_minimum_within_four_sweeps",
    "test_powell.py::test_bounded_rosenbrock",
    "test_classify.py::test_separable_linear_svm_hard_margin",
    "test_classify.py::test_svm_duplication_invariance",
    "test_optimize.py::test_objective_bit_identical",
    "test_cli.py::test_infer_reruns_byte_identical",
]


def test_criterion_7_property_suites(acceptance_line):
    here = Path(__file__).parent
    started = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *(str(here / t) for t in PROPERTY_TESTS)],
                          capture_output=True, text=True, cwd=here.parent)
    wall = time.perf_counter() - started
    ok = proc.returncode == 0 and wall <= 120
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    assert acceptance_line("7", ok, f"{len(PROPERTY_TESTS)} property tests: {tail} ({wall:.0f}s)"), \
        proc.stdout
