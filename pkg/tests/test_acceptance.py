"""Acceptance gate: one test per shipping criterion, each printing a
PASS/FAIL line. Run with `pytest tests/test_acceptance.py -s` to see them.
"""

import functools
import itertools
import json
import random
import time

import numpy as np
import pytest

from automt.backends import BackendEndpoint, BackendKind, predict
from automt.extraction import CandidateResult, select_winner
from automt.ontology import ROAD_WILDCARD, Verb, load_builtin_taxonomy, verb_for
from automt.oracle import PredictionSeries, bands_from_source, judge, judge_case, violation_rate
from automt.relations import MetamorphicRelation, answers_to_score, parse_gherkin, render_gherkin
from automt.stats import KappaWeights, weighted_fleiss_kappa, welch_t_test
from automt.store import MrStore, RetrievalQuery, StoredMr, rank_unit_query, retrieve
from automt.validation import ValidityVerdict, distinct_manipulations, validation_rate
from tests.conftest import make_frame
from tests.pipeline_utils import run_pipeline, snapshot_bytes
from tests.test_stats import brute_force_weighted_kappa, random_table


def criterion(name, budget_s=None):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            started = time.monotonic()
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"ACCEPTANCE {name}: FAIL")
                raise
            elapsed = time.monotonic() - started
            if budget_s is not None and elapsed >= budget_s:
                print(f"ACCEPTANCE {name}: FAIL (took {elapsed:.1f}s, budget {budget_s}s)")
                raise AssertionError(f"{name} exceeded {budget_s}s budget: {elapsed:.1f}s")
            print(f"ACCEPTANCE {name}: PASS ({elapsed:.2f}s)")
        return wrapper
    return decorate


TAXONOMY = load_builtin_taxonomy("DE")


def _random_valid_mr(rng):
    roads = sorted(TAXONOMY.road_types) + [ROAD_WILDCARD]
    targets = list(TAXONOMY.manipulation_targets)
    behaviors = sorted(TAXONOMY.expected_behaviors)
    target = rng.choice(targets)
    verb = verb_for(target)
    if verb is Verb.ADDS:
        phrase = target.name + rng.choice(["", " on the road", " on the roadside"])
    else:
        phrase = rng.choice([target.name, f"weather with {target.name}"])
    return MetamorphicRelation(rng.choice(roads), verb, phrase, rng.choice(behaviors))


@criterion("grammar-round-trip", budget_s=5.0)
def test_grammar_round_trip_1000():
    rng = random.Random(101)
    for _ in range(1000):
        mr = _random_valid_mr(rng)
        assert parse_gherkin(render_gherkin(mr), TAXONOMY) == mr


@criterion("selfcheck-lattice", budget_s=5.0)
def test_selfcheck_lattice_and_winner_oracle():
    scores = [answers_to_score(list(c)) for c in itertools.product(["yes", "no"], repeat=3)]
    counts = {value: scores.count(value) for value in sorted(set(scores))}
    assert counts == {0.0: 1, 1 / 3: 3, 2 / 3: 3, 1.0: 1}

    def brute_force(score_list, threshold):
        feasible = [(s, i) for i, s in enumerate(score_list) if s is not None and s <= threshold]
        return min(feasible)[1] if feasible else None

    mr = _random_valid_mr(random.Random(0))
    lattice = [0.0, 1 / 3, 2 / 3, 1.0, None]
    rng = random.Random(202)
    for _ in range(10000):
        score_list = [rng.choice(lattice) for _ in range(rng.randint(1, 7))]
        threshold = rng.choice([0.0, 1 / 3, 2 / 3, 1.0])
        candidates = [
            CandidateResult(f"p{i}", "", mr=None if s is None else mr, score=s)
            for i, s in enumerate(score_list)
        ]
        assert select_winner(candidates, threshold) == brute_force(score_list, threshold)


def _random_store(rng, max_mrs=100):
    n = int(rng.integers(1, max_mrs + 1))
    dim = int(rng.choice([4, 8, 16]))
    vectors = rng.standard_normal((n, dim))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    mr = MetamorphicRelation("intersection", Verb.ADDS, "red light", "slow down")
    entries = [
        StoredMr(i, mr, vectors[i].astype(np.float32), int(rng.integers(0, 5)))
        for i in range(n)
    ]
    return MrStore(entries, dim)


@criterion("retrieval-order", budget_s=30.0)
def test_retrieval_matches_brute_force_200_stores():
    rng = np.random.default_rng(303)
    for _ in range(200):
        store = _random_store(rng)
        for _ in range(50):
            q = rng.standard_normal(store.dim)
            q = (q / np.linalg.norm(q)).astype(np.float32)
            ranked = [(e.index, s) for e, s in rank_unit_query(store, q)]
            brute = sorted(
                (
                    (entry.index, float(np.dot(entry.embedding, q)), entry.execution_count)
                    for entry in store.entries
                ),
                key=lambda row: (-row[1], row[2], row[0]),
            )
            assert ranked == [(index, sim) for index, sim, _ in brute]


@criterion("execution-count-preference", budget_s=10.0)
def test_equal_similarity_prefers_low_count_1000():
    rng = random.Random(404)
    embed_backend = BackendEndpoint(BackendKind.EMBED, "mock:default?dim=2")
    mr = MetamorphicRelation("intersection", Verb.ADDS, "red light", "slow down")
    for _ in range(1000):
        n = rng.randint(2, 8)
        counts = [rng.randint(0, 9) for _ in range(n)]
        entries = [
            StoredMr(i, mr, np.asarray([1.0, 0.0], dtype=np.float32), counts[i])
            for i in range(n)
        ]
        store = MrStore(entries, 2)
        top = retrieve(store, RetrievalQuery("vec:1,0", top_k=1), embed_backend)[0][0]
        lowest = min(range(n), key=lambda i: (counts[i], i))
        assert top.index == lowest
        assert top.execution_count == min(counts)


BEHAVIORS = ("slow down", "keep current", "turn left", "turn right")


def _brute_force_violation(behavior, speed, steering, speed_band, steering_band, left):
    if not left:
        steering = -steering
        low, up = -steering_band.upper, -steering_band.lower
    else:
        low, up = steering_band.lower, steering_band.upper
    if behavior == "slow down":
        ok = speed < speed_band.lower
    elif behavior == "keep current":
        ok = speed_band.lower <= speed <= speed_band.upper and low <= steering <= up
    elif behavior == "turn left":
        ok = steering > max(up, 0.0)
    else:
        ok = steering < min(low, 0.0)
    return not ok


@criterion("oracle-truth-table", budget_s=60.0)
def test_judge_truth_table_100k_and_equivariance():
    rng = random.Random(505)
    for _ in range(100000):
        behavior = rng.choice(BEHAVIORS)
        sources = [(rng.uniform(0, 20), rng.uniform(-0.5, 0.5))
                   for _ in range(rng.randint(2, 5))]
        bands = bands_from_source(sources, rng.choice([0.5, 1.0, 2.0]))
        observed = (rng.uniform(-1, 21), rng.uniform(-0.8, 0.8))
        left = rng.random() < 0.5
        got = judge(behavior, observed, bands, left_positive=left).violated
        want = _brute_force_violation(behavior, observed[0], observed[1], *bands, left)
        assert got == want
    # translation equivariance: speed-channel shifts preserve every outcome;
    # the closed steering band (keep current) is shift-equivariant as well.
    # Turn rules anchor direction at absolute zero by design, so they are
    # exercised through the speed channel only.
    for _ in range(2000):
        behavior = rng.choice(BEHAVIORS)
        sources = [(rng.uniform(0, 20), rng.uniform(-0.4, 0.4)) for _ in range(4)]
        observed = (rng.uniform(-1, 21), rng.uniform(-0.6, 0.6))
        c = rng.uniform(-100, 100)
        base = judge(behavior, observed, bands_from_source(sources, 1.0))
        shifted = judge(
            behavior,
            (observed[0] + c, observed[1]),
            bands_from_source([(s + c, st) for s, st in sources], 1.0),
        )
        assert base.violated == shifted.violated
        assert abs(shifted.speed_band.lower - (base.speed_band.lower + c)) < 1e-9
        assert abs(shifted.speed_band.upper - (base.speed_band.upper + c)) < 1e-9
        base_keep = judge("keep current", observed, bands_from_source(sources, 1.0))
        shifted_keep = judge(
            "keep current",
            (observed[0], observed[1] + c),
            bands_from_source([(s, st + c) for s, st in sources], 1.0),
        )
        assert base_keep.violated == shifted_keep.violated


@criterion("end-to-end-determinism", budget_s=60.0)
def test_full_pipeline_byte_identical(tmp_path):
    run_a = run_pipeline(tmp_path / "a", n_cases=12, n_rules=38)
    run_b = run_pipeline(tmp_path / "b", n_cases=12, n_rules=38)
    a, b = snapshot_bytes(run_a), snapshot_bytes(run_b)
    assert a.keys() == b.keys()
    assert a == b


SCRIPT_BEHAVIORS = {
    "slowdown": "slow down",
    "keepcurrent": "keep current",
    "turnleft": "turn left",
    "turnright": "turn right",
}


@criterion("scripted-violation-reproduction", budget_s=120.0)
def test_scripted_predictors_reproduce_exact_rates():
    n_cases = 100
    ads_ids = ("pilotnet", "epoch", "cnn3d")
    source_frames = {
        case: [make_frame(width=24, height=18, text={"automt-case": str(case)})]
        for case in range(n_cases)
    }
    followup_frames = {
        case: [
            make_frame(
                width=24, height=18,
                text={"automt-case": str(case), "automt-frame": "0"},
            )
        ]
        for case in range(n_cases)
    }
    for script, behavior in SCRIPT_BEHAVIORS.items():
        for violate in (0, 19, 100):
            endpoints = {
                ads: BackendEndpoint(
                    BackendKind.PREDICT,
                    f"mock:predict-script?behavior={script}&violate={violate}&ads={ads}",
                )
                for ads in ads_ids
            }
            verdicts = []
            for case in range(n_cases):
                source = {}
                followup = {}
                for ads, endpoint in endpoints.items():
                    speed, steer = predict(endpoint, source_frames[case])
                    source[ads] = PredictionSeries(ads, str(case), tuple(speed), tuple(steer))
                    speed, steer = predict(endpoint, followup_frames[case])
                    followup[ads] = PredictionSeries(ads, str(case), tuple(speed), tuple(steer))
                verdicts.extend(judge_case(behavior, source, followup, case_id=str(case)))
            expected = violate / n_cases
            for ads in ads_ids:
                per_ads = [v for v in verdicts if v.ads_id == ads]
                assert violation_rate(per_ads) == expected, (script, violate, ads)


@criterion("validation-rate-conjunction", budget_s=30.0)
def test_conjunction_flips_and_mean_rate(tmp_path):
    rng = random.Random(606)
    metrics = ("scenario_alignment", "logical_alignment", "manipulation_verification")
    for _ in range(300):
        verdicts = [
            ValidityVerdict(f"c{i}", 0, rng.randint(0, 1), rng.randint(0, 1), rng.randint(0, 1))
            for i in range(rng.randint(1, 40))
        ]
        rate = validation_rate(verdicts)
        mean = sum(1.0 for v in verdicts if v.valid) / len(verdicts)
        assert abs(rate - mean) < 1e-12
        for verdict in verdicts:
            bits = {m: getattr(verdict, m) for m in metrics}
            for metric in metrics:
                flipped_bits = dict(bits, **{metric: 1 - bits[metric]})
                flipped = ValidityVerdict("c", 0, **flipped_bits)
                if verdict.valid:
                    assert not flipped.valid
                if all(value == 1 for value in flipped_bits.values()):
                    assert flipped.valid
    # report output reproduces the validation-rates table shape
    run = run_pipeline(tmp_path, n_cases=4, n_rules=6)
    markdown = (run / "report.md").read_text()
    header = (
        "| Method | Overall Validation Rate | Scenario Alignment | "
        "Manipulation Verification | Logical Alignment |"
    )
    assert header in markdown
    report = json.loads((run / "report.json").read_text())
    row = report["validation"]
    assert set(row["metrics"]) == set(metrics)


MANUAL_MR_MANIPULATIONS = (
    "vehicle on the road",
    "pedestrian on the road",
    "cyclist on the road",
    "red light on the roadside",
    "stop sign on the roadside",
    "the weather with rain",
    "the weather with snowy",
    "the weather with night",
    "the weather with fog",
)


@criterion("diversity-counter", budget_s=5.0)
def test_manual_mr_manifest_counts_nine():
    count, histogram = distinct_manipulations(MANUAL_MR_MANIPULATIONS)
    assert count == 9
    variants = list(MANUAL_MR_MANIPULATIONS) + [
        "Vehicle ON THE ROAD", "  pedestrian   on the road ", "THE WEATHER WITH RAIN",
    ]
    count_inflated, histogram = distinct_manipulations(variants)
    assert count_inflated == 9
    assert sum(histogram.values()) == len(variants)


@criterion("statistics", budget_s=30.0)
def test_statistics_against_oracles():
    rng = random.Random(707)
    for _ in range(100):
        table = random_table(rng)
        for weights in KappaWeights:
            got = weighted_fleiss_kappa(table, weights, n_categories=5)
            want = brute_force_weighted_kappa(table, weights, n_categories=5)
            assert abs(got - want) <= 1e-10
    unanimous = [[rng.randint(1, 5)] * 4 for _ in range(6)]
    for weights in KappaWeights:
        assert weighted_fleiss_kappa(unanimous, weights, n_categories=5) == 1.0

    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 50

    def oracle(a, b):
        xs = [mp.mpf(repr(x)) for x in a]
        ys = [mp.mpf(repr(y)) for y in b]
        na, nb = len(xs), len(ys)
        ma, mb = mp.fsum(xs) / na, mp.fsum(ys) / nb
        va = mp.fsum((x - ma) ** 2 for x in xs) / (na - 1)
        vb = mp.fsum((y - mb) ** 2 for y in ys) / (nb - 1)
        sa, sb = va / na, vb / nb
        t = (ma - mb) / mp.sqrt(sa + sb)
        df = (sa + sb) ** 2 / (sa**2 / (na - 1) + sb**2 / (nb - 1))
        p = mp.betainc(df / 2, mp.mpf(1) / 2, 0, df / (df + t * t), regularized=True)
        return float(t), float(df), float(p)

    for fixture in range(20):
        fixture_rng = random.Random(1000 + fixture)
        a = [fixture_rng.gauss(0.4, 0.05) for _ in range(fixture_rng.randint(3, 8))]
        b = [fixture_rng.gauss(0.36, 0.04) for _ in range(fixture_rng.randint(3, 8))]
        result = welch_t_test(a, b)
        t_ref, df_ref, p_ref = oracle(a, b)
        assert abs(result.t - t_ref) <= 1e-8
        assert abs(result.df - df_ref) <= 1e-8
        assert abs(result.p_two_sided - p_ref) <= 1e-8
        swapped = welch_t_test(b, a)
        assert swapped.t == -result.t
        assert swapped.p_two_sided == result.p_two_sided
