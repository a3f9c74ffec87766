"""Acceptance gate: one test per contract-level criterion.

Each test here is a self-contained check of one promised behavior, at
the stated tolerance, against independent brute-force reimplementations
where the promise is numeric. The terminal summary prints one PASS/FAIL
line per criterion.
"""

import json
import math
import time
from decimal import Decimal

import numpy as np
import pytest
from fastapi.testclient import TestClient

from clickmap.analysis import (
    CostModel,
    ElementAnnotation,
    element_importance,
    estimate_cost,
    fit_power,
    rank_correlation,
)
from clickmap.config import ExperimentConfig, MapParams
from clickmap.imaging import gaussian_blur, save_image
from clickmap.maps import AttentionMap, Point, PointSet, build_map
from clickmap.metrics import (
    cc,
    dataset_report,
    format_percent,
    ioc,
    normalized_nss,
    nss,
)
from clickmap.service import create_app, provision_experiment
from clickmap.store import EventLog, EventRecord, FilterPolicy
from oracles import (
    dense_blur,
    ioc_loops,
    nss_loops,
    pearson_two_pass,
    spearman_loops,
)

# -- shared synthetic fixture -----------------------------------------
# A two-component Gaussian mixture sampled into click "participants" and
# fixation "observers". Everything downstream of it is deterministic.

FIX_W, FIX_H = 64, 48
FIX_CENTERS = ((20.0, 18.0), (44.0, 30.0))
FIX_SIGMA = 5.0
FIX_PARAMS = MapParams(map_sigma_px=5.0)
FIX_SEED = 1


def sample_mixture(rng, n_people, per_person, prefix, kind):
    pts = []
    for p in range(n_people):
        pid = f"{prefix}{p:02d}"
        for i in range(per_person):
            while True:
                cx, cy = FIX_CENTERS[rng.integers(0, 2)]
                x = rng.normal(cx, FIX_SIGMA)
                y = rng.normal(cy, FIX_SIGMA)
                if 0 <= x < FIX_W and 0 <= y < FIX_H:
                    break
            pts.append(Point(float(x), float(y), float(i), pid))
    return PointSet(points=tuple(pts), width=FIX_W, height=FIX_H, kind=kind)


def make_fixture():
    rng = np.random.default_rng(FIX_SEED)
    clicks = sample_mixture(rng, 15, 20, "c", "click")
    fixations = sample_mixture(rng, 15, 10, "f", "fixation")
    return clicks, fixations


@pytest.fixture(scope="module")
def fixture_points():
    return make_fixture()


# -- criteria ----------------------------------------------------------


def test_c01_metric_oracle_equivalence():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    for _ in range(200):
        a = rng.random((32, 32))
        b = rng.random((32, 32))
        n_points = int(rng.integers(10, 40))
        pts = tuple(
            Point(float(rng.uniform(0, 31.9)), float(rng.uniform(0, 31.9)), float(i), "p")
            for i in range(n_points)
        )
        ps = PointSet(points=pts, width=32, height=32, kind="fixation")
        assert cc(a, b) == pytest.approx(pearson_two_pass(a, b), abs=1e-9)
        xs = [p.x for p in pts]
        ys = [p.y for p in pts]
        assert nss(a, ps) == pytest.approx(nss_loops(a, xs, ys), abs=1e-9)
    assert time.perf_counter() - start < 5.0


def test_c02_normalized_nss_golden_formatting():
    assert format_percent(normalized_nss(1.27, 1.42)) == "89%"
    assert format_percent(normalized_nss(1.20, 1.33)) == "90%"
    assert format_percent(normalized_nss(2.61, 3.35)) == "78%"


def test_c03_ioc_brute_force_equivalence():
    rng = np.random.default_rng(103)
    params = MapParams(map_sigma_px=2.0)
    for n_observers in (2, 3, 4):
        observers = {}
        pts = []
        for o in range(n_observers):
            name = f"o{o}"
            observers[name] = [
                (float(rng.uniform(0, 31.9)), float(rng.uniform(4, 27.9)))
                for _ in range(8)
            ]
            pts.extend(
                Point(x, y, float(i), name)
                for i, (x, y) in enumerate(observers[name])
            )
        ps = PointSet(points=tuple(pts), width=32, height=32, kind="fixation")
        assert ioc(ps, params) == pytest.approx(
            ioc_loops(observers, 32, 32, 2.0), abs=1e-9
        )

        # relabeling observers must not move the result by one ulp
        mapping = {f"o{o}": f"z{n_observers - o}" for o in range(n_observers)}
        relabeled = PointSet(
            points=tuple(
                Point(p.x, p.y, p.t_ms, mapping[p.participant_id]) for p in pts
            ),
            width=32,
            height=32,
            kind="fixation",
        )
        assert ioc(relabeled, params) == ioc(ps, params)


def test_c04_blur_correctness():
    rng = np.random.default_rng(104)
    for sigma in (0.8, 1.6, 3.0):
        img = rng.random((64, 64))
        assert np.abs(gaussian_blur(img, sigma) - dense_blur(img, sigma)).max() < 1e-6

    # impulse response against the analytic normalized kernel
    sigma = 2.0
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    taps /= taps.sum()
    impulse = np.zeros((65, 65))
    impulse[32, 32] = 1.0
    blurred = gaussian_blur(impulse, sigma)
    analytic = np.outer(taps, taps)
    window = blurred[32 - radius : 32 + radius + 1, 32 - radius : 32 + radius + 1]
    assert np.abs(window - analytic).max() < 1e-9

    img = rng.random((40, 56))
    for flip in (np.fliplr, np.flipud, lambda a: a[::-1, ::-1]):
        assert np.array_equal(
            gaussian_blur(np.ascontiguousarray(flip(img)), 1.7),
            flip(gaussian_blur(img, 1.7)),
        )


def test_c05_power_fit_recovery():
    rng = np.random.default_rng(2024)
    triples = [
        (rng.uniform(0.5, 3.0), rng.uniform(-1.0, -0.1), rng.uniform(0.5, 2.0))
        for _ in range(50)
    ]
    ns = np.arange(1, 41)
    start = time.perf_counter()

    for a, b, c in triples:
        samples = [(int(n), float(a * n**b + c)) for n in ns]
        fit = fit_power(samples, seed=0, n_boot=20)
        assert abs(fit.a - a) / abs(a) < 1e-4
        assert abs(fit.b - b) / abs(b) < 1e-4
        assert abs(fit.c - c) / abs(c) < 1e-4

    noise_rng = np.random.default_rng(7)
    worst = []
    for a, b, c in triples:
        noisy = a * ns**b + c + noise_rng.normal(0.0, 0.01, size=len(ns))
        samples = [(int(n), float(v)) for n, v in zip(ns, noisy)]
        fit = fit_power(samples, seed=0, n_boot=20)
        if abs(fit.c - c) >= 0.02:
            worst.append((b, abs(fit.c - c)))
    assert time.perf_counter() - start < 10.0
    assert not worst, (
        f"{len(worst)}/50 noisy triples missed c by >= 0.02: "
        + ", ".join(f"b={b:+.3f} err={e:.4f}" for b, e in sorted(worst))
    )


def test_c06_end_to_end_synthetic_fixture(fixture_points):
    start = time.perf_counter()
    clicks, fixations = fixture_points
    click_map = build_map(clicks, FIX_PARAMS)
    fixation_map = build_map(fixations, FIX_PARAMS)

    cc_val = cc(click_map, fixation_map)
    nss_val = nss(click_map, fixations)
    ioc_val = ioc(fixations, FIX_PARAMS)
    ratio = normalized_nss(nss_val, ioc_val)
    assert cc_val >= 0.90
    assert ratio >= 0.85

    # identical seed, fresh objects: bit-identical scores
    clicks2, fixations2 = make_fixture()
    assert cc(build_map(clicks2, FIX_PARAMS), build_map(fixations2, FIX_PARAMS)) == cc_val
    assert nss(build_map(clicks2, FIX_PARAMS), fixations2) == nss_val
    assert ioc(fixations2, FIX_PARAMS) == ioc_val
    assert time.perf_counter() - start < 30.0


def test_c07_convergence_curve_shape(fixture_points):
    clicks, fixations = fixture_points
    pairs = {"fix": (clicks, fixations)}
    samples = []
    for n in range(1, 16):
        report = dataset_report(pairs, FIX_PARAMS, n_pred=n, n_splits=10, base_seed=0)
        samples.append((n, report.aggregate.nss))
    scores = [s for _, s in samples]
    assert all(b >= a for a, b in zip(scores, scores[1:])), scores
    fit = fit_power(samples, seed=0, n_boot=50)
    assert fit.b < 0


def test_c08_element_importance_correlations():
    heights = [1.0, 0.8, 0.6, 0.4, 0.2]
    boxes = [(4, 4, 14, 14), (20, 4, 30, 14), (36, 4, 46, 14), (4, 20, 14, 30), (20, 20, 30, 30)]
    yy, xx = np.mgrid[0:40, 0:52].astype(np.float64)
    values = np.zeros((40, 52))
    for h, (x0, y0, x1, y1) in zip(heights, boxes):
        cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
        values += h * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * 2.5**2))
    amap = AttentionMap(values=values, normalization="raw")
    elements = [
        ElementAnnotation(element_id=f"e{i}", label=f"l{i}", box=box)
        for i, box in enumerate(boxes)
    ]

    scores = dict(element_importance(amap, elements))
    peak = values.max()
    brute = {}
    for el, (x0, y0, x1, y1) in zip(elements, boxes):
        best = 0.0
        for yv in range(y0, y1):
            for xv in range(x0, x1):
                best = max(best, values[yv, xv] / peak)
        brute[el.element_id] = best
    for element_id, expected in brute.items():
        assert scores[element_id] == pytest.approx(expected, abs=1e-9)

    ordered = [scores[f"e{i}"] for i in range(5)]
    pearson, spearman = rank_correlation(ordered, heights)
    assert pearson == pytest.approx(pearson_two_pass(ordered, heights), abs=1e-9)
    assert spearman == pytest.approx(spearman_loops(ordered, heights), abs=1e-9)
    assert rank_correlation(ordered, ordered[::-1])[1] == -1.0


def test_c09_cost_table_reproduction():
    rows = [
        (10.0, 17, Decimal("0.30"), Decimal("0.18"), Decimal("0.26")),
        (30.0, 17, Decimal("0.90"), Decimal("0.53"), Decimal("0.79")),
        (180.0, 3, Decimal("1.00"), Decimal("3.34"), Decimal("5.00")),
    ]
    for time_s, images, task_price, lo, hi in rows:
        estimate = estimate_cost(
            CostModel(
                time_per_image_s=time_s, images_per_task=images, participants=(10, 15)
            )
        )
        assert estimate.task_price == task_price
        assert estimate.per_image_lo == lo
        assert estimate.per_image_hi == hi


def test_c10_store_service_round_trip(tmp_path):
    rng = np.random.default_rng(110)
    stimuli = tmp_path / "src"
    stimuli.mkdir()
    image_ids = ("m0", "m1", "m2")
    paths = {}
    for image_id in image_ids:
        paths[image_id] = stimuli / f"{image_id}.png"
        save_image(rng.random((30, 40, 3)), paths[image_id])
    config = ExperimentConfig(
        experiment_id="round-trip",
        task_type="free_view",
        blur_sigma_px=3.0,
        bubble_radius_px=12.0,
        time_limit_s=10.0,
        mouse_modality="click",
        images_per_session=1,
        image_ids=image_ids,
    )
    root = tmp_path / "experiments"
    provision_experiment(root, config, paths, experimenter_key="acceptance-key")

    with TestClient(create_app(root, seed=11)) as client:
        created = client.post(
            "/api/sessions",
            json={"experiment_id": "round-trip", "participant_id": "p1"},
        ).json()
        headers = {"X-Session-Token": created["token"]}
        image_id = created["images"][0]

        seq = 2
        batches = []
        for b in range(5):
            batch = []
            if b == 0:
                batch.append({"seq": seq, "kind": "image_begin", "image_id": image_id})
                seq += 1
            while len(batch) < 10:
                batch.append(
                    {
                        "seq": seq,
                        "kind": "click",
                        "image_id": image_id,
                        "x": float(rng.uniform(0, 39.9)),
                        "y": float(rng.uniform(0, 29.9)),
                        "t_ms": float(seq * 3),
                    }
                )
                seq += 1
            batches.append(batch)
        for batch in batches:
            r = client.post(
                f"/api/sessions/{created['session_id']}/events",
                json={"events": batch},
                headers=headers,
            )
            assert r.status_code == 200

        monitor_headers = {"X-Experimenter-Key": "acceptance-key"}
        snapshot = client.get(
            f"/api/monitor/round-trip/{image_id}", headers=monitor_headers
        ).json()
        events = snapshot["streams"][0]["events"]
        assert len(events) == 50
        assert [e["seq"] for e in events] == list(range(2, 52))
        posted = [e for batch in batches for e in batch]
        assert [(e["x"], e["y"]) for e in events if e["kind"] == "click"] == [
            (e["x"], e["y"]) for e in posted if e["kind"] == "click"
        ]

        dup = client.post(
            f"/api/sessions/{created['session_id']}/events",
            json={"events": batches[2]},
            headers=headers,
        )
        assert dup.status_code == 200
        assert dup.json()["duplicate"] is True
        assert (
            client.get(
                f"/api/monitor/round-trip/{image_id}", headers=monitor_headers
            ).json()
            == snapshot
        )

    with TestClient(create_app(root, seed=11)) as replayed:
        assert (
            replayed.get(
                f"/api/monitor/round-trip/{image_id}", headers=monitor_headers
            ).json()
            == snapshot
        )
        state = replayed.get(
            f"/api/sessions/{created['session_id']}", headers=headers
        ).json()
        assert state["committed_through"] == 51
        assert state["current_image"] == image_id


def test_c11_filtering_monotonicity(tmp_path):
    sizes = {"img": (32, 32)}
    counts = {"p0": 1, "p1": 2, "p2": 5}
    with EventLog(tmp_path / "log", image_sizes=sizes) as log:
        for participant, n_clicks in counts.items():
            session = f"s-{participant}"
            log.append(
                EventRecord(
                    session_id=session, participant_id=participant,
                    experiment_id="e", seq=1, kind="session_begin",
                )
            )
            log.append(
                EventRecord(
                    session_id=session, participant_id=participant,
                    experiment_id="e", seq=2, kind="image_begin", image_id="img",
                )
            )
            for i in range(n_clicks):
                log.append(
                    EventRecord(
                        session_id=session, participant_id=participant,
                        experiment_id="e", seq=3 + i, kind="click", image_id="img",
                        x=4.0 + i, y=5.0, t_ms=10.0 * (i + 1),
                    )
                )

        total = sum(counts.values())
        kept = []
        for minimum in (0, 1, 2):
            policy = FilterPolicy(
                min_clicks_per_image=minimum, participant_outlier_sd=None
            )
            result = log.to_pointset("img", policy)
            kept.append(result.n_kept)
            assert result.n_total == total
        assert kept[0] >= kept[1] >= kept[2]
        assert kept == [8, 8, 7]

        strict = log.to_pointset(
            "img", FilterPolicy(min_clicks_per_image=2, participant_outlier_sd=None)
        )
        assert strict.dropped_participants == ("p0",)
        assert strict.removed_fraction == 1.0 - 7.0 / 8.0
