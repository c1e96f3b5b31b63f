import numpy as np
import pytest

from scanmend.autoencoder import Autoencoder, AutoencoderSpec
from scanmend.gan import CompletionPipeline, GanSpec, build_generator
from scanmend.metrics import (
    OccupancyDistribution,
    accuracy,
    completeness,
    evaluate_completions,
    f1,
    incompleteness_sweep,
    jsd,
    mode_collapse_reference,
)
from scanmend.pointset import PointSet
from scanmend.rng import Rng


def test_accuracy_hand_example():
    comp = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    gt = np.array([[0.0, 0.0, 0.01]])
    # one of two completion points lies within 0.03 of the ground truth
    assert accuracy(comp, gt, 0.03) == pytest.approx(50.0, abs=1e-12)
    # the single ground-truth point is 0.01 from the completion
    assert completeness(comp, gt, 0.03) == pytest.approx(100.0, abs=1e-12)
    assert f1(50.0, 100.0) == pytest.approx(200.0 / 3.0, abs=1e-12)


def test_accuracy_identity_and_zero_eps():
    pts = Rng(0).normal((20, 3))
    assert accuracy(pts, pts) == 100.0
    far = pts + np.array([10.0, 0.0, 0.0])
    assert accuracy(pts, far, 0.0) == 0.0
    assert accuracy(pts, pts.copy(), 0.0) == 100.0


def test_accuracy_validation():
    pts = np.zeros((2, 3))
    with pytest.raises(ValueError, match="eps"):
        accuracy(pts, pts, -0.1)
    with pytest.raises(ValueError, match="non-empty"):
        accuracy(np.zeros((0, 3)), pts)
    with pytest.raises(ValueError, match="non-empty"):
        completeness(pts, np.zeros((0, 3)))


def test_accuracy_monotone_in_eps_and_order_invariant():
    rng = Rng(1)
    for _ in range(10):
        a = rng.normal((15, 3)) * 0.5
        b = rng.normal((12, 3)) * 0.5
        vals = [accuracy(a, b, e) for e in (0.0, 0.05, 0.1, 0.5, 2.0)]
        assert all(x <= y for x, y in zip(vals, vals[1:]))
        assert vals[-1] == 100.0
        perm = rng.permutation(15)
        assert accuracy(a[perm], b, 0.1) == accuracy(a, b, 0.1)


def test_f1_reference_values():
    # published chair-row values recovered from their own components
    assert f1(80.7, 80.8) == pytest.approx(80.8, abs=0.1)
    assert f1(39.6, 61.8) == pytest.approx(48.2, abs=0.1)
    assert f1(73.0, 73.0) == 73.0
    assert f1(0.0, 0.0) == 0.0
    assert f1(0.0, 80.0) == 0.0


def test_f1_validation_and_bounds():
    with pytest.raises(ValueError, match="out of range"):
        f1(-1.0, 50.0)
    with pytest.raises(ValueError, match="out of range"):
        f1(50.0, 100.5)
    rng = Rng(2)
    for _ in range(50):
        a, b = 100.0 * rng.uniform(2)
        v = f1(a, b)
        assert min(a, b) <= v <= max(a, b) + 1e-12


def test_occupancy_distribution_normalized():
    rng = Rng(3)
    clouds = [rng.normal((30, 3)) * 0.2 for _ in range(4)]
    dist = OccupancyDistribution.from_clouds(clouds, g=16)
    assert dist.probs.shape == (16, 16, 16)
    assert np.all(dist.probs >= 0.0)
    assert float(dist.probs.sum()) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError, match="no points"):
        OccupancyDistribution.from_clouds([np.zeros((0, 3))])


def test_occupancy_clamps_outside_points_with_warning():
    cloud = np.array([[1.5, 0.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.warns(UserWarning, match="clamped"):
        dist = OccupancyDistribution.from_clouds([cloud])
    assert float(dist.probs.sum()) == pytest.approx(1.0, abs=1e-12)


def test_jsd_identical_and_disjoint():
    rng = Rng(4)
    a = [rng.normal((20, 3)) * 0.3 for _ in range(3)]
    assert jsd(a, [c.copy() for c in a]) == pytest.approx(0.0, abs=1e-12)
    # single occupied cells on opposite corners: disjoint support, base-2 -> 1
    lo = [np.full((10, 3), -0.9)]
    hi = [np.full((10, 3), 0.9)]
    assert jsd(lo, hi) == pytest.approx(1.0, abs=1e-12)


def test_jsd_symmetric_and_bounded():
    rng = Rng(5)
    for _ in range(5):
        a = [rng.normal((25, 3)) * 0.3 for _ in range(2)]
        b = [rng.normal((25, 3)) * 0.3 for _ in range(2)]
        v = jsd(a, b)
        assert v == pytest.approx(jsd(b, a), abs=1e-12)
        assert 0.0 <= v <= 1.0


def test_jsd_accepts_point_sets():
    a = [PointSet(Rng(6).normal((20, 3)) * 0.2)]
    assert jsd(a, a) == 0.0


def test_mode_collapse_reference():
    rng = Rng(7)
    gts = [rng.normal((15, 3)) * 0.3 for _ in range(6)]
    ref = mode_collapse_reference(gts, Rng(0))
    assert len(ref) == 6
    for c in ref[1:]:
        assert np.array_equal(c.points, ref[0].points)
    # the chosen cloud is one of the inputs
    assert any(np.array_equal(ref[0].points, g) for g in gts)
    assert jsd(gts, ref) > jsd(gts, gts)
    again = mode_collapse_reference(gts, Rng(0))
    assert np.array_equal(again[0].points, ref[0].points)
    with pytest.raises(ValueError, match="non-empty"):
        mode_collapse_reference([], Rng(0))


def test_evaluate_completions_rows_and_aggregate():
    rng = Rng(8)
    gts = [rng.normal((10, 3)) * 0.3 for _ in range(3)]
    comps = [g + 0.001 * rng.normal((10, 3)) for g in gts]
    rep = evaluate_completions(comps, gts)
    assert len(rep.rows) == 3
    for i, row in enumerate(rep.rows):
        assert row["index"] == i
        assert row["accuracy"] == 100.0 and row["completeness"] == 100.0
        assert row["f1"] == 100.0
        assert min(row["accuracy"], row["completeness"]) <= row["f1"] <= max(
            row["accuracy"], row["completeness"]
        )
        assert row["emd"] < 0.01 and row["chamfer"] < 1e-4 and row["hausdorff_sym"] < 0.01
    for col in ("accuracy", "completeness", "f1", "emd", "chamfer", "hausdorff_sym"):
        assert rep.aggregate[col] == pytest.approx(np.mean([r[col] for r in rep.rows]))


def test_evaluate_completions_size_mismatch_gives_nan_emd():
    gt = [Rng(9).normal((10, 3))]
    comp = [Rng(10).normal((8, 3))]
    rep = evaluate_completions(comp, gt)
    assert np.isnan(rep.rows[0]["emd"])
    assert np.isfinite(rep.rows[0]["chamfer"])
    with pytest.raises(ValueError, match="completions vs"):
        evaluate_completions(comp, gt + gt)


def tiny_pipeline(n=16, k=4):
    ae = Autoencoder(AutoencoderSpec(n=n, k=k), Rng(20))
    return ae, CompletionPipeline(clean_ae=ae, generator=build_generator(GanSpec(k=k), Rng(21)))


def test_incompleteness_sweep_structure_and_determinism():
    ae, pipeline = tiny_pipeline()
    rng = Rng(22)
    gts = [PointSet(rng.normal((16, 3)) * 0.3) for _ in range(4)]
    rows = incompleteness_sweep(pipeline, ae, gts, [0.1, 0.3], seed=5)
    assert [row["r"] for row in rows] == [0.1, 0.3]
    for row in rows:
        assert set(row) == {"r", "f1_ae", "emd_ae", "f1_ours", "emd_ours"}
        assert all(np.isfinite(v) for v in row.values())
    again = incompleteness_sweep(pipeline, ae, gts, [0.1, 0.3], seed=5)
    assert rows == again
    other = incompleteness_sweep(pipeline, ae, gts, [0.1, 0.3], seed=6)
    assert rows != other
