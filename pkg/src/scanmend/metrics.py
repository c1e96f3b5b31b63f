"""Completion quality metrics and diversity diagnostics.

Accuracy: percentage of completion points within epsilon of the ground
truth.  Completeness: the mirror image.  F1: their harmonic mean.  The JSD
diagnostic compares aggregate occupancy distributions of two cloud
collections on a 32^3 grid over [-1, 1]^3 (base-2 logarithm, so the value
lies in [0, 1]); a high value against the repeated-single-cloud reference
indicates mode collapse.  Everything assumes unit-sphere-normalized clouds
and epsilon defaults to 0.03 in those units.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .distances import chamfer, emd, hausdorff_symmetric
from .pointset import PointSet
from .rng import Rng
from .synth import CorruptionSpec, corrupt

DEFAULT_EPS = 0.03
DEFAULT_GRID = 32


def _pts(x) -> np.ndarray:
    return x.points if isinstance(x, PointSet) else np.asarray(x, dtype=np.float64)


def accuracy(comp, gt, eps: float = DEFAULT_EPS) -> float:
    """Percent of completion points within eps of some ground-truth point."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    c, g = _pts(comp), _pts(gt)
    if c.shape[0] == 0 or g.shape[0] == 0:
        raise ValueError("accuracy needs non-empty point sets")
    d = cdist(c, g).min(axis=1)
    return 100.0 * float((d <= eps).mean())


def completeness(comp, gt, eps: float = DEFAULT_EPS) -> float:
    """Percent of ground-truth points within eps of some completion point."""
    return accuracy(gt, comp, eps)


def f1(acc: float, comp: float) -> float:
    """Harmonic mean of accuracy and completeness percentages."""
    if not (0.0 <= acc <= 100.0 and 0.0 <= comp <= 100.0):
        raise ValueError(f"percentages out of range: acc={acc}, comp={comp}")
    if acc == 0.0 and comp == 0.0:
        return 0.0
    return 2.0 * acc * comp / (acc + comp)


# ---- occupancy / JSD ----


@dataclass(frozen=True)
class OccupancyDistribution:
    """Normalized cell probabilities over a g^3 grid spanning [-1, 1]^3."""

    g: int
    probs: np.ndarray  # (g, g, g), sums to 1

    @staticmethod
    def from_clouds(clouds, g: int = DEFAULT_GRID) -> "OccupancyDistribution":
        pts = np.concatenate([_pts(c).reshape(-1, 3) for c in clouds])
        if pts.shape[0] == 0:
            raise ValueError("no points to build an occupancy distribution from")
        outside = int(((pts < -1.0) | (pts > 1.0)).any(axis=1).sum())
        if outside:
            warnings.warn(
                f"{outside} points outside [-1,1]^3 clamped to the grid", stacklevel=2
            )
        cells = np.clip(((pts + 1.0) * 0.5 * g).astype(np.int64), 0, g - 1)
        flat = cells[:, 0] * g * g + cells[:, 1] * g + cells[:, 2]
        counts = np.bincount(flat, minlength=g**3).astype(np.float64)
        return OccupancyDistribution(g=g, probs=(counts / counts.sum()).reshape(g, g, g))


def _kl_base2(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    return float((p[mask] * np.log2(p[mask] / q[mask])).sum())


def jsd(set_a, set_b, g: int = DEFAULT_GRID) -> float:
    """Base-2 Jensen-Shannon divergence of two cloud collections' occupancy."""
    pa = OccupancyDistribution.from_clouds(set_a, g).probs.reshape(-1)
    pb = OccupancyDistribution.from_clouds(set_b, g).probs.reshape(-1)
    m = 0.5 * (pa + pb)
    return 0.5 * _kl_base2(pa, m) + 0.5 * _kl_base2(pb, m)


def mode_collapse_reference(gt_sets, rng: Rng) -> list:
    """One uniformly chosen cloud repeated as many times as there are inputs."""
    clouds = [PointSet(_pts(c)) for c in gt_sets]
    if not clouds:
        raise ValueError("gt_sets must be non-empty")
    chosen = clouds[rng.randint(len(clouds))]
    return [chosen for _ in clouds]


# ---- per-set reports ----


@dataclass
class MetricsReport:
    """Per-shape metric rows plus their means."""

    rows: list
    aggregate: dict

    COLUMNS = ("accuracy", "completeness", "f1", "emd", "chamfer", "hausdorff_sym")


def evaluate_completions(completions, gts, eps: float = DEFAULT_EPS) -> MetricsReport:
    comp_list = [_pts(c) for c in completions]
    gt_list = [_pts(g) for g in gts]
    if len(comp_list) != len(gt_list):
        raise ValueError(f"{len(comp_list)} completions vs {len(gt_list)} ground truths")
    rows = []
    for i, (c, g) in enumerate(zip(comp_list, gt_list)):
        acc = accuracy(c, g, eps)
        com = completeness(c, g, eps)
        cost, _ = emd(c, g) if c.shape[0] == g.shape[0] else (float("nan"), None)
        rows.append(
            {
                "index": i,
                "accuracy": acc,
                "completeness": com,
                "f1": f1(acc, com),
                "emd": cost,
                "chamfer": chamfer(c, g),
                "hausdorff_sym": hausdorff_symmetric(c, g),
            }
        )
    aggregate = {
        col: float(np.mean([r[col] for r in rows])) for col in MetricsReport.COLUMNS
    }
    return MetricsReport(rows=rows, aggregate=aggregate)


def incompleteness_sweep(
    pipeline,
    ae_baseline,
    gt_clouds,
    r_values,
    *,
    sigma: float = 0.01,
    eps: float = DEFAULT_EPS,
    seed: int = 0,
) -> list:
    """F1 and EMD at each incompleteness level for the pipeline and the
    AE-only baseline (decode(encode(partial)) of `ae_baseline`).

    Partials are regenerated from the ground-truth clouds at every r with
    seeds derived from (seed, r index, instance), so the sweep is
    deterministic and independent of any stored dataset corruption.
    """
    gts = np.stack([_pts(c) for c in gt_clouds])
    root = Rng(seed)
    rows = []
    for ri, r in enumerate(r_values):
        partials = np.empty_like(gts)
        for i in range(gts.shape[0]):
            spec = CorruptionSpec(r=float(r), sigma=sigma, seed=root.spawn(ri * 1_000_003 + i).seed)
            partials[i] = corrupt(PointSet(gts[i]), spec).points
        ours = pipeline.complete_batch(partials)
        ae_out = _ae_reconstruct(ae_baseline, partials)
        ours_rep = evaluate_completions(ours, gts, eps)
        ae_rep = evaluate_completions(ae_out, gts, eps)
        rows.append(
            {
                "r": float(r),
                "f1_ae": ae_rep.aggregate["f1"],
                "emd_ae": ae_rep.aggregate["emd"],
                "f1_ours": ours_rep.aggregate["f1"],
                "emd_ours": ours_rep.aggregate["emd"],
            }
        )
    return rows


def _ae_reconstruct(ae, partials: np.ndarray) -> np.ndarray:
    from .nn.tensor import Tensor

    ae.infer()
    flat = ae.decoder.forward(Tensor(ae.encoder.forward(Tensor(partials)).data))
    return flat.data.reshape(partials.shape[0], ae.spec.n, 3).copy()
