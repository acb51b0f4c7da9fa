"""Robustness sweeps: evaluate a mapper under simulated pitch and roll.

The flat-plane baseline sees perturbed full-resolution label images; the
network sees the perturbed RGB input. Both are scored against the
analytic truth grids of the unperturbed scenes, so any change in score is
caused by the disturbance alone.
"""

from __future__ import annotations

import os

import numpy as np

from .camera import load_rig
from .flatplane import flatplane_map
from .grid import GridMap, GridSpec, read_grid
from .metrics import evaluate_set
from .netpbm import read_pgm, read_ppm
from .perturb import apply_pitch, apply_roll
from .synth import read_manifest
from .weakgt import ClassMapping

METHODS = ("flatplane", "ved", "ved-no-sampling")

# (row name, kind, magnitude in degrees); +- rows average both signs
PERTURBATIONS = (
    ("none", "none", 0.0),
    ("pitch+-1.5", "pitch", 1.5),
    ("roll+-5", "roll", 5.0),
)


def perturb_image(image, kind: str, degrees: float, fy: float, labels: bool) -> np.ndarray:
    if kind == "none" or degrees == 0:
        return np.asarray(image)
    if kind == "pitch":
        return apply_pitch(image, fy, degrees)
    if kind == "roll":
        return apply_roll(image, degrees, labels=labels)
    raise ValueError(f"unknown perturbation kind {kind!r}")


class FlatplaneMapper:
    def __init__(self, root: str, records: list[dict], mapping: ClassMapping, spec: GridSpec):
        self.root = root
        self.records = records
        self.mapping = mapping
        self.spec = spec
        self.rig = load_rig(os.path.join(root, records[0]["rig"]))
        self._labels = [None] * len(records)

    def _label(self, i):
        if self._labels[i] is None:
            self._labels[i] = read_pgm(os.path.join(self.root, self.records[i]["labels"]))
        return self._labels[i]

    def __call__(self, kind: str, degrees: float) -> list[GridMap]:
        fy = self.rig.intrinsics.fy
        return [
            flatplane_map(perturb_image(self._label(i), kind, degrees, fy, True), self.rig, self.spec, self.mapping)
            for i in range(len(self.records))
        ]


class VedMapper:
    def __init__(self, root: str, records: list[dict], ckpt):
        from .ved import _check_image

        self.ckpt = ckpt
        self.images = np.stack(
            [_check_image(ckpt.config, read_ppm(os.path.join(root, r["rgb"]))) for r in records]
        )
        rig = load_rig(os.path.join(root, records[0]["rig"]))
        c = ckpt.config
        self.fy = rig.scaled(c.input_width, c.input_height).intrinsics.fy

    def __call__(self, kind: str, degrees: float) -> list[GridMap]:
        from .ved import infer_many

        imgs = [perturb_image(im, kind, degrees, self.fy, False) for im in self.images]
        return infer_many(self.ckpt, imgs)


def load_truths(root: str, records: list[dict], key: str = "true_grid") -> list[GridMap]:
    return [read_grid(os.path.join(root, r[key])) for r in records]


def _masked(preds, truths):
    # predictions are scored on the truth's field of view
    return [(p.with_mask(t.eval_mask), t) for p, t in zip(preds, truths)]


def make_mapper(method: str, root: str, records: list[dict], ckpt=None, mapping=None, spec=None):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method == "flatplane":
        if mapping is None:
            from .synth import default_mapping

            mapping = default_mapping()
        return FlatplaneMapper(root, records, mapping, spec)
    if ckpt is None:
        raise ValueError(f"method {method!r} needs a checkpoint")
    wants_sampling = method == "ved"
    if ckpt.config.sampling_enabled != wants_sampling:
        raise ValueError(
            f"method {method!r} but checkpoint was trained with sampling "
            f"{'enabled' if ckpt.config.sampling_enabled else 'disabled'}"
        )
    return VedMapper(root, records, ckpt)


def sweep_scores(mapper, truths, perturbations=PERTURBATIONS, subsets=None) -> dict:
    """{(row name, subset name): (mean accuracy, mean IoU)}.

    ``subsets`` maps a name to sample indices; by default a single subset
    "all". Signed rows evaluate +angle and -angle and average the two scores.
    """
    subsets = subsets or {"all": list(range(len(truths)))}
    out = {}
    for name, kind, deg in perturbations:
        signs = (1,) if kind == "none" else (1, -1)
        acc = {s: [] for s in subsets}
        for sign in signs:
            preds = mapper(kind, sign * deg)
            pairs = _masked(preds, truths)
            for s, idx in subsets.items():
                score = evaluate_set([pairs[i] for i in idx])
                acc[s].append((score.mean_accuracy, score.mean_iou))
        for s in subsets:
            out[(name, s)] = tuple(np.mean(np.array(acc[s]), axis=0).tolist())
    return out


def sweep_rows(method: str, scores: dict, subset: str = "all", perturbations=PERTURBATIONS) -> list[dict]:
    base_acc, base_iou = scores[(perturbations[0][0], subset)]
    rows = []
    for name, _, _ in perturbations:
        a, i = scores[(name, subset)]
        rows.append(
            {
                "method": method,
                "perturbation": name,
                "mean_accuracy": a,
                "mean_iou": i,
                "acc_downgrade": base_acc - a,
                "iou_downgrade": base_iou - i,
            }
        )
    return rows


def perturbation_sweep(method: str, manifest, ckpt=None, mapping=None, perturbations=PERTURBATIONS,
                       truth_key: str = "true_grid") -> list[dict]:
    """One table row per perturbation setting; downgrade is relative to the first row."""
    if perturbations[0][1] != "none":
        raise ValueError("the first perturbation row must be the unperturbed reference")
    root, records = read_manifest(manifest)
    if not records:
        raise ValueError(f"{manifest}: empty manifest")
    truths = load_truths(root, records, truth_key)
    mapper = make_mapper(method, root, records, ckpt, mapping, truths[0].spec)
    return sweep_rows(method, sweep_scores(mapper, truths, perturbations), "all", perturbations)
