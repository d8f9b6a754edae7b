"""Evaluation metrics: normalized throughput, majority-rule detection, spikes.

Throughput always divides by the full frame length, so an SSAC system that
reserves slots for sensing is capped by its data fraction even when it
decodes every data slot correctly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .modem import BitFrame
from .snn import COMM, SENSE, SnnModel, forward_batch


@dataclass
class EvalResult:
    throughput: float
    detection_error: float
    mean_spike_count_per_slot: float


def normalized_throughput(decisions, truths) -> float:
    """Mean over examples of (correct data-slot bits) / (total slots).

    truths are BitFrames, whose data_slot_count marks how many leading slots
    carry information; decisions past it are ignored, but the denominator
    stays the full slot count.
    """
    if len(decisions) != len(truths):
        raise ValueError(f"{len(decisions)} decision rows for {len(truths)} truth frames")
    if len(truths) == 0:
        raise ValueError("need at least one example")
    total = 0.0
    for dec, frame in zip(decisions, truths):
        dec = np.asarray(dec)
        if dec.shape != frame.bits.shape:
            raise ValueError(f"decision shape {dec.shape} does not match frame length {len(frame)}")
        n_data = frame.data_slot_count
        total += float((dec[:n_data] == frame.bits[:n_data]).sum()) / len(frame)
    return total / len(truths)


def majority_detection(votes) -> int:
    """1 iff strictly more than half the per-slot votes are 1; ties say 0."""
    v = np.asarray(votes)
    if v.size == 0:
        raise ValueError("majority vote over an empty sequence")
    return int(v.sum() > v.size / 2)


def detection_error_from_votes(votes: np.ndarray, targets: np.ndarray) -> float:
    """Fraction of examples whose majority vote disagrees with the truth."""
    votes = np.asarray(votes)
    targets = np.asarray(targets)
    if votes.ndim != 2 or votes.shape[0] != targets.shape[0]:
        raise ValueError("votes must be (n, slots) aligned with targets (n,)")
    decisions = votes.sum(axis=1) > votes.shape[1] / 2
    return float((decisions != targets.astype(bool)).mean())


def detection_error(model: SnnModel, dataset, sense_slot_start: int = 0) -> float:
    """Majority-rule detection error of a model over a dataset.

    sense_slot_start restricts the vote to trailing slots (SSAC's sensing
    network votes on sensing slots only); 0 uses the whole frame.
    """
    if dataset.example_count == 0:
        raise ValueError("dataset is empty")
    _, _, _, br = forward_batch(model, dataset.inputs)
    return detection_error_from_votes(br[:, sense_slot_start:, SENSE], dataset.targets)


def _per_slot_spikes(model: SnnModel, inputs: np.ndarray) -> np.ndarray:
    _, bh, _, br = forward_batch(model, inputs)
    return bh.sum(axis=2) + br.sum(axis=2)


def evaluate(model: SnnModel, dataset) -> EvalResult:
    """Full-frame evaluation of a jointly trained model."""
    if dataset.example_count == 0:
        raise ValueError("dataset is empty")
    _, bh, _, br = forward_batch(model, dataset.inputs)
    throughput = float((br[:, :, COMM] == dataset.bits).mean())
    det = detection_error_from_votes(br[:, :, SENSE], dataset.targets)
    spikes = bh.sum(axis=2) + br.sum(axis=2)
    return EvalResult(throughput, det, float(spikes.mean()))


def evaluate_ssac(comm_model: SnnModel, sense_model: SnnModel, dataset, alpha: float) -> EvalResult:
    """Evaluate the two single-function networks as one system.

    The decode network is scored on the leading data slots (denominator still
    the full frame), the detection network votes over the sensing slots, and
    the spike count sums both networks since both run on every frame.
    """
    if dataset.example_count == 0:
        raise ValueError("dataset is empty")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    L = dataset.slot_count
    n_data = math.ceil(alpha * L)
    _, bh_c, _, br_c = forward_batch(comm_model, dataset.inputs)
    _, bh_s, _, br_s = forward_batch(sense_model, dataset.inputs)
    correct = (br_c[:, :n_data, COMM] == dataset.bits[:, :n_data]).sum(axis=1)
    throughput = float((correct / L).mean())
    det = detection_error_from_votes(br_s[:, n_data:, SENSE], dataset.targets)
    spikes = bh_c.sum(axis=2) + br_c.sum(axis=2) + bh_s.sum(axis=2) + br_s.sum(axis=2)
    return EvalResult(throughput, det, float(spikes.mean()))
