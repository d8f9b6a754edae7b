"""Labeled frame generation and the NISD binary dataset format.

Each example is one frame: the target indicator, the slot bits, and the
receiver inputs after modulation, channel, noise and framing.  Example i is
generated from its own generator seeded by (master_seed, i), so any example
can be regenerated alone and generation could be parallelized across
examples.  Inputs are quantized to 32-bit floats at generation time (they
are noisy measurements; no point storing more), which makes the save/load
round trip bit-exact even though training runs in 64-bit.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .channel import (
    ChannelConfig,
    ReceivedFrame,
    apply_channel,
    draw_channel,
    frame_received,
    noise_variance_from_snr,
)
from .errors import BadMagicError, FileFormatError, FormatVersionError, TruncatedFileError
from .modem import BitFrame, ppm_modulate

DATASET_MAGIC = b"NISD"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIIIIdQ")  # magic, version, n, L, L_b, snr_db, master_seed

MODES = ("isac", "ssac")


@dataclass
class Example:
    """One labeled frame as the receiver sees it."""

    inputs: ReceivedFrame
    bits: BitFrame
    target: int


@dataclass(eq=False)
class Dataset:
    """In-memory dataset; exactly the fields the NISD file persists."""

    inputs: np.ndarray   # (n, L, 4*L_b) float64, float32-quantized values
    bits: np.ndarray     # (n, L) uint8
    targets: np.ndarray  # (n,) uint8
    L_b: int
    snr_db: float
    master_seed: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        self.targets = np.asarray(self.targets, dtype=np.uint8)
        n, L, width = self.inputs.shape
        if self.bits.shape != (n, L) or self.targets.shape != (n,):
            raise ValueError("inputs, bits and targets disagree on example count or length")
        if width != 4 * self.L_b:
            raise ValueError(f"slot width {width} does not match 4*L_b={4 * self.L_b}")
        if not np.isfinite(self.inputs).all():
            raise ValueError("inputs must be finite")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit an unsigned 64-bit integer")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.L_b == other.L_b
            and self.snr_db == other.snr_db
            and self.master_seed == other.master_seed
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.bits, other.bits)
            and np.array_equal(self.targets, other.targets)
        )

    @property
    def example_count(self) -> int:
        return self.inputs.shape[0]

    @property
    def slot_count(self) -> int:
        return self.inputs.shape[1]

    def example(self, i: int, data_slot_count: int | None = None) -> Example:
        """Materialize example i; data_slot_count marks SSAC sensing slots."""
        n_data = self.slot_count if data_slot_count is None else data_slot_count
        return Example(
            inputs=ReceivedFrame(slot_inputs=self.inputs[i]),
            bits=BitFrame(bits=self.bits[i], data_slot_count=n_data),
            target=int(self.targets[i]),
        )


def example_rng(master_seed: int, index: int) -> np.random.Generator:
    """Generator for example `index`: master seed plus the index as spawn key."""
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(index,)))


def generate_dataset(
    cfg: ChannelConfig,
    L: int,
    L_b: int,
    n: int,
    mode: str = "isac",
    master_seed: int = 0,
    alpha: float | None = None,
) -> Dataset:
    """Draw n labeled frames through the configured channel.

    Per example, in fixed order: target indicator, slot bits, channel
    realization, receiver noise.  SSAC mode overwrites the trailing sensing
    slots with 1 after the bit draw, so the two modes consume identical
    random streams and share channels and noise example for example.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "ssac":
        if alpha is None or not 0.0 < alpha < 1.0:
            raise ValueError("ssac mode needs alpha in (0, 1)")
        n_data = math.ceil(alpha * L)
    else:
        n_data = L
    if L < 1 or L_b < 1 or n < 1:
        raise ValueError("L, L_b and n must all be positive")

    noise_var = noise_variance_from_snr(cfg)
    inputs = np.empty((n, L, 4 * L_b), dtype=np.float64)
    bits = np.empty((n, L), dtype=np.uint8)
    targets = np.empty(n, dtype=np.uint8)

    for i in range(n):
        rng = example_rng(master_seed, i)
        v = int(rng.integers(0, 2))
        frame_bits = rng.integers(0, 2, size=L).astype(np.uint8)
        frame_bits[n_data:] = 1
        realization = draw_channel(cfg, v, rng)
        samples = apply_channel(ppm_modulate(frame_bits, L_b), realization, noise_var, rng)
        frame = frame_received(samples, L_b, noise_var)
        inputs[i] = frame.slot_inputs.astype(np.float32)
        bits[i] = frame_bits
        targets[i] = v

    return Dataset(
        inputs=inputs, bits=bits, targets=targets,
        L_b=L_b, snr_db=cfg.snr_db, master_seed=master_seed,
    )


def _payload_dtype(L: int, L_b: int) -> np.dtype:
    return np.dtype([("v", "u1"), ("bits", "u1", (L,)), ("inputs", "<f4", (L, 4 * L_b))])


def save_dataset(dataset: Dataset, path) -> None:
    """Write the dataset in the little-endian NISD layout."""
    header = _HEADER.pack(
        DATASET_MAGIC, DATASET_VERSION,
        dataset.example_count, dataset.slot_count, dataset.L_b,
        dataset.snr_db, dataset.master_seed,
    )
    records = np.empty(dataset.example_count, dtype=_payload_dtype(dataset.slot_count, dataset.L_b))
    records["v"] = dataset.targets
    records["bits"] = dataset.bits
    records["inputs"] = dataset.inputs.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def load_dataset(path) -> Dataset:
    """Read a dataset written by save_dataset; round trip is bit-exact."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise TruncatedFileError("dataset file ended inside the header")
        magic, version, n, L, L_b, snr_db, master_seed = _HEADER.unpack(head)
        if magic != DATASET_MAGIC:
            raise BadMagicError(f"expected magic {DATASET_MAGIC!r}, found {magic!r}")
        if version != DATASET_VERSION:
            raise FormatVersionError(f"unsupported dataset format version {version}")
        if n == 0 or L == 0 or L_b == 0:
            raise FileFormatError("header counts must be positive")
        dtype = _payload_dtype(L, L_b)
        payload = fh.read(n * dtype.itemsize + 1)
    if len(payload) < n * dtype.itemsize:
        raise TruncatedFileError(
            f"payload holds {len(payload)} bytes, header promises {n * dtype.itemsize}"
        )
    if len(payload) > n * dtype.itemsize:
        raise FileFormatError("trailing bytes after dataset payload")
    records = np.frombuffer(payload, dtype=dtype, count=n)
    return Dataset(
        inputs=records["inputs"].astype(np.float64),
        bits=records["bits"].copy(),
        targets=records["v"].copy(),
        L_b=L_b,
        snr_db=snr_db,
        master_seed=master_seed,
    )
