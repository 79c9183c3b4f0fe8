"""Hyperspectral cubes, ground truth, patch extraction and band bookkeeping.

Cubes are stored on disk as a JSON header next to a band-sequential (BSQ)
raw file of little-endian float32 planes. Ground truth is a row-major
little-endian uint16 raster where 0 marks unlabeled pixels.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from bandxai.errors import ConfigError, DataError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HyperCube:
    """An ``h x w x b`` reflectance array with per-band wavelengths in micrometres."""

    data: np.ndarray
    wavelengths: np.ndarray
    name: str = "cube"

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        wl = np.asarray(self.wavelengths, dtype=np.float64).ravel()
        if data.ndim != 3 or min(data.shape) < 1:
            raise DataError(f"cube data must be a non-empty 3-D array, got shape {data.shape}")
        if wl.shape[0] != data.shape[2]:
            raise DataError(f"{wl.shape[0]} wavelengths for {data.shape[2]} bands")
        if wl.size > 1 and not np.all(np.diff(wl) > 0):
            raise DataError("wavelengths must be strictly increasing")
        if not np.all(np.isfinite(data)):
            raise DataError("cube contains non-finite values")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "wavelengths", _frozen(wl))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]

    def digest(self) -> str:
        h = hashlib.sha256(self.data.tobytes())
        h.update(self.wavelengths.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class GroundTruth:
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if labels.ndim != 2:
            raise DataError("ground truth must be a 2-D array")
        if self.class_count < 1:
            raise DataError("class_count must be >= 1")
        if labels.min() < 0 or labels.max() > self.class_count:
            raise DataError(f"labels must lie in 0..{self.class_count}")
        object.__setattr__(self, "labels", _frozen(labels))

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class Patch:
    id: int
    center: tuple[int, int]
    label: int
    values: np.ndarray


@dataclass(frozen=True)
class PatchSet:
    """Labeled patches stored as stacked arrays.

    ``values`` has shape ``(n, h', w', b)``; ``ids`` are positions in the
    originally extracted set and survive splitting and band restriction.
    """

    values: np.ndarray
    labels: np.ndarray
    centers: np.ndarray
    ids: np.ndarray
    wavelengths: np.ndarray
    class_count: int
    provenance: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 4:
            raise DataError(f"patch values must be 4-D (n, h', w', b), got {values.shape}")
        n = values.shape[0]
        labels = np.asarray(self.labels, dtype=np.int64).reshape(n)
        centers = np.asarray(self.centers, dtype=np.int64).reshape(n, 2)
        ids = np.asarray(self.ids, dtype=np.int64).reshape(n)
        wl = np.asarray(self.wavelengths, dtype=np.float64).reshape(values.shape[3])
        if n and (labels.min() < 1 or labels.max() > self.class_count):
            raise DataError("patch labels must lie in 1..class_count")
        for name, arr in (("values", values), ("labels", labels), ("centers", centers),
                          ("ids", ids), ("wavelengths", wl)):
            object.__setattr__(self, name, _frozen(arr))

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i: int) -> Patch:
        r, c = self.centers[i]
        return Patch(int(self.ids[i]), (int(r), int(c)), int(self.labels[i]), self.values[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def patch_dims(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]

    @property
    def band_count(self) -> int:
        return self.values.shape[3]

    def subset(self, index) -> "PatchSet":
        index = np.asarray(index, dtype=np.int64)
        return PatchSet(self.values[index], self.labels[index], self.centers[index],
                        self.ids[index], self.wavelengths, self.class_count, self.provenance)


@dataclass(frozen=True)
class BandStats:
    mean: np.ndarray
    std: np.ndarray
    source: str = "train split only"

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        std = np.asarray(self.std, dtype=np.float64).ravel()
        if mean.shape != std.shape:
            raise DataError("mean and std lengths differ")
        if np.any(std < 0):
            raise DataError("std must be non-negative")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "std", _frozen(std))

    @property
    def band_count(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.3
    seed: int = 0
    stratified: bool = True
    test_halving: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the planted-band synthetic scene.

    ``snr`` is the peak class-signature amplitude divided by the per-pixel
    noise standard deviation; ``math.inf`` gives a noiseless cube.
    """

    height: int = 64
    width: int = 64
    bands: int = 40
    classes: int = 4
    informative_bands: tuple[int, ...] = (5, 6, 7, 18, 19, 25, 31, 32)
    snr: float = 0.4
    seed: int = 0
    labeled_fraction: float = 0.7
    amplitude: float = 0.1
    wavelength_range: tuple[float, float] = (0.43, 0.86)

    def __post_init__(self):
        object.__setattr__(self, "informative_bands", tuple(int(i) for i in self.informative_bands))
        object.__setattr__(self, "wavelength_range", tuple(float(v) for v in self.wavelength_range))
        if self.height < 1 or self.width < 1 or self.bands < 1:
            raise ConfigError("height, width and bands must be >= 1")
        if self.classes < 2:
            raise ConfigError("at least two classes are required")
        if not self.informative_bands:
            raise ConfigError("informative_bands must be non-empty")
        if len(set(self.informative_bands)) != len(self.informative_bands):
            raise ConfigError("informative_bands contains duplicates")
        if min(self.informative_bands) < 0 or max(self.informative_bands) >= self.bands:
            raise ConfigError("informative_bands must lie in 0..bands-1")
        if not self.snr > 0:
            raise ConfigError("snr must be positive")
        if not 0.0 < self.labeled_fraction <= 1.0:
            raise ConfigError("labeled_fraction must lie in (0, 1]")
        lo, hi = self.wavelength_range
        if not hi > lo:
            raise ConfigError("wavelength_range must be increasing")


# -- file I/O ----------------------------------------------------------------

def write_cube(cube: HyperCube, header_path, data_file: str | None = None) -> Path:
    """Write ``cube`` as ``<name>.hdr.json`` plus a BSQ float32 raw file."""
    header_path = Path(header_path)
    if data_file is None:
        data_file = header_path.name.removesuffix(".hdr.json") + ".bsq"
    bsq = np.transpose(cube.data, (2, 0, 1)).astype("<f4")
    (header_path.parent / data_file).write_bytes(bsq.tobytes())
    header = {
        "height": cube.height,
        "width": cube.width,
        "bands": cube.bands,
        "wavelengths_um": [float(v) for v in cube.wavelengths],
        "data_file": data_file,
        "dtype": "f32le",
        "layout": "bsq",
    }
    header_path.write_text(json.dumps(header, indent=2))
    return header_path


def load_cube(header_path) -> HyperCube:
    header_path = Path(header_path)
    if not header_path.is_file():
        raise DataError(f"header not found: {header_path}")
    try:
        header = json.loads(header_path.read_text())
        h, w, b = int(header["height"]), int(header["width"]), int(header["bands"])
        wavelengths = header["wavelengths_um"]
        data_file = header["data_file"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed cube header {header_path}: {exc}") from exc
    if header.get("dtype", "f32le") != "f32le" or header.get("layout", "bsq") != "bsq":
        raise DataError("only dtype f32le with bsq layout is supported")
    if len(wavelengths) != b:
        raise DataError(f"header declares {b} bands but lists {len(wavelengths)} wavelengths")
    raw_path = header_path.parent / data_file
    if not raw_path.is_file():
        raise DataError(f"data file not found: {raw_path}")
    expected = h * w * b * 4
    actual = raw_path.stat().st_size
    if actual != expected:
        raise DataError(f"{raw_path} holds {actual} bytes, expected {expected} for {h}x{w}x{b} f32")
    planes = np.fromfile(raw_path, dtype="<f4").reshape(b, h, w)
    name = header_path.name.removesuffix(".hdr.json")
    return HyperCube(np.transpose(planes, (1, 2, 0)), wavelengths, name=name)


def write_labels(gt: GroundTruth, path) -> Path:
    path = Path(path)
    if gt.labels.max() > np.iinfo(np.uint16).max:
        raise DataError("labels exceed uint16 range")
    path.write_bytes(gt.labels.astype("<u2").tobytes())
    return path


def load_ground_truth(path, height: int, width: int, class_count: int | None = None) -> GroundTruth:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"labels file not found: {path}")
    expected = height * width * 2
    if path.stat().st_size != expected:
        raise DataError(f"{path} holds {path.stat().st_size} bytes, expected {expected}")
    labels = np.fromfile(path, dtype="<u2").reshape(height, width).astype(np.int64)
    if class_count is None:
        class_count = int(labels.max())
    return GroundTruth(labels, class_count)


# -- operations ----------------------------------------------------------------

def extract_patches(cube: HyperCube, gt: GroundTruth, dims: tuple[int, int]) -> PatchSet:
    """One patch per labeled pixel whose full window lies inside the cube.

    Centers closer than ``h'//2`` (or ``w'//2``) to the border are skipped,
    so no padding values enter a patch. Order is row-major over centers.
    """
    hp, wp = int(dims[0]), int(dims[1])
    if hp < 1 or wp < 1 or hp % 2 == 0 or wp % 2 == 0:
        raise ConfigError(f"patch dims must be positive and odd, got {dims}")
    if hp > cube.height or wp > cube.width:
        raise ConfigError(f"patch dims {dims} exceed cube {cube.height}x{cube.width}")
    if gt.shape != (cube.height, cube.width):
        raise DataError(f"ground truth {gt.shape} does not match cube {cube.height}x{cube.width}")
    rh, rw = hp // 2, wp // 2
    inner = np.zeros(gt.shape, dtype=bool)
    inner[rh:cube.height - rh, rw:cube.width - rw] = True
    rows, cols = np.nonzero((gt.labels > 0) & inner)
    windows = sliding_window_view(cube.data, (hp, wp), axis=(0, 1))
    values = np.transpose(windows[rows - rh, cols - rw], (0, 2, 3, 1))
    config_hash = hashlib.sha256(f"{hp}x{wp}".encode()).hexdigest()[:8]
    return PatchSet(
        values=np.ascontiguousarray(values),
        labels=gt.labels[rows, cols],
        centers=np.stack([rows, cols], axis=1),
        ids=np.arange(rows.size),
        wavelengths=cube.wavelengths,
        class_count=gt.class_count,
        provenance=f"{cube.name}:{cube.digest()}:{config_hash}",
    )


def _apportion(counts: np.ndarray, fraction: float, min_one: bool) -> np.ndarray:
    """Largest-remainder apportionment of ``round(fraction * total)`` across classes."""
    target = int(round(fraction * counts.sum()))
    quota = counts * fraction
    alloc = np.floor(quota).astype(np.int64)
    if min_one:
        alloc = np.maximum(alloc, np.minimum(counts, 1))
    remaining = target - alloc.sum()
    if remaining > 0:
        remainder = quota - np.floor(quota)
        # ties go to the lower class id; argsort on -remainder is stable
        for k in np.argsort(-remainder, kind="stable"):
            if remaining == 0:
                break
            if alloc[k] < counts[k]:
                alloc[k] += 1
                remaining -= 1
    return alloc


def split_indices(ps: PatchSet, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index arrays (train, test_acc, test_explain), each sorted ascending."""
    rng = np.random.default_rng(spec.seed)
    n = len(ps)
    if n == 0:
        raise DataError("cannot split an empty patch set")
    if spec.stratified:
        groups = [np.flatnonzero(ps.labels == k) for k in range(1, ps.class_count + 1)]
        empty = [k + 1 for k, g in enumerate(groups) if g.size == 0]
        if empty:
            raise DataError(f"classes {empty} have no patches; stratified split impossible")
    else:
        groups = [np.arange(n)]
    counts = np.array([g.size for g in groups])
    n_train = _apportion(counts, spec.train_fraction, min_one=spec.stratified)
    train, acc, expl = [], [], []
    extra_to_acc = True
    for g, k_train in zip(groups, n_train):
        perm = g[rng.permutation(g.size)]
        train.append(perm[:k_train])
        rest = perm[k_train:]
        if spec.test_halving:
            half = rest.size // 2
            if rest.size % 2:
                half += 1 if extra_to_acc else 0
                extra_to_acc = not extra_to_acc
            acc.append(rest[:half])
            expl.append(rest[half:])
        else:
            acc.append(rest)
    def cat(parts):
        return np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
    return cat(train), cat(acc), cat(expl)


def split_patches(ps: PatchSet, spec: SplitSpec) -> tuple[PatchSet, PatchSet, PatchSet]:
    """Disjoint train / accuracy-test / explanation-test split.

    Without ``test_halving`` the explanation split is empty.
    """
    tr, acc, expl = split_indices(ps, spec)
    return ps.subset(tr), ps.subset(acc), ps.subset(expl)


def compute_band_stats(train: PatchSet) -> BandStats:
    if len(train) == 0:
        raise DataError("band statistics need at least one training patch")
    flat = train.values.reshape(-1, train.band_count).astype(np.float64)
    return BandStats(flat.mean(axis=0), flat.std(axis=0))


def _class_codes(rng, classes: int, length: int, tries: int = 256) -> np.ndarray:
    """Random +-1 codes, one row per class, maximising the minimum pairwise Hamming distance."""
    best, best_d = None, -1
    for _ in range(tries):
        codes = rng.choice([-1.0, 1.0], size=(classes, length))
        d = (codes[:, None, :] != codes[None, :, :]).sum(axis=2)
        d_min = d[~np.eye(classes, dtype=bool)].min()
        if d_min > best_d:
            best, best_d = codes, d_min
    return best


def generate_synthetic_cube(spec: SyntheticSpec) -> tuple[HyperCube, GroundTruth]:
    """Scene whose classes differ only on ``spec.informative_bands``.

    Every informative band hosts a narrow Gaussian bump whose signed height
    is class-specific (a +-1 code per class, scaled by ``spec.amplitude``);
    bumps are evaluated on informative bands only, so non-informative bands
    carry nothing but a smooth shared baseline and i.i.d. Gaussian noise.
    Class regions are Voronoi cells of random seeds, so they are spatially
    contiguous.
    """
    h, w, b, c = spec.height, spec.width, spec.bands, spec.classes
    informative = np.array(sorted(spec.informative_bands))
    m = informative.size
    if m < 63 and c > 2 ** m:
        raise ConfigError(f"{m} informative bands cannot give {c} distinct signatures")
    rng = np.random.default_rng(spec.seed)
    codes = _class_codes(rng, c, m)

    spill = np.exp(-0.5 * ((informative[:, None] - informative[None, :]) / 0.5) ** 2)
    signatures = np.zeros((c, b))
    signatures[:, informative] = spec.amplitude * codes @ spill

    band_pos = np.linspace(0.0, 1.0, b)
    baseline = 0.3 + 0.1 * np.sin(2 * np.pi * band_pos)

    seeds = np.column_stack([rng.uniform(0, h, c), rng.uniform(0, w, c)])
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    d2 = (rr[..., None] - seeds[:, 0]) ** 2 + (cc[..., None] - seeds[:, 1]) ** 2
    region = np.argmin(d2, axis=2)

    noise_sd = 0.0 if math.isinf(spec.snr) else spec.amplitude / spec.snr
    noise = rng.standard_normal((h, w, b))
    data = baseline[None, None, :] + signatures[region] + noise_sd * noise

    labeled = rng.random((h, w)) < spec.labeled_fraction
    labels = np.where(labeled, region + 1, 0)
    lo, hi = spec.wavelength_range
    wavelengths = np.linspace(lo, hi, b)
    cube = HyperCube(data.astype(np.float32), wavelengths, name=f"synthetic-{spec.seed}")
    return cube, GroundTruth(labels, c)


def _subset_indices(subset) -> np.ndarray:
    indices = getattr(subset, "indices", subset)
    return np.asarray(list(indices), dtype=np.int64)


def restrict_bands(ps: PatchSet, subset: Sequence[int]) -> PatchSet:
    """Keep only the listed bands. Indices must be strictly increasing and in range.

    ``subset`` may be a sequence of ints or any object with an ``indices`` attribute.
    """
    idx = _subset_indices(subset)
    if idx.size == 0:
        raise ConfigError("band subset is empty")
    if idx.min() < 0 or idx.max() >= ps.band_count:
        raise ConfigError(f"band indices must lie in 0..{ps.band_count - 1}")
    if idx.size > 1 and not np.all(np.diff(idx) > 0):
        raise ConfigError("band indices must be strictly increasing (sorted, no duplicates)")
    if idx.size == ps.band_count:
        return ps
    tag = hashlib.sha256(idx.tobytes()).hexdigest()[:8]
    return PatchSet(ps.values[..., idx], ps.labels, ps.centers, ps.ids, ps.wavelengths[idx],
                    ps.class_count, f"{ps.provenance}|bands:{tag}")
