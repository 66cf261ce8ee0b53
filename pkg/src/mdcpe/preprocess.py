"""Normalization, PCA, patch/sequence construction and data splitting."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientClass, InvalidConfig, ShapeError
from .numerics import SeededRng


def minmax_normalize(cube):
    """Per-band min-max scaling over all pixels; constant bands map to 0."""
    cube = np.asarray(cube, dtype=np.float64)
    lo = cube.min(axis=(0, 1))
    hi = cube.max(axis=(0, 1))
    span = hi - lo
    out = np.zeros_like(cube)
    ok = span > 0
    out[:, :, ok] = (cube[:, :, ok] - lo[ok]) / span[ok]
    return out


@dataclass
class PcaModel:
    mean: np.ndarray                # (B,)
    components: np.ndarray          # (p, B), rows orthonormal
    explained_variance: np.ndarray  # (p,), descending


def pca_fit(cube, variance_target=0.99, n_components=None):
    """Eigendecomposition of the pixel covariance; keeps the smallest number
    of leading components whose cumulative variance ratio reaches the target,
    unless an explicit component count overrides it."""
    cube = np.asarray(cube, dtype=np.float64)
    if cube.ndim != 3 or cube.shape[2] == 0:
        raise ShapeError(f"pca_fit expects an HxWxB cube, got shape {cube.shape}")
    if n_components is None and not (0 < variance_target <= 1):
        raise InvalidConfig(f"variance target {variance_target} outside (0, 1]")
    samples = cube.reshape(-1, cube.shape[2])
    if samples.shape[0] < 2:
        raise ShapeError("pca_fit needs at least 2 pixels")
    mean = samples.mean(axis=0)
    centered = samples - mean
    cov = centered.T @ centered / (samples.shape[0] - 1)
    eigval, eigvec = np.linalg.eigh(cov)
    order = np.argsort(eigval)[::-1]
    eigval = np.clip(eigval[order], 0.0, None)
    eigvec = eigvec[:, order]
    if n_components is not None:
        if not (1 <= n_components <= cube.shape[2]):
            raise InvalidConfig(f"component count {n_components} outside [1, B]")
        p = n_components
    else:
        total = eigval.sum()
        if total == 0:
            p = 1
        else:
            ratio = np.cumsum(eigval) / total
            p = int(np.searchsorted(ratio, variance_target - 1e-12) + 1)
            p = min(p, cube.shape[2])
    return PcaModel(mean=mean,
                    components=eigvec[:, :p].T.copy(),
                    explained_variance=eigval[:p].copy())


def pca_transform(cube, model):
    cube = np.asarray(cube, dtype=np.float64)
    if cube.shape[2] != model.mean.shape[0]:
        raise ShapeError(
            f"cube has {cube.shape[2]} bands, model expects {model.mean.shape[0]}")
    return (cube - model.mean) @ model.components.T


def _reflect(i, n):
    # mirror about the image edges (no repeated edge sample)
    if n == 1:
        return 0
    while i < 0 or i >= n:
        if i < 0:
            i = -i
        if i >= n:
            i = 2 * n - 2 - i
    return i


def extract_patch(reduced, row, col, size):
    """size x size window centered at (row, col) with mirror-reflected borders."""
    reduced = np.asarray(reduced, dtype=np.float64)
    if size < 1 or size % 2 == 0:
        raise InvalidConfig(f"patch size must be odd and positive, got {size}")
    h, w = reduced.shape[0], reduced.shape[1]
    half = size // 2
    rows = [_reflect(row + dr, h) for dr in range(-half, half + 1)]
    cols = [_reflect(col + dc, w) for dc in range(-half, half + 1)]
    return reduced[np.ix_(rows, cols)]


def spectral_sequence(cube, row, col, group):
    """Pixel spectrum chunked into length-`group` steps, last chunk zero-padded."""
    if group < 1:
        raise InvalidConfig(f"group must be >= 1, got {group}")
    return spectrum_to_sequence(np.asarray(cube, dtype=np.float64)[row, col, :], group)


def spectrum_to_sequence(spectrum, group):
    spectrum = np.asarray(spectrum, dtype=np.float64)
    b = spectrum.shape[0]
    steps = -(-b // group)
    padded = np.zeros(steps * group, dtype=np.float64)
    padded[:b] = spectrum
    return [padded[i * group:(i + 1) * group] for i in range(steps)]


@dataclass
class SplitSpec:
    labeled_fraction: float
    validation_fraction: float
    seed: int

    def __post_init__(self):
        if not (0 < self.labeled_fraction < 1 and 0 < self.validation_fraction < 1):
            raise InvalidConfig("split fractions must lie in (0, 1)")
        if self.labeled_fraction + self.validation_fraction >= 1:
            raise InvalidConfig("labeled + validation fraction must be < 1")


@dataclass
class DataSplit:
    labeled: list = field(default_factory=list)      # (row, col, label)
    validation: list = field(default_factory=list)   # (row, col, label)
    test: list = field(default_factory=list)         # (row, col, label)
    unlabeled: list = field(default_factory=list)    # (row, col)


def _count(fraction, n):
    return max(1, int(fraction * n + 0.5))


def split_data(gt, spec):
    """Per-class seeded shuffle into labeled/validation/test; the unlabeled
    pool is every ground-truth pixel not in the labeled set."""
    gt = np.asarray(gt)
    k = int(gt.max())
    rng = SeededRng(spec.seed)
    split = DataSplit()
    labeled_coords = set()
    for c in range(1, k + 1):
        coords = list(zip(*np.nonzero(gt == c)))
        coords = [(int(r), int(cc)) for r, cc in sorted(coords)]
        n = len(coords)
        if n < 3:
            raise InsufficientClass(f"class {c} has only {n} ground-truth pixels")
        order = rng.permutation(n)
        shuffled = [coords[i] for i in order]
        n_lab = _count(spec.labeled_fraction, n)
        n_val = _count(spec.validation_fraction, n)
        if n_lab + n_val >= n:
            n_lab, n_val = 1, 1
        for r, cc in shuffled[:n_lab]:
            split.labeled.append((r, cc, c))
            labeled_coords.add((r, cc))
        for r, cc in shuffled[n_lab:n_lab + n_val]:
            split.validation.append((r, cc, c))
        for r, cc in shuffled[n_lab + n_val:]:
            split.test.append((r, cc, c))
    for r, cc in zip(*np.nonzero(gt > 0)):
        coord = (int(r), int(cc))
        if coord not in labeled_coords:
            split.unlabeled.append(coord)
    return split
