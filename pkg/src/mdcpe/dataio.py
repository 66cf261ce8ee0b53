"""File formats, synthetic scenes, configuration and checkpoints.

Cube files: magic "HSIC", version u16, H/W/B u32 (all little-endian),
f32 payload band-fastest.  Label files: magic "HSIL", H/W u32, u16 labels.
Checkpoints: magic "MDCK", JSON manifest + raw f64 payload.
Configs: plain "key = value" text with # comments.
"""

import json
import struct
from dataclasses import dataclass, fields

import numpy as np

from .cnn import CnnModel, init_cnn
from .errors import FormatError, InvalidConfig
from .numerics import ParamStore, SeededRng
from .rnn import RnnModel, init_rnn

CUBE_MAGIC = b"HSIC"
LABEL_MAGIC = b"HSIL"
CHECKPOINT_MAGIC = b"MDCK"
FORMAT_VERSION = 1


def save_cube(cube, path):
    cube = np.asarray(cube, dtype=np.float64)
    h, w, b = cube.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<4sHIII", CUBE_MAGIC, FORMAT_VERSION, h, w, b))
        f.write(cube.astype("<f4").tobytes())


def load_cube(path):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 18:
        raise FormatError(f"cube header truncated: {len(data)} < 18 bytes")
    magic, version, h, w, b = struct.unpack("<4sHIII", data[:18])
    if magic != CUBE_MAGIC:
        raise FormatError(f"bad cube magic {magic!r} at offset 0")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported cube version {version} at offset 4")
    expected = 4 * h * w * b
    actual = len(data) - 18
    if actual != expected:
        raise FormatError(
            f"cube payload at offset 18: expected {expected} bytes, got {actual}")
    payload = np.frombuffer(data, dtype="<f4", offset=18)
    return payload.astype(np.float64).reshape(h, w, b)


def save_labels(labels, path):
    labels = np.asarray(labels)
    h, w = labels.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<4sHII", LABEL_MAGIC, FORMAT_VERSION, h, w))
        f.write(labels.astype("<u2").tobytes())


def load_labels(path):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 14:
        raise FormatError(f"label header truncated: {len(data)} < 14 bytes")
    magic, version, h, w = struct.unpack("<4sHII", data[:14])
    if magic != LABEL_MAGIC:
        raise FormatError(f"bad label magic {magic!r} at offset 0")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported label version {version} at offset 4")
    expected = 2 * h * w
    actual = len(data) - 14
    if actual != expected:
        raise FormatError(
            f"label payload at offset 14: expected {expected} bytes, got {actual}")
    return np.frombuffer(data, dtype="<u2", offset=14).astype(np.int64).reshape(h, w)


@dataclass
class SceneSpec:
    height: int
    width: int
    bands: int
    classes: int
    geometry: str = "blocks"     # blocks | stripes
    spectra_scale: float = 1.0
    noise_sigma: float = 0.05
    ratios: tuple = None         # per-class pixel-count weights (stripes only)


def _class_counts(total, ratios):
    weights = np.asarray(ratios, dtype=np.float64)
    exact = weights / weights.sum() * total
    counts = np.floor(exact).astype(int)
    remainder = exact - counts
    for i in np.argsort(remainder)[::-1][: total - counts.sum()]:
        counts[i] += 1
    return counts


def generate_synthetic(spec, seed):
    """Synthetic scene: contiguous class regions, one smooth random-walk mean
    spectrum per class, i.i.d. Gaussian noise.  Every pixel is ground truth."""
    h, w, b, k = spec.height, spec.width, spec.bands, spec.classes
    rng = SeededRng(seed)
    if spec.geometry == "stripes":
        if k > h:
            raise InvalidConfig(f"stripes geometry needs classes <= height "
                                f"({k} > {h})")
        ratios = spec.ratios if spec.ratios is not None else (1,) * k
        if len(ratios) != k:
            raise InvalidConfig("ratios length must equal the class count")
        counts = _class_counts(h * w, ratios)
        flat = np.empty(h * w, dtype=np.int64)
        start = 0
        for c in range(k):
            flat[start:start + counts[c]] = c + 1
            start += counts[c]
        labels = flat.reshape(h, w)
    elif spec.geometry == "blocks":
        nr = max(1, int(np.floor(np.sqrt(k))))
        nc = -(-k // nr)
        if nr > h or nc > w:
            raise InvalidConfig(f"blocks geometry cannot fit {k} classes in "
                                f"a {h}x{w} image")
        row_edges = np.linspace(0, h, nr + 1).astype(int)
        col_edges = np.linspace(0, w, nc + 1).astype(int)
        labels = np.zeros((h, w), dtype=np.int64)
        cell = 0
        for i in range(nr):
            for j in range(nc):
                labels[row_edges[i]:row_edges[i + 1],
                       col_edges[j]:col_edges[j + 1]] = (cell % k) + 1
                cell += 1
    else:
        raise InvalidConfig(f"unknown geometry {spec.geometry!r}")

    means = np.cumsum(rng.normal(0.0, spec.spectra_scale, (k, b)), axis=1)
    cube = means[labels - 1].astype(np.float64)
    if spec.noise_sigma > 0:
        cube = cube + rng.normal(0.0, spec.noise_sigma, cube.shape)
    return cube, labels


# --- checkpoints ------------------------------------------------------------

def _model_tensors(prefix, params):
    return [(f"{prefix}.{name}", params.value(name)) for name in params.names()]


def save_checkpoint(rnn_model, cnn_model, state_scalars, path):
    """All named tensors plus both learner configs and co-train scalars."""
    tensors = _model_tensors("rnn", rnn_model.params) + \
        _model_tensors("cnn", cnn_model.params)
    manifest = []
    offset = 0
    for name, arr in tensors:
        manifest.append({"name": name, "shape": list(arr.shape),
                         "offset": offset, "count": int(arr.size)})
        offset += arr.size
    header = {
        "rnn_config": {"group": rnn_model.group, "hidden": rnn_model.hidden,
                       "fc1_size": rnn_model.fc1_size, "k": rnn_model.k},
        "cnn_config": {"patch_size": cnn_model.patch_size,
                       "in_depth": cnn_model.in_depth, "k": cnn_model.k,
                       "c1_maps": cnn_model.c1_maps,
                       "c2_maps": cnn_model.c2_maps,
                       "fc1_size": cnn_model.fc1_size},
        "state": dict(state_scalars),
        "tensors": manifest,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<4sHI", CHECKPOINT_MAGIC, FORMAT_VERSION,
                            len(blob)))
        f.write(blob)
        for _, arr in tensors:
            f.write(arr.astype("<f8").tobytes())


def load_checkpoint(path):
    """Returns (rnn_model, cnn_model, state dict) with bit-identical tensors."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 10:
        raise FormatError(f"checkpoint header truncated: {len(data)} < 10 bytes")
    magic, version, hlen = struct.unpack("<4sHI", data[:10])
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r} at offset 0")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[10:10 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"checkpoint manifest unreadable: {exc}") from exc
    payload = np.frombuffer(data, dtype="<f8", offset=10 + hlen)

    values = {}
    for entry in header["tensors"]:
        start, count = entry["offset"], entry["count"]
        if start + count > payload.size:
            raise FormatError(
                f"tensor {entry['name']!r} truncated: needs {count} values at "
                f"offset {start}, payload holds {payload.size}")
        arr = payload[start:start + count].reshape(entry["shape"]).astype(np.float64)
        if arr.size != count:
            raise FormatError(f"tensor {entry['name']!r} has inconsistent shape")
        values[entry["name"]] = arr

    rc = header["rnn_config"]
    rnn_params = ParamStore()
    for name in ("wz", "uz", "wr", "ur", "w", "u", "fc1_w", "fc1_b",
                 "fc2_w", "fc2_b"):
        key = f"rnn.{name}"
        if key not in values:
            raise FormatError(f"checkpoint missing tensor {key!r}")
        rnn_params.add(name, values[key])
    rnn_model = RnnModel(group=rc["group"], hidden=rc["hidden"],
                         fc1_size=rc["fc1_size"], k=rc["k"], params=rnn_params)

    cc = header["cnn_config"]
    cnn_params = ParamStore()
    for name in ("c1_k", "c1_b", "c2_k", "c2_b", "fc1_w", "fc1_b",
                 "fc2_w", "fc2_b"):
        key = f"cnn.{name}"
        if key not in values:
            raise FormatError(f"checkpoint missing tensor {key!r}")
        cnn_params.add(name, values[key])
    cnn_model = CnnModel(patch_size=cc["patch_size"], in_depth=cc["in_depth"],
                         k=cc["k"], c1_maps=cc["c1_maps"],
                         c2_maps=cc["c2_maps"], fc1_size=cc["fc1_size"],
                         params=cnn_params)
    return rnn_model, cnn_model, header["state"]


# --- experiment configuration -----------------------------------------------

CONFIG_DEFAULTS = {
    "cube_path": ("", str),
    "labels_path": ("", str),
    "seed": (12345, int),
    "labeled_fraction": (0.02, float),
    "validation_fraction": (0.05, float),
    "pca_variance_target": (0.99, float),
    "pca_components": (None, int),
    "patch_size": (15, int),
    "rnn.hidden": (128, int),
    "rnn.group": (4, int),
    "rnn.lr": (0.001, float),
    "rnn.epochs": (100, int),
    "cnn.lr": (0.0003, float),
    "cnn.epochs": (100, int),
    "cnn.dropout": (0.3, float),
    "cotrain.n_update": (5, int),
    "cotrain.max_iterations": (3, int),
    "cotrain.mode": ("mdcpe", str),
    "batch_size": (32, int),
    "output_dir": ("out", str),
}


@dataclass
class ExperimentConfig:
    cube_path: str
    labels_path: str
    seed: int
    labeled_fraction: float
    validation_fraction: float
    pca_variance_target: float
    pca_components: object
    patch_size: int
    rnn_hidden: int
    rnn_group: int
    rnn_lr: float
    rnn_epochs: int
    cnn_lr: float
    cnn_epochs: int
    cnn_dropout: float
    n_update: int
    max_iterations: int
    mode: str
    batch_size: int
    output_dir: str


_KEY_TO_FIELD = {
    "cube_path": "cube_path", "labels_path": "labels_path", "seed": "seed",
    "labeled_fraction": "labeled_fraction",
    "validation_fraction": "validation_fraction",
    "pca_variance_target": "pca_variance_target",
    "pca_components": "pca_components", "patch_size": "patch_size",
    "rnn.hidden": "rnn_hidden", "rnn.group": "rnn_group",
    "rnn.lr": "rnn_lr", "rnn.epochs": "rnn_epochs",
    "cnn.lr": "cnn_lr", "cnn.epochs": "cnn_epochs",
    "cnn.dropout": "cnn_dropout", "cotrain.n_update": "n_update",
    "cotrain.max_iterations": "max_iterations", "cotrain.mode": "mode",
    "batch_size": "batch_size", "output_dir": "output_dir",
}
_FIELD_TO_KEY = {v: k for k, v in _KEY_TO_FIELD.items()}


def coerce_value(key, raw):
    if key not in CONFIG_DEFAULTS:
        raise InvalidConfig(f"unknown configuration key {key!r}")
    default, typ = CONFIG_DEFAULTS[key]
    if raw is None or raw == "":
        return default
    if isinstance(raw, str) and raw.lower() == "none":
        return None
    try:
        return typ(raw)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"config key {key!r}: cannot parse {raw!r}") from exc


def parse_config(text):
    """key = value lines with # comments; unknown keys rejected."""
    values = {key: default for key, (default, _) in CONFIG_DEFAULTS.items()}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise InvalidConfig(f"config line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        values[key] = coerce_value(key, raw)
    return config_from_values(values)


def config_from_values(values):
    kwargs = {field: values[key] for key, field in _KEY_TO_FIELD.items()}
    cfg = ExperimentConfig(**kwargs)
    if cfg.mode not in ("mdcpe", "dcpe", "supervised"):
        raise InvalidConfig(f"unknown cotrain.mode {cfg.mode!r}")
    return cfg


def load_config(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def dump_config(cfg):
    lines = []
    for f in fields(ExperimentConfig):
        key = _FIELD_TO_KEY[f.name]
        value = getattr(cfg, f.name)
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"


def build_models(cfg, k, in_depth, seed):
    """Both learners' networks, fully determined by the seed."""
    rng = SeededRng(seed)
    rnn_model = init_rnn(cfg.rnn_group, cfg.rnn_hidden, cfg.rnn_hidden, k, rng)
    cnn_model = init_cnn(cfg.patch_size, in_depth, k, rng)
    return rnn_model, cnn_model
