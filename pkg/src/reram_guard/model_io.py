"""MNIST IDX parsing and on-disk model format.

A saved model is a directory holding ``manifest.json`` and one raw tensor
file per array (little-endian float32, row-major, no header). The manifest
records each tensor's file, shape and SHA-256 so a loader can refuse drifted
or truncated files.
"""
from __future__ import annotations

import gzip
import hashlib
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn.layers import Conv2d, Flatten, Linear, MaxPool2d, ModelGraph, ReLU

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

MANIFEST = "manifest.json"
FORMAT = "reram-guard-model"
FORMAT_VERSION = 1

DEFAULT_MNIST_DIR = Path(__file__).resolve().parents[2] / "data" / "mnist"


class FormatError(ValueError):
    """A data or model file does not match its declared format."""


@dataclass
class MnistSet:
    images: np.ndarray  # (n, 28, 28) float32 in [0, 1]
    labels: np.ndarray  # (n,) uint8

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise FormatError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def subset(self, n: int) -> "MnistSet":
        return MnistSet(self.images[:n], self.labels[:n])


def _read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path, magic: int) -> np.ndarray:
    """Unsigned-byte IDX array with the expected magic number.

    Plain or gzip-compressed files are accepted.
    """
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for an IDX header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise FormatError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims, dtype=np.int64))
    if len(raw) - header != expected:
        raise FormatError(f"{path}: header declares {expected} bytes of data, file has {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_mnist(images_path, labels_path) -> MnistSet:
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels")
    if labels.size and labels.max() > 9:
        raise FormatError("label outside 0..9")
    return MnistSet(images.astype(np.float32) / np.float32(255.0), labels.copy())


def mnist_paths(directory=None, split: str = "test") -> tuple[Path, Path]:
    """Locate ``{t10k,train}-{images-idx3,labels-idx1}-ubyte[.gz]`` in ``directory``.

    Defaults to ``$RERAM_GUARD_MNIST`` and then the repository's ``data/mnist``.
    """
    directory = Path(directory or os.environ.get("RERAM_GUARD_MNIST") or DEFAULT_MNIST_DIR)
    prefix = {"test": "t10k", "train": "train"}[split]
    found = []
    for stem in (f"{prefix}-images-idx3-ubyte", f"{prefix}-labels-idx1-ubyte"):
        for name in (stem, stem + ".gz"):
            if (directory / name).exists():
                found.append(directory / name)
                break
        else:
            raise FileNotFoundError(f"no {stem}[.gz] in {directory}")
    return found[0], found[1]


def load_mnist_split(directory=None, split: str = "test") -> MnistSet:
    return load_mnist(*mnist_paths(directory, split))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_tensor(directory: Path, name: str, array) -> dict:
    arr = np.ascontiguousarray(array, dtype="<f4")
    path = directory / f"{name}.f32"
    path.write_bytes(arr.tobytes())
    return {"file": path.name, "shape": list(arr.shape), "sha256": _sha256(path)}


def _read_tensor(directory: Path, ref: dict) -> np.ndarray:
    path = directory / ref["file"]
    if not path.exists():
        raise FormatError(f"missing tensor file {path}")
    shape = tuple(int(d) for d in ref["shape"])
    raw = path.read_bytes()
    expected = 4 * int(np.prod(shape, dtype=np.int64))
    if len(raw) != expected:
        raise FormatError(f"{path}: length {len(raw)} bytes, shape {shape} needs {expected}")
    if hashlib.sha256(raw).hexdigest() != ref["sha256"]:
        raise FormatError(f"{path}: checksum mismatch")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def save_model(model: ModelGraph, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    layers = []
    for i, layer in enumerate(model.layers):
        if isinstance(layer, Linear):
            layers.append({
                "type": "linear",
                "in": layer.in_features,
                "out": layer.out_features,
                "weights": _write_tensor(directory, f"layer{i}.weights", layer.weights),
                "bias": _write_tensor(directory, f"layer{i}.bias", layer.bias),
            })
        elif isinstance(layer, Conv2d):
            layers.append({
                "type": "conv2d",
                "in_ch": layer.in_ch,
                "out_ch": layer.out_ch,
                "kh": layer.kh,
                "kw": layer.kw,
                "stride": layer.stride,
                "padding": layer.padding,
                "kernels": _write_tensor(directory, f"layer{i}.kernels", layer.kernels),
                "bias": _write_tensor(directory, f"layer{i}.bias", layer.bias),
            })
        elif isinstance(layer, MaxPool2d):
            layers.append({"type": "maxpool2d", "size": layer.size, "stride": layer.stride})
        elif isinstance(layer, ReLU):
            layers.append({"type": "relu"})
        elif isinstance(layer, Flatten):
            layers.append({"type": "flatten"})
        else:
            raise TypeError(f"cannot serialise layer {type(layer).__name__}")
    manifest = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "name": model.name,
        "input_shape": list(model.input_shape),
        "layers": layers,
    }
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return directory


def load_model(directory) -> ModelGraph:
    directory = Path(directory)
    path = directory / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {directory}")
    manifest = json.loads(path.read_text())
    if manifest.get("format") != FORMAT or manifest.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: not a {FORMAT} v{FORMAT_VERSION} manifest")
    layers = []
    for desc in manifest["layers"]:
        kind = desc["type"]
        if kind == "linear":
            w = _read_tensor(directory, desc["weights"])
            if w.shape != (desc["in"], desc["out"]):
                raise FormatError(f"linear weights {w.shape} disagree with in={desc['in']}, out={desc['out']}")
            layers.append(Linear(w, _read_tensor(directory, desc["bias"])))
        elif kind == "conv2d":
            k = _read_tensor(directory, desc["kernels"])
            if k.shape != (desc["out_ch"], desc["in_ch"], desc["kh"], desc["kw"]):
                raise FormatError(f"conv kernels {k.shape} disagree with declared dims")
            layers.append(Conv2d(k, _read_tensor(directory, desc["bias"]), desc["stride"], desc["padding"]))
        elif kind == "maxpool2d":
            layers.append(MaxPool2d(desc["size"], desc["stride"]))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "flatten":
            layers.append(Flatten())
        else:
            raise FormatError(f"unknown layer type {kind!r}")
    try:
        return ModelGraph(manifest["name"], tuple(manifest["input_shape"]), layers)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e
