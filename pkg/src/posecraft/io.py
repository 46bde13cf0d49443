"""Binary tensor container, frame rendering, PSNR, manifests, and parameter files."""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention import AttentionWeights
from .diffusion import ToyDenoiser
from .errors import FormatError

MAGIC = b"PCT1"


def tensor_bytes(array: np.ndarray) -> bytes:
    """Serialize an array: magic, u32 rank, u32 dims, little-endian f32 payload."""
    array = np.asarray(array)
    header = MAGIC + struct.pack("<I", array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    return header + np.ascontiguousarray(array, dtype="<f4").tobytes()


def parse_tensor(data: bytes, source: str = "<memory>") -> np.ndarray:
    """Parse container bytes back into a float32 array."""
    if len(data) < 8 or data[:4] != MAGIC:
        raise FormatError(f"{source}: not a tensor container (bad magic)")
    (rank,) = struct.unpack_from("<I", data, 4)
    offset = 8 + 4 * rank
    if len(data) < offset:
        raise FormatError(f"{source}: truncated dimension list")
    dims = struct.unpack_from(f"<{rank}I", data, 8)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if len(data) != offset + 4 * count:
        raise FormatError(
            f"{source}: payload length {len(data) - offset} does not match dims {dims}"
        )
    return np.frombuffer(data, dtype="<f4", offset=offset).reshape(dims).copy()


def write_tensor(path: str | Path, array: np.ndarray):
    Path(path).write_bytes(tensor_bytes(array))


def read_tensor(path: str | Path) -> np.ndarray:
    path = Path(path)
    return parse_tensor(path.read_bytes(), str(path))


def psnr_from_mse(mse: float) -> float:
    """Peak signal-to-noise ratio against a unit peak: 10 log10(1 / MSE)."""
    if mse < 0.0:
        raise ValueError("mean squared error cannot be negative")
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR between two equal-shape arrays of normalized values."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shapes differ: {a.shape} vs {b.shape}")
    diff = a - b
    return psnr_from_mse(float(np.mean(diff * diff)))


def render_frame(grid: np.ndarray, path: str | Path):
    """Write a 1-channel grid as binary PGM (P5) or a 3-channel grid as PPM (P6).

    Values are clamped to [0, 1] and quantized to 8 bits.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3 or grid.shape[0] not in (1, 3):
        raise ValueError("renderable grids have 1 or 3 channels")
    _, h, w = grid.shape
    bytes_img = np.rint(np.clip(grid, 0.0, 1.0) * 255.0).astype(np.uint8)
    path = Path(path)
    if grid.shape[0] == 1:
        payload = b"P5\n%d %d\n255\n" % (w, h) + bytes_img[0].tobytes()
    else:
        payload = b"P6\n%d %d\n255\n" % (w, h) + bytes_img.transpose(1, 2, 0).tobytes()
    path.write_bytes(payload)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())


@dataclass
class RunManifest:
    """Everything needed to reproduce a run byte-for-byte."""

    version: str
    seed: int
    config: dict
    inputs: dict[str, dict] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)

    def add_input(self, name: str, path: str | Path):
        self.inputs[name] = {"path": str(path), "sha256": sha256_file(path)}

    def add_output(self, name: str, path: str | Path):
        self.outputs[name] = sha256_file(path)

    def to_json(self) -> str:
        doc = {
            "version": self.version,
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str, source: str = "<memory>") -> "RunManifest":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{source}: malformed manifest JSON: {exc.msg}") from exc
        for key in ("version", "seed", "config"):
            if key not in doc:
                raise FormatError(f"{source}: manifest missing {key!r}")
        return cls(
            version=doc["version"],
            seed=doc["seed"],
            config=doc["config"],
            inputs=doc.get("inputs", {}),
            outputs=doc.get("outputs", {}),
        )


def save_denoiser(denoiser: ToyDenoiser, directory: str | Path):
    """Write denoiser parameters as tensor containers plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = denoiser._all_arrays()
    manifest = {
        "model": {
            "latent_channels": denoiser.latent_channels,
            "hidden": denoiser.hidden,
            "prompt_dim": denoiser.prompt_dim,
            "key_index": denoiser.key_index,
        },
        "parameters": {
            name: {"file": name.replace(".", "_") + ".pct", "shape": list(arr.shape)}
            for name, arr in arrays.items()
        },
    }
    for name, arr in arrays.items():
        write_tensor(directory / manifest["parameters"][name]["file"], arr)
    (directory / "params.json").write_text(json.dumps(manifest, sort_keys=True, indent=2))


def load_denoiser(directory: str | Path) -> ToyDenoiser:
    """Rebuild a toy denoiser from save_denoiser output (float32 precision)."""
    directory = Path(directory)
    manifest_path = directory / "params.json"
    if not manifest_path.exists():
        raise FormatError(f"{manifest_path}: parameter manifest not found")
    doc = json.loads(manifest_path.read_text())
    model = doc["model"]

    def load(name):
        entry = doc["parameters"][name]
        arr = read_tensor(directory / entry["file"]).astype(np.float64)
        if list(arr.shape) != entry["shape"]:
            raise FormatError(f"{name}: stored shape {arr.shape} != manifest {entry['shape']}")
        return arr

    return ToyDenoiser(
        latent_channels=model["latent_channels"],
        hidden=model["hidden"],
        prompt_dim=model["prompt_dim"],
        key_index=model["key_index"],
        w_in=load("w_in"),
        w_out=load("w_out"),
        key_attn=AttentionWeights(
            load("key_attn.wq"), load("key_attn.wk"), load("key_attn.wv")
        ),
        temporal_attn=AttentionWeights(
            load("temporal_attn.wq"), load("temporal_attn.wk"), load("temporal_attn.wv")
        ),
        w_prompt=load("w_prompt"),
    )
