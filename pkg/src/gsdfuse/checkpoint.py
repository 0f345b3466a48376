"""Named-tensor checkpoint archives with a shape manifest."""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import FingerprintError

_EPOCH = (1980, 1, 1, 0, 0, 0)  # fixed zip timestamps keep archives byte-identical


def fingerprint(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


@dataclass
class Checkpoint:
    state: dict[str, np.ndarray]
    epoch: int
    val_f1: float
    fingerprint: str
    dataset_fingerprint: str
    config: dict = field(default_factory=dict)

    def manifest(self) -> dict:
        return {name: {"shape": list(a.shape), "dtype": str(a.dtype)}
                for name, a in self.state.items()}

    def check_dataset(self, dataset_fingerprint: str):
        if dataset_fingerprint != self.dataset_fingerprint:
            raise FingerprintError(
                f"checkpoint was trained on dataset {self.dataset_fingerprint}, "
                f"got dataset {dataset_fingerprint}")

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {
            "epoch": self.epoch,
            "val_f1": self.val_f1,
            "fingerprint": self.fingerprint,
            "dataset_fingerprint": self.dataset_fingerprint,
            "config": self.config,
        }
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
            _write(zf, "meta.json", json.dumps(meta, indent=2, sort_keys=True).encode())
            _write(zf, "manifest.json", json.dumps(self.manifest(), indent=2).encode())
            for name, arr in self.state.items():
                buf = io.BytesIO()
                np.save(buf, np.ascontiguousarray(arr), allow_pickle=False)
                _write(zf, f"tensors/{name}.npy", buf.getvalue())
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            manifest = json.loads(zf.read("manifest.json"))
            state = {}
            for name, info in manifest.items():
                arr = np.load(io.BytesIO(zf.read(f"tensors/{name}.npy")), allow_pickle=False)
                if list(arr.shape) != info["shape"]:
                    raise ValueError(f"tensor {name} has shape {arr.shape}, manifest says {info['shape']}")
                state[name] = arr
        return cls(state=state, **meta)


def _write(zf: zipfile.ZipFile, name: str, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)
