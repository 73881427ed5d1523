"""Weight persistence.

One file per net: a zip archive holding ``manifest.json`` (architecture
spec, parameter paths/shapes, seed, format version) and one little-endian
float32 binary blob per parameter. Zip entry timestamps are pinned so a
rerun produces byte-identical files; save(load(path)) round-trips bitwise.
"""

from __future__ import annotations

import json
import zipfile
from pathlib import Path

import numpy as np

from ..errors import StateError
from .net import net_from_spec

FORMAT_VERSION = 1
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def _write_entry(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def save_net(net, path) -> None:
    """Persist architecture and parameters (float32) to a single file."""
    path = Path(path)
    params = net.all_params()
    manifest = {
        "format": "sigfuse-weights",
        "format_version": FORMAT_VERSION,
        "net": net.spec(),
        "params": [
            {"path": p, "shape": list(arr.shape), "dtype": "float32"}
            for p, arr in sorted(params.items())
        ],
    }
    extras = _extra_state(net)
    with zipfile.ZipFile(path, "w") as zf:
        _write_entry(zf, "manifest.json",
                     json.dumps(manifest, indent=2, sort_keys=True).encode())
        for i, (pname, arr) in enumerate(sorted(params.items())):
            blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            _write_entry(zf, f"params/{i:04d}.bin", blob)
        for i, (sname, arr) in enumerate(sorted(extras.items())):
            _write_entry(zf, f"state/{i:04d}.bin",
                         np.ascontiguousarray(arr, dtype="<f4").tobytes())
        if extras:
            _write_entry(zf, "state.json", json.dumps(
                [{"path": s, "shape": list(a.shape)} for s, a in sorted(extras.items())],
                indent=2, sort_keys=True).encode())


def _extra_state(net) -> dict[str, np.ndarray]:
    """BatchNorm running statistics, addressed like parameters."""
    from .layers import BatchNorm  # local to avoid cycle at import time
    from .net import FusionNet, Sequential

    out = {}

    def scan(layers, prefix):
        for i, layer in enumerate(layers):
            if isinstance(layer, BatchNorm):
                out[f"{prefix}{i}.{layer.name}.running_mean"] = layer.running_mean
                out[f"{prefix}{i}.{layer.name}.running_var"] = layer.running_var
            for sub in getattr(layer, "sublayers", []) or []:
                if isinstance(sub, BatchNorm):
                    out[f"{prefix}{i}.{layer.name}.{sub.name}.running_mean"] = sub.running_mean
                    out[f"{prefix}{i}.{layer.name}.{sub.name}.running_var"] = sub.running_var

    if isinstance(net, Sequential):
        scan(net.layers, "")
    elif isinstance(net, FusionNet):
        for b in net.branches:
            scan(b.trunk, f"{b.name}.trunk.")
            scan(b.adapter, f"{b.name}.adapter.")
        scan(net.head, "head.")
    return out


def load_net(path):
    """Rebuild a net from a weights file; parameters match the file bitwise."""
    path = Path(path)
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != "sigfuse-weights":
            raise StateError(f"{path}: not a weights file")
        net = net_from_spec(manifest["net"])
        params = net.all_params()
        for i, entry in enumerate(manifest["params"]):
            pname = entry["path"]
            if pname not in params:
                raise StateError(f"{path}: parameter {pname!r} not in architecture")
            blob = zf.read(f"params/{i:04d}.bin")
            arr = np.frombuffer(blob, dtype="<f4").reshape(entry["shape"])
            np.copyto(params[pname], arr.astype(np.float64))
        if "state.json" in zf.namelist():
            extras = _extra_state(net)
            for i, entry in enumerate(json.loads(zf.read("state.json"))):
                blob = zf.read(f"state/{i:04d}.bin")
                arr = np.frombuffer(blob, dtype="<f4").reshape(entry["shape"])
                target = extras.get(entry["path"])
                if target is not None:
                    np.copyto(target, arr.astype(np.float64))
    return net
