"""Model persistence: a single self-describing binary file.

Layout: magic ``CCAP1``, one version byte, then length-prefixed sections
(u16 name length, name, u64 payload length, payload). JSON sections hold
the config snapshot, fitted preprocessing state, and model structure;
numpy arrays are stored bit-exactly in ``.npy`` payloads and referenced
from the JSON by name, so a save/load round trip reproduces predictions
exactly.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict

import numpy as np

from .errors import DataError
from ._tree import Tree
from .learners import (
    ConstModel,
    ConstSpec,
    DTModel,
    DTSpec,
    GBModel,
    GBSpec,
    KNNModel,
    KNNSpec,
    LRModel,
    LRSpec,
    RFModel,
    RFSpec,
    SVMModel,
    SVMSpec,
)
from .ensemble import StackModel
from .neural import MlpModel, MlpSpec

MAGIC = b"CCAP1"
VERSION = 1

_SPEC_CLASSES = {
    "lr": LRSpec,
    "svm": SVMSpec,
    "knn": KNNSpec,
    "dt": DTSpec,
    "rf": RFSpec,
    "gb": GBSpec,
    "const": ConstSpec,
}


class _ArrayBank:
    def __init__(self):
        self.arrays: dict[str, np.ndarray] = {}
        self._next = 0

    def put(self, a: np.ndarray) -> str:
        key = f"a{self._next}"
        self._next += 1
        self.arrays[key] = np.ascontiguousarray(a)
        return key

    def get(self, key: str) -> np.ndarray:
        return self.arrays[key]


def _spec_to_dict(spec) -> dict:
    d = asdict(spec)
    d["kind"] = spec.kind
    return d


def _spec_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    cls = _SPEC_CLASSES[kind]
    if "embeddings" in d:
        d["embeddings"] = tuple(tuple(e) for e in d["embeddings"])
    if "hidden_sizes" in d:
        d["hidden_sizes"] = tuple(d["hidden_sizes"])
    return cls(**d)


def _tree_to_dict(tree: Tree, bank: _ArrayBank) -> dict:
    return {
        "feature": bank.put(tree.feature),
        "threshold": bank.put(tree.threshold),
        "left": bank.put(tree.left),
        "right": bank.put(tree.right),
        "value": bank.put(tree.value),
        "depth": tree.depth,
    }


def _tree_from_dict(d: dict, bank: _ArrayBank) -> Tree:
    return Tree(
        feature=bank.get(d["feature"]),
        threshold=bank.get(d["threshold"]),
        left=bank.get(d["left"]),
        right=bank.get(d["right"]),
        value=bank.get(d["value"]),
        depth=int(d["depth"]),
    )


def model_to_dict(model, bank: _ArrayBank) -> dict:
    if isinstance(model, LRModel):
        return {
            "type": "lr",
            "spec": _spec_to_dict(model.spec),
            "weights": bank.put(model.weights),
            "intercept": model.intercept,
        }
    if isinstance(model, SVMModel):
        return {
            "type": "svm",
            "spec": _spec_to_dict(model.spec),
            "weights": bank.put(model.weights),
            "bias": model.bias,
        }
    if isinstance(model, KNNModel):
        return {
            "type": "knn",
            "spec": _spec_to_dict(model.spec),
            "train_X": bank.put(model.train_X),
            "train_y": bank.put(model.train_y),
        }
    if isinstance(model, DTModel):
        return {
            "type": "dt",
            "spec": _spec_to_dict(model.spec),
            "tree": _tree_to_dict(model.tree, bank),
            "n_features": model.n_features,
        }
    if isinstance(model, RFModel):
        return {
            "type": "rf",
            "spec": _spec_to_dict(model.spec),
            "trees": [_tree_to_dict(t, bank) for t in model.trees],
            "n_features": model.n_features,
        }
    if isinstance(model, GBModel):
        return {
            "type": "gb",
            "spec": _spec_to_dict(model.spec),
            "base_score": model.base_score,
            "trees": [_tree_to_dict(t, bank) for t in model.trees],
            "n_features": model.n_features,
        }
    if isinstance(model, ConstModel):
        return {"type": "const", "spec": _spec_to_dict(model.spec)}
    if isinstance(model, MlpModel):
        return {
            "type": "mlp",
            "spec": asdict(model.spec),
            "n_dense": model.n_dense,
            "weights": [bank.put(w) for w in model.weights],
            "biases": [bank.put(b) for b in model.biases],
            "emb_tables": [bank.put(t) for t in model.emb_tables],
            "loss_history": list(model.loss_history),
        }
    if isinstance(model, StackModel):
        return {
            "type": "stack",
            "base_names": model.base_names,
            "bases": [model_to_dict(b, bank) for b in model.bases],
            "meta": model_to_dict(model.meta, bank),
            "include_dense": model.include_dense,
            "include_embeddings": model.include_embeddings,
            "n_features": model.n_features,
            "cat_cardinalities": model.cat_cardinalities,
        }
    raise DataError(f"cannot serialize model of type {type(model).__name__}")


def model_from_dict(d: dict, bank: _ArrayBank):
    t = d["type"]
    if t == "lr":
        return LRModel(
            spec=_spec_from_dict(d["spec"]),
            weights=bank.get(d["weights"]),
            intercept=float(d["intercept"]),
            loss_history=[],
        )
    if t == "svm":
        return SVMModel(
            spec=_spec_from_dict(d["spec"]),
            weights=bank.get(d["weights"]),
            bias=float(d["bias"]),
        )
    if t == "knn":
        return KNNModel(
            spec=_spec_from_dict(d["spec"]),
            train_X=bank.get(d["train_X"]),
            train_y=bank.get(d["train_y"]),
        )
    if t == "dt":
        return DTModel(
            spec=_spec_from_dict(d["spec"]),
            tree=_tree_from_dict(d["tree"], bank),
            n_features=int(d["n_features"]),
        )
    if t == "rf":
        return RFModel(
            spec=_spec_from_dict(d["spec"]),
            trees=[_tree_from_dict(td, bank) for td in d["trees"]],
            n_features=int(d["n_features"]),
        )
    if t == "gb":
        return GBModel(
            spec=_spec_from_dict(d["spec"]),
            base_score=float(d["base_score"]),
            trees=[_tree_from_dict(td, bank) for td in d["trees"]],
            n_features=int(d["n_features"]),
        )
    if t == "const":
        return ConstModel(spec=_spec_from_dict(d["spec"]))
    if t == "mlp":
        spec_dict = dict(d["spec"])
        spec_dict["hidden_sizes"] = tuple(spec_dict["hidden_sizes"])
        spec_dict["embeddings"] = tuple(tuple(e) for e in spec_dict["embeddings"])
        return MlpModel(
            spec=MlpSpec(**spec_dict),
            n_dense=int(d["n_dense"]),
            weights=[bank.get(k) for k in d["weights"]],
            biases=[bank.get(k) for k in d["biases"]],
            emb_tables=[bank.get(k) for k in d["emb_tables"]],
            loss_history=list(d["loss_history"]),
        )
    if t == "stack":
        return StackModel(
            base_names=list(d["base_names"]),
            bases=[model_from_dict(b, bank) for b in d["bases"]],
            meta=model_from_dict(d["meta"], bank),
            include_dense=bool(d["include_dense"]),
            include_embeddings=bool(d["include_embeddings"]),
            n_features=int(d["n_features"]),
            cat_cardinalities=[int(c) for c in d["cat_cardinalities"]],
        )
    raise DataError(f"artifact contains unknown model type {t!r}")


def _write_section(fh, name: str, payload: bytes) -> None:
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<Q", len(payload)))
    fh.write(payload)


def _read_sections(data: bytes, offset: int) -> dict[str, bytes]:
    sections: dict[str, bytes] = {}
    while offset < len(data):
        if offset + 2 > len(data):
            raise DataError("truncated artifact: bad section header")
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (payload_len,) = struct.unpack_from("<Q", data, offset)
        offset += 8
        payload = data[offset : offset + payload_len]
        if len(payload) != payload_len:
            raise DataError(f"truncated artifact: section {name!r} cut short")
        offset += payload_len
        sections[name] = payload
    return sections


def save_artifact(path: str, meta: dict, preproc: dict, models: dict) -> None:
    """Write config snapshot, preprocessing state, and named models."""
    bank = _ArrayBank()
    model_doc = {name: model_to_dict(m, bank) for name, m in models.items()}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        _write_section(fh, "meta", json.dumps(meta, sort_keys=True).encode("utf-8"))
        _write_section(fh, "preproc", json.dumps(preproc, sort_keys=True).encode("utf-8"))
        _write_section(fh, "models", json.dumps(model_doc, sort_keys=True).encode("utf-8"))
        for key in sorted(bank.arrays):
            buf = io.BytesIO()
            np.save(buf, bank.arrays[key], allow_pickle=False)
            _write_section(fh, f"arr:{key}", buf.getvalue())


def load_artifact(path: str) -> tuple[dict, dict, dict]:
    """Read an artifact; returns (meta, preproc, models by name)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read artifact {path}: {exc}") from exc
    if data[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path} is not a model artifact (bad magic)")
    version = data[len(MAGIC)]
    if version != VERSION:
        raise DataError(
            f"{path} has unsupported artifact version {version}, expected {VERSION}"
        )
    sections = _read_sections(data, len(MAGIC) + 1)
    for required in ("meta", "preproc", "models"):
        if required not in sections:
            raise DataError(f"artifact is missing its {required!r} section")
    bank = _ArrayBank()
    for name, payload in sections.items():
        if name.startswith("arr:"):
            bank.arrays[name[4:]] = np.load(io.BytesIO(payload), allow_pickle=False)
    meta = json.loads(sections["meta"].decode("utf-8"))
    preproc = json.loads(sections["preproc"].decode("utf-8"))
    model_doc = json.loads(sections["models"].decode("utf-8"))
    models = {name: model_from_dict(d, bank) for name, d in model_doc.items()}
    return meta, preproc, models
