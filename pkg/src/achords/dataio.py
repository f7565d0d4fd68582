"""Reading and writing sets, embeddings, manifests and trained models.

File formats
------------
set matrix CSV
    One row per ambient dimension, comma separated, no header; columns are
    the input vectors.
set matrix binary
    16-byte header (8-byte magic ``ACHDMAT\\0``, little-endian uint32 rows,
    uint32 cols) followed by row-major little-endian float64 entries.
manifest CSV
    Header ``path,label`` and an optional third column ``split`` holding
    ``train`` or ``test``.  Relative paths resolve against the manifest.
embeddings
    ``token v1 ... vD`` per line (a leading word2vec ``count dim`` header
    line is skipped).
model
    Versioned JSON envelope; prototypes and relevances are base64-encoded
    binary matrices so the round trip is bit exact.
"""

from __future__ import annotations

import base64
import binascii
import csv
import io
import json
import logging
import math
import re
import struct
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .errors import InvalidInput, ParseError, SetTooSmall, UnsupportedVersion
from .linalg import SubspacePoint
from .model import Hyperparameters, ModelState, RelevanceVector

log = logging.getLogger(__name__)

MATRIX_MAGIC = b"ACHDMAT\x00"
_HEADER = struct.Struct("<8sII")
MODEL_FORMAT = "achords-model"
MODEL_VERSION = 1


def _finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"{what} contains non-finite values")
    return arr


# -- set matrices -----------------------------------------------------------


def matrix_to_bytes(x) -> bytes:
    x = np.asarray(x, dtype="<f8")
    if x.ndim != 2:
        raise InvalidInput("only 2-d matrices can be serialized")
    return _HEADER.pack(MATRIX_MAGIC, x.shape[0], x.shape[1]) + np.ascontiguousarray(x).tobytes()


def matrix_from_bytes(buf: bytes, what: str = "matrix") -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise ParseError(f"{what}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(buf)
    if magic != MATRIX_MAGIC:
        raise ParseError(f"{what}: bad magic {magic!r}")
    if len(buf) != _HEADER.size + 8 * rows * cols:
        raise ParseError(f"{what}: expected {rows}x{cols} payload, got {len(buf) - _HEADER.size} bytes")
    if rows == 0 or cols == 0:
        raise ParseError(f"{what}: empty matrix")
    arr = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size).reshape(rows, cols)
    return _finite(arr.astype(np.float64), what)


def write_matrix_binary(path, x) -> None:
    Path(path).write_bytes(matrix_to_bytes(x))


def write_matrix_csv(path, x) -> None:
    x = np.asarray(x, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        for row in x:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def write_set_matrix(path, x) -> None:
    if str(path).endswith(".csv"):
        write_matrix_csv(path, x)
    else:
        write_matrix_binary(path, x)


def _read_csv_matrix(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if len(rows[-1]) != len(rows[0]):
                raise ParseError(f"{path}:{lineno}: expected {len(rows[0])} values, got {len(rows[-1])}")
    if not rows:
        raise ParseError(f"{path}: empty matrix file")
    return _finite(np.array(rows, dtype=np.float64), str(path))


def load_set_matrix(path) -> np.ndarray:
    """Load a ``D x n`` set matrix; the binary format is recognised by its magic."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(len(MATRIX_MAGIC))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    if head == MATRIX_MAGIC:
        return matrix_from_bytes(path.read_bytes(), str(path))
    return _read_csv_matrix(path)


# -- embeddings and documents -----------------------------------------------


@dataclass
class EmbeddingTable:
    dim: int
    vocab: dict

    def __contains__(self, token):
        return token in self.vocab

    def __getitem__(self, token):
        return self.vocab[token]

    def __len__(self):
        return len(self.vocab)


def load_embeddings(path) -> EmbeddingTable:
    vocab: dict = {}
    dim = None
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    with fh:
        lines = iter(enumerate(fh, 1))
        for lineno, line in lines:
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if dim is None and lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                dim = int(parts[1])  # word2vec text header
                continue
            if dim is None:
                dim = len(parts) - 1
                if dim < 1:
                    raise ParseError(f"{path}:{lineno}: no vector values")
            if len(parts) != dim + 1:
                raise ParseError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            try:
                vec = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if not np.all(np.isfinite(vec)):
                raise ParseError(f"{path}:{lineno}: non-finite value")
            vocab[parts[0]] = vec
    if not vocab:
        raise ParseError(f"{path}: no embeddings found")
    return EmbeddingTable(dim, vocab)


def write_embeddings(path, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for token, vec in table.vocab.items():
            fh.write(token + " " + " ".join(repr(float(v)) for v in vec) + "\n")


@dataclass(frozen=True)
class StopwordList:
    tokens: frozenset = field(default_factory=frozenset)

    def __contains__(self, token):
        return token in self.tokens


def load_stopwords(path=None) -> StopwordList:
    """Read one token per line; ``None`` loads the bundled English list."""
    if path is None:
        text = resources.files("achords").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ParseError(f"cannot read {path}: {exc}") from None
    words = (w.strip().lower() for w in text.splitlines())
    return StopwordList(frozenset(w for w in words if w and not w.startswith("#")))


_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


class EmbeddedDocument(NamedTuple):
    matrix: np.ndarray
    tokens: list
    dropped_stopwords: int
    dropped_oov: int


def embed_document(
    text: str,
    table: EmbeddingTable,
    stop: Optional[StopwordList] = None,
    min_tokens: int = 1,
    normalize: bool = False,
) -> EmbeddedDocument:
    """Stack the embeddings of the surviving tokens as columns, in document order."""
    stop = stop or StopwordList()
    kept, n_stop, n_oov = [], 0, 0
    for tok in tokenize(text):
        if tok in stop:
            n_stop += 1
        elif tok not in table.vocab:
            n_oov += 1
        else:
            kept.append(tok)
    if n_oov:
        log.info("dropped %d out-of-vocabulary tokens", n_oov)
    if len(kept) < max(min_tokens, 1):
        raise SetTooSmall(f"{len(kept)} usable tokens, need {max(min_tokens, 1)}")
    x = np.column_stack([table.vocab[t] for t in kept]).astype(np.float64)
    if normalize:
        norms = np.linalg.norm(x, axis=0)
        x = x / np.where(norms > 0, norms, 1.0)
    return EmbeddedDocument(x, kept, n_stop, n_oov)


# -- manifests ----------------------------------------------------------------


@dataclass
class DatasetManifest:
    entries: list  # (path, label, split or None)
    class_index: dict
    root: Path = Path(".")

    @property
    def labels(self) -> list:
        return [label for _, label, _ in self.entries]

    def resolve(self, set_path: str) -> Path:
        p = Path(set_path)
        return p if p.is_absolute() else self.root / p

    @property
    def has_fixed_split(self) -> bool:
        return all(split is not None for _, _, split in self.entries)


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read manifest {path}: {exc}") from None
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header[:2]] != ["path", "label"]:
        raise ParseError(f"{path}: manifest must start with a 'path,label' header")
    with_split = len(header) > 2 and header[2].strip() == "split"
    entries, seen, class_index = [], set(), {}
    for lineno, row in enumerate(reader, 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields")
        set_path, label = row[0].strip(), row[1].strip()
        split = row[2].strip() if with_split else None
        if split not in (None, "train", "test"):
            raise ParseError(f"{path}:{lineno}: split must be 'train' or 'test'")
        if set_path in seen:
            raise ParseError(f"{path}:{lineno}: duplicate path {set_path}")
        seen.add(set_path)
        class_index.setdefault(label, len(class_index))
        entries.append((set_path, label, split))
    if len(class_index) < 2:
        raise ParseError(f"{path}: manifest needs at least two distinct labels")
    return DatasetManifest(entries, class_index, path.parent)


def write_manifest(path, entries) -> None:
    rows = list(entries)
    with_split = any(len(e) > 2 and e[2] is not None for e in rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label", "split"] if with_split else ["path", "label"])
        for e in rows:
            writer.writerow(list(e[:3]) if with_split else list(e[:2]))


# -- models -------------------------------------------------------------------


def _b64(arr) -> str:
    return base64.b64encode(matrix_to_bytes(np.atleast_2d(arr))).decode("ascii")


def _unb64(text: str, what: str) -> np.ndarray:
    try:
        raw = base64.b64decode(text.encode("ascii"), validate=True)
    except (binascii.Error, ValueError, AttributeError) as exc:
        raise ParseError(f"{what}: bad base64 payload ({exc})") from None
    return matrix_from_bytes(raw, what)


def model_to_json(model: ModelState) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "ambient_dim": model.ambient_dim,
        "subspace_dim": model.subspace_dim,
        "hyper": asdict(model.hyper),
        "relevance": _b64(model.relevance.lambdas[None, :]),
        "prototypes": [
            {"label": w.label.item() if isinstance(w.label, np.generic) else w.label, "basis": _b64(w.basis)}
            for w in model.prototypes
        ],
        "training_log": [list(row) for row in model.training_log],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def model_from_json(text: str) -> ModelState:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ParseError("not an achords model file")
    version = doc.get("version")
    if not isinstance(version, int):
        raise ParseError("model file lacks an integer version tag")
    if version != MODEL_VERSION:
        raise UnsupportedVersion(f"model version {version} is not supported (expected {MODEL_VERSION})")
    try:
        hyper = Hyperparameters(**doc["hyper"])
        relevance = RelevanceVector(_unb64(doc["relevance"], "relevance")[0])
        prototypes = tuple(
            SubspacePoint(_unb64(p["basis"], "prototype"), p["label"]) for p in doc["prototypes"]
        )
        log_rows = tuple(
            (int(e), float(c), float(a)) for e, c, a in doc["training_log"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed model file: {exc!r}") from None
    if not prototypes:
        raise ParseError("model has no prototypes")
    shape = (doc.get("ambient_dim"), doc.get("subspace_dim"))
    if any(w.basis.shape != shape for w in prototypes):
        raise ParseError("prototype shapes disagree with the recorded dimensions")
    return ModelState(prototypes, relevance, hyper, log_rows)


def save_model(model: ModelState, path) -> None:
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def load_model(path) -> ModelState:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read model {path}: {exc}") from None
    except UnicodeDecodeError as exc:
        raise ParseError(f"model {path} is not text: {exc}") from None
    return model_from_json(text)
