"""Command line front end: ``achords {train,eval,predict,explain,synth}``.

Settings come from flags, then an optional ``--config`` file of
``key=value`` lines, then built-in defaults, in that order of precedence.
Failures print one ``error=<Class> code=<n> message=...`` line on stderr
and exit with the error class's code (see ``achords.errors``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import dataio
from .errors import AchordsError, ConfigError
from .experiment import run_eval, synth_sets
from .explain import build_report
from .linalg import subspace_of_set
from .model import PHI_CHOICES, Hyperparameters, predict, train

CHECK_TOL = 1e-8


@dataclass
class RunConfig:
    manifest: Optional[str] = None
    model: Optional[str] = None
    input: Optional[str] = None
    out: Optional[str] = None
    log: Optional[str] = None
    heatmaps: Optional[str] = None
    seed: int = 0
    dim: int = 5
    epochs: int = 30
    lr_proto: float = 0.1
    lr_rel: float = 1e-5
    phi: str = "identity"
    protos_per_class: int = 1
    stopwords: Optional[str] = None
    embeddings: Optional[str] = None
    normalize_embeddings: bool = False
    top_k: int = 10
    check: bool = False
    repeats: int = 10
    train_fraction: float = 0.5
    classes: int = 3
    sets_per_class: int = 20
    ambient_dim: int = 30
    set_size: int = 50
    noise: float = 0.05
    format: str = "bin"

    def hyper(self) -> Hyperparameters:
        return Hyperparameters(
            subspace_dim=self.dim,
            lr_prototype=self.lr_proto,
            lr_relevance=self.lr_rel,
            epochs=self.epochs,
            phi=self.phi,
            prototypes_per_class=self.protos_per_class,
            seed=self.seed,
        )

    def validate(self, command: str) -> None:
        required = {
            "train": ("manifest", "model"),
            "eval": ("manifest",),
            "predict": ("model", "input"),
            "explain": ("model", "input"),
            "synth": ("out",),
        }[command]
        for name in required:
            if getattr(self, name) is None:
                raise ConfigError(f"{command} requires --{name.replace('_', '-')}")
        if self.phi not in PHI_CHOICES:
            raise ConfigError(f"phi must be one of {PHI_CHOICES}")
        if self.dim < 1 or self.epochs < 0 or self.protos_per_class < 1 or self.seed < 0:
            raise ConfigError("dim, protos-per-class must be >= 1; epochs, seed >= 0")
        if self.lr_proto < 0 or self.lr_rel < 0:
            raise ConfigError("learning rates must be nonnegative")
        if self.top_k < 0 or self.repeats < 1:
            raise ConfigError("top-k must be >= 0 and repeats >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train-fraction must lie in (0, 1)")
        if self.format not in ("bin", "csv"):
            raise ConfigError("format must be 'bin' or 'csv'")


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw: str):
    default = _FIELDS[name].default
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def read_config_file(path) -> dict:
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown or malformed entry {line!r}")
        values[key] = _coerce(key, value.strip())
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for name in _FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    cfg = RunConfig(**values)
    cfg.validate(args.command)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="key=value settings file")
    shared.add_argument("--seed", type=int)
    shared.add_argument("--dim", type=int, help="subspace dimension d")
    shared.add_argument("--epochs", type=int)
    shared.add_argument("--lr-proto", type=float, help="prototype learning rate (default 0.1)")
    shared.add_argument("--lr-rel", type=float, help="relevance learning rate (default 1e-5)")
    shared.add_argument("--phi", choices=PHI_CHOICES)
    shared.add_argument("--protos-per-class", type=int)
    shared.add_argument("--stopwords", help="stopword list, one token per line")
    shared.add_argument("--embeddings", help="word embedding text file")
    shared.add_argument("--normalize-embeddings", action="store_const", const=True)
    shared.add_argument("--top-k", type=int)
    shared.add_argument("--check", action="store_const", const=True)
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="achords", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[shared], help="train a model on a manifest")
    p.add_argument("--manifest")
    p.add_argument("--model", help="output model file")
    p.add_argument("--log", help="per-epoch log (default: <model>.log)")

    p = sub.add_parser("eval", parents=[shared], help="repeated stratified train/test evaluation")
    p.add_argument("--manifest")
    p.add_argument("--repeats", type=int)
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--out", help="write the summary as JSON")

    p = sub.add_parser("predict", parents=[shared], help="classify one set")
    p.add_argument("--model")
    p.add_argument("--input")

    p = sub.add_parser("explain", parents=[shared], help="explain the prediction for one set")
    p.add_argument("--model")
    p.add_argument("--input")
    p.add_argument("--out", help="report JSON (default: <input>.explain.json)")
    p.add_argument("--heatmaps", help="directory for binary element impact maps")

    p = sub.add_parser("synth", parents=[shared], help="generate a synthetic dataset")
    p.add_argument("--out", help="output directory")
    p.add_argument("--classes", type=int)
    p.add_argument("--sets-per-class", type=int)
    p.add_argument("--ambient-dim", type=int)
    p.add_argument("--set-size", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--format", choices=("bin", "csv"))
    return parser


class _Inputs:
    """Lazily loaded embedding table and stopword list shared by one command."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self._table = None
        self._stop = None

    def matrix(self, path) -> tuple[np.ndarray, Optional[list]]:
        path = Path(path)
        if path.suffix != ".txt":
            return dataio.load_set_matrix(path), None
        if self.cfg.embeddings is None:
            raise ConfigError(f"{path} is a document; --embeddings is required")
        if self._table is None:
            self._table = dataio.load_embeddings(self.cfg.embeddings)
            self._stop = dataio.load_stopwords(self.cfg.stopwords)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise dataio.ParseError(f"cannot read {path}: {exc}") from None
        doc = dataio.embed_document(
            text, self._table, self._stop, min_tokens=self.cfg.dim, normalize=self.cfg.normalize_embeddings
        )
        return doc.matrix, doc.tokens


def _load_dataset(cfg: RunConfig):
    manifest = dataio.load_manifest(cfg.manifest)
    inputs = _Inputs(cfg)
    points, labels = [], []
    for set_path, label, _ in manifest.entries:
        x, _ = inputs.matrix(manifest.resolve(set_path))
        point, _ = subspace_of_set(x, cfg.dim)
        points.append(point)
        labels.append(label)
    return manifest, points, labels


def _format_float(v: float) -> str:
    return repr(float(v))


def cmd_train(cfg: RunConfig) -> int:
    _, points, labels = _load_dataset(cfg)
    model = train(list(zip(points, labels)), cfg.hyper())
    dataio.save_model(model, cfg.model)
    log_path = cfg.log or cfg.model + ".log"
    with open(log_path, "w") as fh:
        for epoch, cost, acc in model.training_log:
            fh.write(f"epoch={epoch} mean_cost={_format_float(cost)} train_accuracy={_format_float(acc)}\n")
    print(f"model={cfg.model} log={log_path} prototypes={len(model.prototypes)}")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    manifest, points, labels = _load_dataset(cfg)
    fixed = [s for _, _, s in manifest.entries] if manifest.has_fixed_split else None
    summary = run_eval(points, labels, cfg.hyper(), cfg.repeats, cfg.train_fraction, cfg.seed, fixed)
    for i, r in enumerate(summary.repeats, 1):
        print(
            f"repeat={i} seed={r.seed} accuracy={_format_float(r.accuracy)} "
            f"first_cost={_format_float(r.first_cost)} final_cost={_format_float(r.final_cost)}"
        )
    for label, acc in summary.per_class_accuracy.items():
        print(f"class={label} accuracy={_format_float(acc)}")
    print(f"mean_accuracy={_format_float(summary.mean_accuracy)} std_accuracy={_format_float(summary.std_accuracy)}")
    if cfg.out:
        Path(cfg.out).write_text(json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n")
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    model = dataio.load_model(cfg.model)
    cfg = dataclasses.replace(cfg, dim=model.subspace_dim)
    x, _ = _Inputs(cfg).matrix(cfg.input)
    label, dist = predict(x, model)
    print(f"label={label}")
    print("distances=" + ",".join(_format_float(v) for v in dist))
    return 0


def cmd_explain(cfg: RunConfig) -> int:
    model = dataio.load_model(cfg.model)
    cfg = dataclasses.replace(cfg, dim=model.subspace_dim)
    x, names = _Inputs(cfg).matrix(cfg.input)
    report = build_report(x, model, names=names, top_k=cfg.top_k, sample_id=Path(cfg.input).name)
    out = cfg.out or cfg.input + ".explain.json"
    Path(out).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    if cfg.heatmaps:
        hm = Path(cfg.heatmaps)
        hm.mkdir(parents=True, exist_ok=True)
        dataio.write_matrix_binary(hm / "element_impacts_plus.bin", report.element_scores_plus.impacts)
        dataio.write_matrix_binary(hm / "element_impacts_minus.bin", report.element_scores_minus.impacts)
    for rank, (k, name, score) in enumerate(report.top(), 1):
        label = name if name is not None else f"vector{k}"
        print(f"rank={rank} index={k} name={label} score={score:+.6e}")
    if cfg.check:
        residuals = report.check(CHECK_TOL)
        bad = {k: v for k, v in residuals.items() if not v <= CHECK_TOL}
        for key, value in residuals.items():
            print(f"check={key} residual={value:.3e} ok={int(value <= CHECK_TOL)}", file=sys.stderr)
        if bad:
            raise VerificationFailed(f"explanation identities violated: {sorted(bad)}")
    return 0


def cmd_synth(cfg: RunConfig) -> int:
    sets = synth_sets(cfg.classes, cfg.sets_per_class, cfg.ambient_dim, cfg.dim, cfg.set_size, cfg.noise, cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (x, label) in enumerate(sets):
        name = f"set_{i:05d}.{cfg.format}"
        dataio.write_set_matrix(out / name, x)
        entries.append((name, label))
    dataio.write_manifest(out / "manifest.csv", entries)
    print(f"manifest={out / 'manifest.csv'} sets={len(entries)}")
    return 0


class VerificationFailed(AchordsError):
    exit_code = 50


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "explain": cmd_explain,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except AchordsError as exc:
        message = json.dumps(str(exc))
        print(f"error={type(exc).__name__} code={exc.exit_code} message={message}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
