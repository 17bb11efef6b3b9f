"""Run configuration: one JSON document, strict keys, every field defaulted.

Sections mirror the pipeline stages. Unknown keys and type mismatches are
rejected with the dotted path of the offending entry, e.g. ``train.epochs``.
"""
from __future__ import annotations

import copy
import json
import zlib
from dataclasses import dataclass

import numpy as np

from spear.datagen import GenConfig
from spear.errors import ConfigError
from spear.labeler import LabelerConfig
from spear.model import ModelConfig
from spear.train import TrainConfig

STREAMS = ("data", "split", "tsmote", "init", "shuffle")


def _defaults() -> dict:
    gen = GenConfig().to_dict()
    for k in ("window_size", "window_stride", "seed"):
        gen.pop(k)
    gen["test_fraction"] = 0.2
    model = ModelConfig().to_dict()
    model.pop("n_bins")
    model.pop("seed")
    model["max_seq_len"] = None
    train = TrainConfig().to_dict()
    train.pop("seed")
    lab = LabelerConfig().__dict__.copy()
    return {
        "data": gen,
        "preprocess": {"scale": "minmax", "n_bins": 100, "max_len": 100,
                       "window": {"size": 100, "stride": 10, "include_tail": False}},
        "labeler": lab,
        "tsmote": {"enabled": True, "k": 5},
        "model": model,
        "train": train,
        "eval": {"threshold": 0.5},
        "output_dir": "out",
        "seed": 42,
    }


DEFAULTS = _defaults()
# entries whose value is a free-form mapping, validated by the owning module
OPEN_MAPS = {"data.mix"}


def _type_ok(default, value) -> bool:
    if default is None:
        return True
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, (list, tuple)):
        return isinstance(value, list)
    return isinstance(value, type(default))


def _merge(defaults: dict, doc, path: str) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    out = copy.deepcopy(defaults)
    for key, value in doc.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"{where}: unknown key")
        default = defaults[key]
        if isinstance(default, dict) and where not in OPEN_MAPS:
            out[key] = _merge(default, value, where)
        elif isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected an object")
            out[key] = value
        else:
            if not _type_ok(default, value):
                raise ConfigError(f"{where}: expected {type(default).__name__}, got {type(value).__name__}")
            out[key] = float(value) if isinstance(default, float) else value
    return out


def derive_seed(seed: int, stream: str) -> int:
    """A 32-bit seed for a named sub-stream of the run seed."""
    if stream not in STREAMS:
        raise ConfigError(f"unknown random stream {stream!r}")
    ss = np.random.SeedSequence([int(seed), zlib.crc32(stream.encode())])
    return int(ss.generate_state(1)[0])


@dataclass
class RunConfig:
    doc: dict

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def output_dir(self) -> str:
        return self.doc["output_dir"]

    @property
    def n_bins(self) -> int:
        return int(self.doc["preprocess"]["n_bins"])

    @property
    def max_len(self) -> int:
        return int(self.doc["preprocess"]["max_len"])

    @property
    def threshold(self) -> float:
        return float(self.doc["eval"]["threshold"])

    @property
    def test_fraction(self) -> float:
        return float(self.doc["data"]["test_fraction"])

    def gen_config(self) -> GenConfig:
        d = dict(self.doc["data"])
        d.pop("test_fraction")
        w = self.doc["preprocess"]["window"]
        d["acceptable_range"] = tuple(d["acceptable_range"])
        return GenConfig(**d, window_size=w["size"], window_stride=w["stride"], seed=self.seed)

    def labeler_config(self) -> LabelerConfig:
        d = dict(self.doc["labeler"])
        if d["point_range"] is not None:
            d["point_range"] = tuple(d["point_range"])
        return LabelerConfig(**d)

    def model_config(self, prompt_len: int | None = None) -> ModelConfig:
        d = dict(self.doc["model"])
        if prompt_len is not None:
            d["prompt_len"] = prompt_len
        if d["max_seq_len"] is None:
            d["max_seq_len"] = d["prompt_len"] + self.max_len
        return ModelConfig(**d, n_bins=self.n_bins, seed=derive_seed(self.seed, "init"))

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.doc["train"], seed=derive_seed(self.seed, "shuffle"))

    def validate(self) -> "RunConfig":
        """Build every section once so bad values fail before any work starts."""
        pre = self.doc["preprocess"]
        if pre["scale"] != "minmax":
            raise ConfigError(f"preprocess.scale: only 'minmax' is supported, got {pre['scale']!r}")
        for key in ("n_bins", "max_len"):
            if pre[key] < (2 if key == "n_bins" else 1):
                raise ConfigError(f"preprocess.{key}: out of range ({pre[key]})")
        if pre["window"]["size"] < 1 or pre["window"]["stride"] < 1:
            raise ConfigError("preprocess.window: size and stride must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"data.test_fraction: must be in (0, 1), got {self.test_fraction}")
        if self.doc["tsmote"]["k"] < 1:
            raise ConfigError("tsmote.k: must be >= 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("eval.threshold: must be in [0, 1]")
        pr = self.doc["labeler"]["point_range"]
        if pr is not None and (len(pr) != 2 or not all(isinstance(v, (int, float)) for v in pr)):
            raise ConfigError("labeler.point_range: expected [low, high] or null")
        for section, build in (("data", self.gen_config), ("labeler", self.labeler_config),
                               ("model", self.model_config), ("train", self.train_config)):
            try:
                build()
            except ConfigError as exc:
                msg = str(exc)
                raise ConfigError(msg if msg.startswith(section) else f"{section}: {msg}") from None
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{section}: {exc}") from None
        return self

    def to_json(self) -> str:
        return json.dumps(self.doc, indent=2, sort_keys=True) + "\n"


def resolve(doc: dict | None = None) -> RunConfig:
    return RunConfig(_merge(DEFAULTS, doc if doc is not None else {}, "")).validate()


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return resolve(doc)
