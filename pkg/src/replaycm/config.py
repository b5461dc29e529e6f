"""Pipeline configuration: a single JSON file with named feature blocks and
named system blocks, parsed into the owning modules' config dataclasses up
front so bad parameters fail at load time.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cepstral import CqccConfig, LpccConfig
from .corpus import CorpusConfig
from .eemd import SiftConfig
from .spectral import CqtConfig, DwtConfig, FftConfig, FramingConfig

FEATURE_KINDS = ("cqcc", "lpcc", "fft", "cqt", "dwt", "deemd")
MODEL_KINDS = ("gmm", "ivec-svm")


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


def derive_seed(root: int, *tags) -> int:
    """Stable 32-bit seed from a root seed plus string/int tags."""
    entropy = [int(root) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, int):
            entropy.append(tag & 0xFFFFFFFF)
        else:
            entropy.append(zlib.crc32(str(tag).encode("utf-8")))
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


@dataclass(frozen=True)
class PathsConfig:
    work_dir: str
    audio_dir: str
    protocol_train: str
    protocol_eval: str

    def __post_init__(self):
        for name in ("work_dir", "audio_dir", "protocol_train", "protocol_eval"):
            if not getattr(self, name):
                raise ConfigError(f"paths.{name} must be a non-empty path")


@dataclass(frozen=True)
class DeemdParams:
    fft: FftConfig
    ensemble_size: int = 50
    noise_strength_factor: float = 0.1
    sift: SiftConfig = field(default_factory=SiftConfig)

    def __post_init__(self):
        if self.ensemble_size < 1:
            raise ConfigError("deemd ensemble_size must be >= 1")
        if self.noise_strength_factor < 0:
            raise ConfigError("deemd noise_strength_factor must be >= 0")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    config: object
    cmvn: bool = False
    mvn: bool = False

    @property
    def is_cepstral(self) -> bool:
        return self.kind in ("cqcc", "lpcc")


@dataclass(frozen=True)
class GmmSystemSpec:
    name: str
    feature: str
    components: int = 32
    iterations: int = 10
    variance_floor: float | None = None
    phrase_dependent: bool = False

    def __post_init__(self):
        if self.components < 1 or self.iterations < 1:
            raise ConfigError(f"system {self.name}: components and iterations must be >= 1")


@dataclass(frozen=True)
class IvecSystemSpec:
    name: str
    feature: str
    ubm_components: int = 32
    ubm_iterations: int = 10
    tv_rank: int = 20
    tv_iterations: int = 5
    svm_c: float = 1.0
    ubm_shared: bool = True
    t_shared: bool = True
    svm_shared: bool = True

    def __post_init__(self):
        if min(self.ubm_components, self.ubm_iterations,
               self.tv_rank, self.tv_iterations) < 1:
            raise ConfigError(f"system {self.name}: counts must be >= 1")
        if self.svm_c <= 0:
            raise ConfigError(f"system {self.name}: svm_c must be positive")
        if self.t_shared and not self.ubm_shared:
            raise ConfigError(
                f"system {self.name}: a shared T-matrix requires a shared UBM"
            )
        if self.svm_shared and not self.t_shared:
            raise ConfigError(
                f"system {self.name}: a shared SVM requires a shared T-matrix"
            )

    @property
    def phrase_dependent(self) -> bool:
        return not (self.ubm_shared and self.t_shared and self.svm_shared)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int
    sample_rate: int
    paths: PathsConfig
    corpus: CorpusConfig
    features: dict[str, FeatureSpec]
    systems: dict[str, object]

    def feature_for(self, system_name: str) -> FeatureSpec:
        return self.features[self.systems[system_name].feature]


def _take(block: dict, name: str, keys: dict, context: str) -> dict:
    """Pop known keys (with defaults applied by the constructor), reject typos."""
    unknown = set(block) - set(keys) - {"type", "model", "cmvn", "mvn", "feature"}
    if unknown:
        raise ConfigError(f"{context} {name!r}: unknown key(s) {sorted(unknown)}")
    return {k: block[k] for k in keys if k in block}


def _framing_from(block: dict) -> FramingConfig:
    kwargs = {}
    for src, dst in (("window_seconds", "window_seconds"),
                     ("hop_seconds", "hop_seconds"), ("window", "window")):
        if src in block:
            kwargs[dst] = block[src]
    return FramingConfig(**kwargs)


def _parse_feature(name: str, block: dict) -> FeatureSpec:
    kind = block.get("type")
    if kind not in FEATURE_KINDS:
        raise ConfigError(f"feature {name!r}: unknown type {kind!r}")
    cmvn = bool(block.get("cmvn", False))
    mvn = bool(block.get("mvn", False))
    try:
        if kind == "cqcc":
            keys = _take(block, name, dict.fromkeys(
                ["f_min", "bins_per_octave", "n_bins", "hop_length", "floor",
                 "resample_bins", "n_coeffs"]), "feature")
            cqt_keys = {k: keys.pop(k) for k in
                        ("f_min", "bins_per_octave", "n_bins", "hop_length", "floor")
                        if k in keys}
            config = CqccConfig(cqt=CqtConfig(**cqt_keys), **keys)
        elif kind == "lpcc":
            keys = _take(block, name, dict.fromkeys(
                ["window_seconds", "hop_seconds", "window", "lpc_order", "n_coeffs"]),
                "feature")
            framing = _framing_from(keys)
            config = LpccConfig(
                framing=framing,
                **{k: keys[k] for k in ("lpc_order", "n_coeffs") if k in keys},
            )
        elif kind in ("fft", "deemd"):
            keys = _take(block, name, dict.fromkeys(
                ["window_seconds", "hop_seconds", "window", "n_fft", "floor",
                 "target_bins", "ensemble_size", "noise_strength_factor",
                 "max_sift_iters", "sd_threshold"]), "feature")
            fft_cfg = FftConfig(
                framing=_framing_from(keys),
                **{k: keys[k] for k in ("n_fft", "floor", "target_bins") if k in keys},
            )
            if kind == "fft":
                config = fft_cfg
            else:
                sift = SiftConfig(**{
                    k: keys[k] for k in ("max_sift_iters", "sd_threshold") if k in keys
                })
                config = DeemdParams(
                    fft=fft_cfg,
                    sift=sift,
                    **{k: keys[k] for k in
                       ("ensemble_size", "noise_strength_factor") if k in keys},
                )
        elif kind == "cqt":
            keys = _take(block, name, dict.fromkeys(
                ["f_min", "bins_per_octave", "n_bins", "hop_length", "floor"]),
                "feature")
            config = CqtConfig(**keys)
        else:  # dwt
            keys = _take(block, name, dict.fromkeys(
                ["frame_len", "hop_length", "levels", "floor"]), "feature")
            config = DwtConfig(**keys)
    except ValueError as exc:
        raise ConfigError(f"feature {name!r}: {exc}") from exc
    return FeatureSpec(name=name, kind=kind, config=config, cmvn=cmvn, mvn=mvn)


def _parse_system(name: str, block: dict) -> object:
    model = block.get("model")
    if model not in MODEL_KINDS:
        raise ConfigError(f"system {name!r}: unknown model {model!r}")
    if "feature" not in block:
        raise ConfigError(f"system {name!r}: missing feature reference")
    try:
        if model == "gmm":
            keys = _take(block, name, dict.fromkeys(
                ["components", "iterations", "variance_floor", "phrase_dependent"]),
                "system")
            return GmmSystemSpec(name=name, feature=block["feature"], **keys)
        keys = _take(block, name, dict.fromkeys(
            ["ubm_components", "ubm_iterations", "tv_rank", "tv_iterations",
             "svm_c", "ubm_shared", "t_shared", "svm_shared"]), "system")
        return IvecSystemSpec(name=name, feature=block["feature"], **keys)
    except ValueError as exc:
        raise ConfigError(f"system {name!r}: {exc}") from exc


def _reject_duplicate_keys(pairs):
    data = {}
    for key, value in pairs:
        if key in data:
            raise ConfigError(f"duplicate key {key!r} in configuration")
        data[key] = value
    return data


def parse_config(data: dict) -> PipelineConfig:
    for section in ("paths", "features", "systems"):
        if section not in data:
            raise ConfigError(f"missing configuration section {section!r}")
    seed = int(data.get("seed", 0))
    sample_rate = int(data.get("sample_rate", 16000))
    paths = PathsConfig(**data["paths"])

    corpus_block = dict(data.get("corpus", {}))
    corpus_block.setdefault("seed", seed)
    corpus_block.setdefault("sample_rate", sample_rate)
    for key in ("cutoff_hz_range", "snr_db_range", "gain_range"):
        if key in corpus_block:
            corpus_block[key] = tuple(corpus_block[key])
    try:
        corpus = CorpusConfig(**corpus_block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"corpus: {exc}") from exc

    features = {
        name: _parse_feature(name, block) for name, block in data["features"].items()
    }
    systems = {}
    for name, block in data["systems"].items():
        spec = _parse_system(name, block)
        if spec.feature not in features:
            raise ConfigError(
                f"system {name!r} references unknown feature {spec.feature!r}"
            )
        systems[name] = spec
    if not systems:
        raise ConfigError("at least one system must be configured")
    return PipelineConfig(
        seed=seed,
        sample_rate=sample_rate,
        paths=paths,
        corpus=corpus,
        features=features,
        systems=systems,
    )


def load_config(path, seed_override: int | None = None) -> PipelineConfig:
    try:
        raw = json.loads(
            Path(path).read_text(encoding="utf-8"),
            object_pairs_hook=_reject_duplicate_keys,
        )
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if seed_override is not None:
        raw["seed"] = int(seed_override)
        if "corpus" in raw:
            raw["corpus"].pop("seed", None)
    try:
        return parse_config(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def default_desk_config(work_dir: str = "work", seed: int = 20170801) -> dict:
    """JSON-ready configuration for the bundled synthetic-corpus experiment."""
    work = str(work_dir)
    return {
        "seed": seed,
        "sample_rate": 16000,
        "paths": {
            "work_dir": work,
            "audio_dir": f"{work}/corpus/wav",
            "protocol_train": f"{work}/corpus/protocol_train.txt",
            "protocol_eval": f"{work}/corpus/protocol_eval.txt",
        },
        "corpus": {
            "n_train_genuine": 100,
            "n_train_spoof": 100,
            "n_eval_genuine": 50,
            "n_eval_spoof": 50,
            "n_speakers": 10,
            "n_phrases": 4,
            "duration_seconds": 1.2,
        },
        "features": {
            "cqcc20": {
                "type": "cqcc",
                "f_min": 62.5,
                "bins_per_octave": 12,
                "n_bins": 84,
                "hop_length": 256,
                "resample_bins": 96,
                "n_coeffs": 20,
            },
            "lpcc78": {
                "type": "lpcc",
                "window_seconds": 0.128,
                "hop_seconds": 0.016,
                "lpc_order": 26,
                "n_coeffs": 78,
            },
        },
        "systems": {
            "cqcc-gmm": {
                "model": "gmm",
                "feature": "cqcc20",
                "components": 32,
                "iterations": 10,
            },
            "lpcc-ivec": {
                "model": "ivec-svm",
                "feature": "lpcc78",
                "ubm_components": 4,
                "ubm_iterations": 10,
                "tv_rank": 20,
                "tv_iterations": 5,
                "svm_c": 1.0,
            },
        },
    }
