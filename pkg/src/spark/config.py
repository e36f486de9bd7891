"""Flat key-value run configuration: one text file, every key defaulted.

Format: `section.key = value`, one per line; `#` starts a comment. CLI
`--set key=value` overrides file values; both share the same parser so a
run is reproducible from the config text alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .continual import ContinualConfig, TrainConfig
from .errors import ConfigError
from .model import AblationFlags
from .spectral import ModelConfig

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    continual: ContinualConfig = field(default_factory=ContinualConfig)
    flags: AblationFlags = field(default_factory=AblationFlags)
    seed: int = 0
    train_manifest: str = ""
    index_manifest: str = ""  # empty -> fall back to train_manifest
    eval_manifests: tuple[str, ...] = ()
    phase_manifests: tuple[str, ...] = ()
    store_path: str = "store.spkv"
    checkpoint_path: str = "model.spkm"
    out_dir: str = "."


_SECTIONS = {
    "model": (ModelConfig, "model"),
    "train": (TrainConfig, "train"),
    "continual": (ContinualConfig, "continual"),
    "ablation": (AblationFlags, "flags"),
}

_TOP_KEYS = {
    "seed": int,
    "data.train_manifest": str,
    "data.index_manifest": str,
    "data.eval_manifests": "paths",
    "data.phase_manifests": "paths",
    "store.path": str,
    "checkpoint.path": str,
    "out.dir": str,
}


def default_key_values() -> dict[str, str]:
    """Every accepted key with its default, as config-file strings."""
    out: dict[str, str] = {}
    for section, (cls, _) in _SECTIONS.items():
        obj = cls()
        for f in fields(cls):
            v = getattr(obj, f.name)
            out[f"{section}.{f.name}"] = str(v).lower() if isinstance(v, bool) else str(v)
    rc = RunConfig()
    out["seed"] = str(rc.seed)
    out["data.train_manifest"] = rc.train_manifest
    out["data.index_manifest"] = rc.index_manifest
    out["data.eval_manifests"] = ""
    out["data.phase_manifests"] = ""
    out["store.path"] = rc.store_path
    out["checkpoint.path"] = rc.checkpoint_path
    out["out.dir"] = rc.out_dir
    return out


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    kv: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        kv[key] = value
    return kv


def read_config_file(path) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return parse_config_text(text, source=str(path))


def apply_overrides(kv: dict[str, str], overrides) -> dict[str, str]:
    out = dict(kv)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        out[key] = value
    return out


def _convert(key: str, value: str, target_type):
    try:
        if target_type is bool:
            lowered = value.strip().lower()
            if lowered not in _BOOL:
                raise ValueError(f"not a boolean: {value!r}")
            return _BOOL[lowered]
        if target_type is int:
            return int(value)
        if target_type is float:
            return float(value)
        if target_type == "paths":
            return tuple(p.strip() for p in value.split(",") if p.strip())
        return value
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from e


def build_run_config(kv: dict[str, str]) -> RunConfig:
    """Validate keys, convert types, and construct every sub-config."""
    known = default_key_values()
    for key in kv:
        if key not in known:
            raise ConfigError(f"unknown config key: {key}")
    merged = {**known, **kv}

    sub: dict[str, object] = {}
    for section, (cls, attr) in _SECTIONS.items():
        defaults = cls()
        kwargs = {}
        for f in fields(cls):
            target = type(getattr(defaults, f.name))
            kwargs[f.name] = _convert(f"{section}.{f.name}",
                                      merged[f"{section}.{f.name}"], target)
        try:
            sub[attr] = cls(**kwargs)
        except Exception as e:  # field-level message from the dataclass validator
            raise ConfigError(f"[{section}] {e}") from e
    return RunConfig(
        model=sub["model"], train=sub["train"], continual=sub["continual"],
        flags=sub["flags"],
        seed=_convert("seed", merged["seed"], int),
        train_manifest=merged["data.train_manifest"],
        index_manifest=merged["data.index_manifest"],
        eval_manifests=_convert("data.eval_manifests", merged["data.eval_manifests"], "paths"),
        phase_manifests=_convert("data.phase_manifests", merged["data.phase_manifests"], "paths"),
        store_path=merged["store.path"],
        checkpoint_path=merged["checkpoint.path"],
        out_dir=merged["out.dir"],
    )


def load_run_config(path=None, overrides=None) -> RunConfig:
    kv = read_config_file(path) if path else {}
    return build_run_config(apply_overrides(kv, overrides))


def render_config(kv: dict[str, str]) -> str:
    """Canonical text of the effective configuration (sorted keys)."""
    merged = {**default_key_values(), **kv}
    return "".join(f"{k} = {merged[k]}\n" for k in sorted(merged))
