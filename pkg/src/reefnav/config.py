"""Plain-text run configuration.

Format: one `section.key = value` per line, `#` starts a comment. Values are
parsed against the type of each field's default (ints, floats, booleans,
strings, or comma-separated float tuples). Unknown keys are rejected.
"""

from dataclasses import dataclass, field, fields, replace

from .expert import ExpertConfig
from .explore import ExploreConfig
from .mission import SpliceConfig
from .sensors import SensorNoise
from .state_estimation import EkfConfig
from .training import DEFAULT_TAU, TrainConfig
from .world import WorldParams


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class CollectConfig:
    bc_worlds: int = 5
    bc_episodes: int = 50
    bc_steps: int = 360
    explore_episodes: int = 60
    explore_steps: int = 340


@dataclass(frozen=True)
class MissionParams:
    reach_threshold: float = 1.0
    waypoint_timeout: float = 60.0
    use_estimated: bool = True
    seeds: int = 10  # spliced-mission trials


@dataclass(frozen=True)
class CompareParams:
    trials: int = 30
    goal_dist_min: float = 5.0
    goal_dist_max: float = 8.0
    timeout: float = 60.0


@dataclass(frozen=True)
class NetParamsConfig:
    feat_dim: int = 64
    goal_fusion: str = "multiply"  # or "concat"
    dropout_rate: float = 0.1
    ema_beta: float = 0.6


@dataclass(frozen=True)
class HindsightParams:
    tau: int = DEFAULT_TAU
    use_estimated: bool = True


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    world: WorldParams = field(default_factory=WorldParams)
    noise: SensorNoise = field(default_factory=SensorNoise)
    expert: ExpertConfig = field(default_factory=ExpertConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    gc_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=20))
    hindsight: HindsightParams = field(default_factory=HindsightParams)
    explore: ExploreConfig = field(default_factory=ExploreConfig)
    ekf: EkfConfig = field(default_factory=EkfConfig)
    splice: SpliceConfig = field(default_factory=SpliceConfig)
    collect: CollectConfig = field(default_factory=CollectConfig)
    mission: MissionParams = field(default_factory=MissionParams)
    compare: CompareParams = field(default_factory=CompareParams)
    net: NetParamsConfig = field(default_factory=NetParamsConfig)


_SECTIONS = {
    "run": None,  # holds the top-level seed
    "world": "world",
    "noise": "noise",
    "expert": "expert",
    "train": "train",
    "train_gc": "gc_train",
    "hindsight": "hindsight",
    "explore": "explore",
    "ekf": "ekf",
    "splice": "splice",
    "collect": "collect",
    "mission": "mission",
    "compare": "compare",
    "net": "net",
}


def _parse_value(raw, default):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(float(v) for v in raw.split(","))
    if default is None:  # optional floats (e.g. world.coral_target)
        return float(raw)
    return raw


def parse_config_text(text):
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key.count(".") != 1:
            raise ConfigError(f"line {lineno}: key {key!r} must be section.key")
        entries[key] = (raw, lineno)

    cfg = RunConfig()
    by_section = {}
    for key, (raw, lineno) in entries.items():
        section, name = key.split(".")
        if section not in _SECTIONS:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        by_section.setdefault(section, {})[name] = (raw, lineno)

    if "run" in by_section:
        for name, (raw, lineno) in by_section.pop("run").items():
            if name != "seed":
                raise ConfigError(f"line {lineno}: unknown key run.{name}")
            cfg = replace(cfg, seed=int(raw))

    for section, values in by_section.items():
        attr = _SECTIONS[section]
        target = getattr(cfg, attr)
        known = {f.name: getattr(target, f.name) for f in fields(target)}
        updates = {}
        for name, (raw, lineno) in values.items():
            if name not in known:
                raise ConfigError(f"line {lineno}: unknown key {section}.{name}")
            try:
                updates[name] = _parse_value(raw, known[name])
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"line {lineno}: bad value for {section}.{name}: {exc}")
        cfg = replace(cfg, **{attr: replace(target, **updates)})
    return cfg


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())
