"""Run configuration: YAML in, fully resolved values out.

An empty file resolves to the stock defaults. Unknown keys are rejected
with a suggestion; every resolved value (plus all module constants) is
echoed into the run manifest so no number enters a computation silently.
"""

from __future__ import annotations

import dataclasses
import difflib
import hashlib
import json
from dataclasses import dataclass

import yaml

from . import channel
from .environment import PAYLOAD_UNIT_BITS, TaskConfig, observation_constants
from .meta import DEFAULT_VALUE_SCALE, NAMED_GRIDS, InnerSchedule
from .neuralnet import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, HEAD_INIT_SCALE, HIDDEN_LAYERS

PACKAGE_VERSION = "0.1.0"


@dataclass
class RunConfig:
    """Every knob of a run, with the stock defaults."""

    # single-task factors (adapt / evaluate / calibrate modes)
    links_per_vehicle: int = 1
    payload_multiple: int = 2
    speed_kmh: float = 10.0
    ricean_k_v2i: float = 10.0
    ricean_k_v2v: float = 0.0
    n_vehicles: int = 4
    turn_probability: float = 0.4

    # task distribution (meta-train / study modes)
    task_set: str = "243"

    # schedule constants
    outer_loops: int | None = None      # None -> derived from samples_per_task
    samples_per_task: int = 16
    tasks_per_loop: int = 20
    inner_loops: int = 2
    gradient_steps: int = 10
    adapt_loops: int = 2
    trajectories_per_loop: int = 10
    eval_every: int = 10
    eval_tasks: int = 10
    eval_episodes: int = 50
    eval_mode: str = "sample"
    matched_episodes: int = 3000

    # hyperparameters
    learning_rate: float = 3e-4
    meta_step_size: float = 1e-4
    clip_ratio: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    v2i_weight: float = 0.1
    v2v_weight: float = 0.9
    completion_bonus: float | None = None   # None -> calibrated per task
    entropy_coef: float = 0.0
    minibatch_size: int | None = None
    normalize_advantages: bool = True
    value_scale: float = DEFAULT_VALUE_SCALE

    # study knobs
    payload_multiples: tuple = (1, 2, 3, 4, 5, 6)
    study_policies: tuple = ("meta-init", "rand-init", "matched", "random")
    study_seeds: int = 4
    study_repetitions: int = 50
    study_adapt_episodes: int = 100
    study_update_every: int = 5
    study_eval_episodes: int = 10
    search_budget: int = 2 ** 20

    # run control
    seed: int = 1234
    jobs: int = 1
    desk: bool = False
    out_dir: str = "runs/out"

    def task(self, payload_multiple=None):
        return TaskConfig.from_factors(
            self.links_per_vehicle,
            payload_multiple if payload_multiple is not None else self.payload_multiple,
            self.speed_kmh,
            self.ricean_k_v2i,
            self.ricean_k_v2v,
            n_vehicles=self.n_vehicles,
            turn_probability=self.turn_probability,
            v2i_weight=self.v2i_weight,
            v2v_weight=self.v2v_weight,
        )

    def schedule(self):
        return InnerSchedule(
            n_inner=self.inner_loops,
            n_traj=self.trajectories_per_loop,
            n_updates=self.gradient_steps,
            learning_rate=self.learning_rate,
            clip_ratio=self.clip_ratio,
            discount=self.discount,
            gae_lambda=self.gae_lambda,
            entropy_coef=self.entropy_coef,
            minibatch_size=self.minibatch_size,
            normalize_advantages=self.normalize_advantages,
        )

    def grid(self):
        if self.task_set not in NAMED_GRIDS:
            raise ConfigError(
                f"unknown task_set {self.task_set!r}; choose one of {sorted(NAMED_GRIDS)}"
            )
        return NAMED_GRIDS[self.task_set]

    def with_desk_profile(self):
        """Scaled-down schedule for laptop-length runs.

        Scaling factors: 32-task grid, 60 outer loops with 8 tasks per
        loop, 1000-episode trained baselines, 4-seed studies and sparser
        held-out evaluation.
        """
        if not self.desk:
            return self
        return dataclasses.replace(
            self,
            task_set="desk32",
            outer_loops=self.outer_loops if self.outer_loops is not None else 60,
            tasks_per_loop=min(self.tasks_per_loop, 8),
            matched_episodes=min(self.matched_episodes, 1000),
            eval_every=max(self.eval_every, 10),
            eval_tasks=min(self.eval_tasks, 3),
            eval_episodes=min(self.eval_episodes, 20),
            study_repetitions=min(self.study_repetitions, 10),
        )


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(RunConfig)}
KNOWN_KEYS = set(_FIELD_TYPES)

_TUPLE_KEYS = {"payload_multiples", "study_policies"}
_OPTIONAL_INT_KEYS = {"outer_loops", "minibatch_size"}
_OPTIONAL_FLOAT_KEYS = {"completion_bonus"}


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def load_config(path):
    """Parse a YAML config file into a fully resolved RunConfig."""
    with open(path) as f:
        text = f.read()
    return parse_config(text, source=str(path))


def parse_config(text, source="<config>"):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{source}: parse error{loc}: {e}") from e
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a key/value mapping")
    return config_from_dict(data, source)


def config_from_dict(data, source="<config>"):
    cleaned = {}
    for key, value in data.items():
        if key not in KNOWN_KEYS:
            hint = difflib.get_close_matches(key, sorted(KNOWN_KEYS), n=1)
            suggestion = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(f"{source}: unknown key {key!r}{suggestion}")
        cleaned[key] = _coerce(key, value, source)
    cfg = RunConfig(**cleaned)
    _validate(cfg, source)
    return cfg


def _coerce(key, value, source):
    if value is None:
        if key in _OPTIONAL_INT_KEYS | _OPTIONAL_FLOAT_KEYS:
            return None
        raise ConfigError(f"{source}: {key} must not be null")
    if key in _TUPLE_KEYS:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{source}: {key} must be a list")
        return tuple(value)
    return value


def _validate(cfg, source):
    if cfg.payload_multiple < 1 or int(cfg.payload_multiple) != cfg.payload_multiple:
        raise ConfigError(f"{source}: payload_multiple must be a positive integer")
    if cfg.links_per_vehicle not in (1, 2, 3):
        raise ConfigError(f"{source}: links_per_vehicle must be 1, 2 or 3")
    if not 0.0 < cfg.discount <= 1.0:
        raise ConfigError(f"{source}: discount must be in (0, 1]")
    if not 0.0 <= cfg.gae_lambda <= 1.0:
        raise ConfigError(f"{source}: gae_lambda must be in [0, 1]")
    if cfg.clip_ratio <= 0.0:
        raise ConfigError(f"{source}: clip_ratio must be positive")
    if cfg.learning_rate <= 0.0 or cfg.meta_step_size <= 0.0:
        raise ConfigError(f"{source}: step sizes must be positive")
    if cfg.tasks_per_loop < 1 or cfg.trajectories_per_loop < 1:
        raise ConfigError(f"{source}: schedule counts must be at least 1")
    if min(cfg.v2i_weight, cfg.v2v_weight) < 0.0:
        raise ConfigError(f"{source}: reward weights must be non-negative")
    if cfg.eval_mode not in ("sample", "greedy"):
        raise ConfigError(f"{source}: eval_mode must be 'sample' or 'greedy'")


def validate_schedule_against_set(cfg, set_size, source="<config>"):
    if cfg.tasks_per_loop > set_size:
        raise ConfigError(
            f"{source}: tasks_per_loop {cfg.tasks_per_loop} exceeds the "
            f"task-set size {set_size}"
        )


def emit_config(cfg):
    """YAML text that loads back to an equal RunConfig."""
    d = dataclasses.asdict(cfg)
    for key in _TUPLE_KEYS:
        d[key] = list(d[key])
    return yaml.safe_dump(d, sort_keys=True)


def config_hash(cfg):
    canonical = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=list)
    return hashlib.sha256(canonical.encode()).hexdigest()


def resolved_manifest(cfg, extra=None):
    """Everything a rerun needs: config plus all module constants."""
    doc = {
        "package_version": PACKAGE_VERSION,
        "config_hash": config_hash(cfg),
        "config": json.loads(json.dumps(dataclasses.asdict(cfg), default=list)),
        "channel_constants": channel.channel_constants(),
        "observation_constants": observation_constants(),
        "network_constants": {
            "hidden_layers": list(HIDDEN_LAYERS),
            "adam_beta1": ADAM_BETA1,
            "adam_beta2": ADAM_BETA2,
            "adam_eps": ADAM_EPS,
            "head_init_scale": HEAD_INIT_SCALE,
            "value_scale": cfg.value_scale,
            "weight_init": "uniform fan-in scaled (hidden), small uniform (head)",
        },
        "payload_unit_bits": PAYLOAD_UNIT_BITS,
        "task_grids": {name: g.as_dict() for name, g in NAMED_GRIDS.items()},
    }
    if extra:
        doc.update(extra)
    return doc


def write_manifest(path, cfg, extra=None):
    doc = resolved_manifest(cfg, extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return doc
