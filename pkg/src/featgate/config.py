"""Flat key=value experiment configuration files.

One key per line, ``#`` starts a comment, blank lines ignored. Keys are
namespaced with dots and mirror the simulator's knobs; unknown keys are
rejected so typos surface immediately. Lists use comma separation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UsageError
from .simnet import SimConfig


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int_list(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v.strip()]


def _parse_float_list(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


# key -> (parser, SimConfig field or None for run-level keys)
_KEYS = {
    "seed": (int, "seed"),
    "sim.n_nodes": (int, "n_nodes"),
    "sim.m": (int, "n_features"),
    "sim.w": (float, "w"),
    "sim.warmup_per_node": (int, "warmup_per_node"),
    "sim.arrivals": (int, "n_arrivals"),
    "sim.entry_policy": (str, "entry_policy"),
    "sim.novelty_enabled": (_parse_bool, "novelty_enabled"),
    "data.csv_path": (str, "csv_path"),
    "synth.separation": (float, "separation"),
    "synth.noise_std": (float, "noise_std"),
    "synth.irrelevant_fraction": (float, "irrelevant_fraction"),
    "nbc.p_min": (float, "p_min"),
    "nbc.variance_floor": (float, "variance_floor"),
    "pfi.repetitions": (int, "pfi_repetitions"),
    "pfi.loss": (str, "pfi_loss"),
    "shapley.m_iters": (int, "shapley_iters"),
    "shapley.n_instances": (int, "shapley_instances"),
    "importance.snapshot_max": (int, "snapshot_max"),
    "ann.c_hidden": (int, "ann_hidden"),
    "ann.lr": (float, "ann_lr"),
    "ann.max_epochs": (int, "ann_max_epochs"),
    "ann.target_mse": (float, "ann_target_mse"),
    "ann.expert_n": (int, "ann_expert_n"),
    "ann.expert_weights": (_parse_float_list, "ann_trust_weights"),
    "select.mode": (str, "selection_mode"),
    "select.threshold_d": (float, "threshold_d"),
    "stream.window_w": (int, "window_w"),
    "stream.alpha": (float, "alpha"),
    "stream.min_fill": (float, "min_fill"),
    # run-level keys, not part of SimConfig
    "grid.m_list": (_parse_int_list, None),
    "grid.w_list": (_parse_float_list, None),
    "parallel": (int, None),
    "ann.weights_file": (str, None),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed config file: simulator knobs plus grid and runner settings."""

    sim: SimConfig
    m_list: tuple[int, ...] = (10, 50, 100)
    w_list: tuple[float, ...] = (0.1, 0.2, 0.5)
    parallel: int = 1
    ann_weights_file: str | None = None


def parse_config_text(text: str, path: str = "<config>") -> ExperimentConfig:
    values: dict[str, object] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _KEYS:
            raise UsageError(f"{path}:{line_no}: unknown key {key!r}")
        parser, _ = _KEYS[key]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise UsageError(f"{path}:{line_no}: bad value for {key}: {exc}") from exc

    sim_kwargs = {}
    for key, parsed in values.items():
        _, attr = _KEYS[key]
        if attr is not None:
            sim_kwargs[attr] = parsed
    if "ann_trust_weights" in sim_kwargs:
        sim_kwargs["ann_trust_weights"] = tuple(sim_kwargs["ann_trust_weights"])

    run_kwargs = {}
    if "grid.m_list" in values:
        run_kwargs["m_list"] = tuple(values["grid.m_list"])
    if "grid.w_list" in values:
        run_kwargs["w_list"] = tuple(values["grid.w_list"])
    if "parallel" in values:
        run_kwargs["parallel"] = values["parallel"]
    if "ann.weights_file" in values:
        run_kwargs["ann_weights_file"] = values["ann.weights_file"]

    try:
        sim = SimConfig(**sim_kwargs)
    except Exception as exc:
        raise UsageError(f"{path}: {exc}") from exc
    return ExperimentConfig(sim=sim, **run_kwargs)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, str(path))
