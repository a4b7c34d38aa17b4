"""JSON run-configuration loading, validation, and round-tripping.

The on-disk format is a single JSON document (see ``data/config.schema.json``
and ``data/default_config.json``). Every validation failure raises
ConfigError whose message starts with the dotted path of the offending
field, so the CLI can surface it verbatim.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any

from .harness import BalanceSpec, ConfigError, SimConfig
from .policies import Mode, NoisyQuality, PolicyConfig, TruthfulQuality

__all__ = ["config_from_dict", "config_to_dict", "load_config",
           "default_config", "default_config_dict"]

_SIM_KEYS = {
    "n_agents", "n_rounds", "n_treatments", "initial_balance", "policy",
    "fee", "seed", "n_replicates", "coefficient_scope", "n_investors",
    "catalogue_threshold", "shared_population",
}
_POLICY_KEYS = {
    "mode", "consumer_selection", "learning_rate", "staking_rate_bounds",
    "skip_probability", "ratings_per_rater", "sign_model",
    "treatment_quality", "expertise_bounds", "quality_shock",
}


def _require(data: dict, key: str, kind, path: str):
    if key not in data:
        raise ConfigError(_join(path, key), "missing required field")
    value = data[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(_join(path, key), f"expected integer, got {value!r}")
    elif not isinstance(value, kind):
        raise ConfigError(
            _join(path, key), f"expected {kind.__name__}, got {value!r}")
    return value


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _pair(data: dict, key: str, path: str) -> tuple[float, float]:
    value = data.get(key)
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                       for v in value)):
        raise ConfigError(_join(path, key),
                          f"expected a [min, max] pair of numbers, got {value!r}")
    return float(value[0]), float(value[1])


def _sign_model_from_dict(data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {data!r}")
    kind = data.get("kind")
    if kind == "truthful_quality":
        return TruthfulQuality()
    if kind == "noisy_quality":
        eps = data.get("epsilon", 0.1)
        if not isinstance(eps, (int, float)) or isinstance(eps, bool):
            raise ConfigError(_join(path, "epsilon"),
                              f"expected number, got {eps!r}")
        try:
            return NoisyQuality(epsilon=float(eps))
        except ValueError as exc:
            raise ConfigError(_join(path, "epsilon"), str(exc)) from exc
    raise ConfigError(_join(path, "kind"),
                      f"must be 'truthful_quality' or 'noisy_quality', got {kind!r}")


def _policy_from_dict(data: Any, path: str = "policy") -> PolicyConfig:
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {data!r}")
    unknown = set(data) - _POLICY_KEYS
    if unknown:
        raise ConfigError(_join(path, sorted(unknown)[0]), "unknown field")
    mode_raw = _require(data, "mode", str, path)
    try:
        mode = Mode(mode_raw)
    except ValueError:
        raise ConfigError(_join(path, "mode"),
                          f"must be 'nonlearning' or 'learning', got {mode_raw!r}")
    quality_raw = data.get("treatment_quality")
    if not isinstance(quality_raw, list) or not all(
            isinstance(q, (int, float)) and not isinstance(q, bool)
            for q in quality_raw):
        raise ConfigError(_join(path, "treatment_quality"),
                          f"expected a list of numbers, got {quality_raw!r}")
    try:
        return PolicyConfig(
            mode=mode,
            consumer_selection=_require(data, "consumer_selection", bool, path),
            learning_rate=_require(data, "learning_rate", float, path),
            staking_rate_bounds=_pair(data, "staking_rate_bounds", path),
            skip_probability=_require(data, "skip_probability", float, path),
            ratings_per_rater=_require(data, "ratings_per_rater", int, path),
            sign_model=_sign_model_from_dict(
                data.get("sign_model"), _join(path, "sign_model")),
            treatment_quality={i: float(q) for i, q in enumerate(quality_raw)},
            expertise_bounds=_pair(data, "expertise_bounds", path),
            quality_shock=_require(data, "quality_shock", float, path),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def _balance_from_dict(data: Any, path: str = "initial_balance") -> BalanceSpec:
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected an object, got {data!r}")
    kind = data.get("kind")
    if kind == "constant":
        spec = BalanceSpec(kind="constant",
                           value=_require(data, "value", float, path))
    elif kind == "uniform":
        spec = BalanceSpec(kind="uniform",
                           low=_require(data, "low", float, path),
                           high=_require(data, "high", float, path))
    else:
        raise ConfigError(_join(path, "kind"),
                          f"must be 'constant' or 'uniform', got {kind!r}")
    spec.validate(path)
    return spec


def config_from_dict(data: Any) -> SimConfig:
    """Parse and fully validate a configuration document."""
    if not isinstance(data, dict):
        raise ConfigError("config", f"expected a JSON object, got {data!r}")
    unknown = set(data) - _SIM_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    config = SimConfig(
        n_agents=_require(data, "n_agents", int, ""),
        n_rounds=_require(data, "n_rounds", int, ""),
        n_treatments=_require(data, "n_treatments", int, ""),
        initial_balance=_balance_from_dict(data.get("initial_balance")),
        policy=_policy_from_dict(data.get("policy")),
        fee=float(data.get("fee", 0.0)),
        seed=_require(data, "seed", int, ""),
        n_replicates=_require(data, "n_replicates", int, ""),
        coefficient_scope=data.get("coefficient_scope", "per_agent"),
        n_investors=int(data.get("n_investors", 0)),
        catalogue_threshold=float(data.get("catalogue_threshold", 0.0)),
        shared_population=bool(data.get("shared_population", True)),
    )
    config.validate()
    n_q = len(config.policy.treatment_quality)
    if n_q != config.n_treatments:
        raise ConfigError(
            "policy.treatment_quality",
            f"length {n_q} does not match n_treatments {config.n_treatments}")
    return config


def config_to_dict(config: SimConfig) -> dict:
    """Inverse of config_from_dict; round-trips exactly."""
    balance = {"kind": config.initial_balance.kind}
    if config.initial_balance.kind == "constant":
        balance["value"] = config.initial_balance.value
    else:
        balance.update(low=config.initial_balance.low,
                       high=config.initial_balance.high)
    policy = config.policy
    if isinstance(policy.sign_model, TruthfulQuality):
        sign_model: dict[str, Any] = {"kind": "truthful_quality"}
    else:
        sign_model = {"kind": "noisy_quality", "epsilon": policy.sign_model.epsilon}
    return {
        "n_agents": config.n_agents,
        "n_rounds": config.n_rounds,
        "n_treatments": config.n_treatments,
        "initial_balance": balance,
        "policy": {
            "mode": policy.mode.value,
            "consumer_selection": policy.consumer_selection,
            "learning_rate": policy.learning_rate,
            "staking_rate_bounds": list(policy.staking_rate_bounds),
            "skip_probability": policy.skip_probability,
            "ratings_per_rater": policy.ratings_per_rater,
            "sign_model": sign_model,
            "treatment_quality": [policy.treatment_quality[t]
                                  for t in sorted(policy.treatment_quality)],
            "expertise_bounds": list(policy.expertise_bounds),
            "quality_shock": policy.quality_shock,
        },
        "fee": config.fee,
        "seed": config.seed,
        "n_replicates": config.n_replicates,
        "coefficient_scope": config.coefficient_scope,
        "n_investors": config.n_investors,
        "catalogue_threshold": config.catalogue_threshold,
        "shared_population": config.shared_population,
    }


def load_config(path: str | Path) -> SimConfig:
    """Load and validate a JSON configuration file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    return config_from_dict(data)


def default_config_dict() -> dict:
    """The versioned default configuration shipped with the package."""
    text = resources.files("catcon").joinpath("data/default_config.json") \
        .read_text(encoding="utf-8")
    return json.loads(text)


def default_config() -> SimConfig:
    return config_from_dict(default_config_dict())
