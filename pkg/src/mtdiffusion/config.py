"""Config-file schema, validation and builders.

Configs are YAML with five sections: ``network``, ``model``, ``algorithm``,
``experiment`` and ``output``.  Parsing normalizes the document (defaults
applied) into plain Python containers, rejects unknown keys at every level,
and round-trips exactly through :func:`save_config` / :func:`load_config`.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml

from .datagen import LinearModelSpec, LocalizationSpec, ModelSpec
from .harness import ExperimentConfig, VARIANTS
from .network import NetworkSpec, random_geometric_network, random_ring_network


class ConfigError(ValueError):
    """Schema violation, with the offending key path in the message."""


def _require_keys(section: dict, known: dict, path: str):
    for key in section:
        if key not in known:
            raise ConfigError(f"unknown key '{path}.{key}'")
    for key, required in known.items():
        if required and key not in section:
            raise ConfigError(f"missing required key '{path}.{key}'")


def _as_int(value, path, minimum=None):
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"'{path}' must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"'{path}' must be >= {minimum}")
    return value


def _as_number(value, path, minimum=None, strict=False):
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"'{path}' must be a number")
    value = float(value)
    if minimum is not None and (value < minimum or (strict and value == minimum)):
        op = ">" if strict else ">="
        raise ConfigError(f"'{path}' must be {op} {minimum}")
    return value


def _as_choice(value, path, choices):
    if value not in choices:
        raise ConfigError(f"'{path}' must be one of {sorted(choices)}")
    return value


def _as_scalar_or_list(value, path, n=None, minimum=None, strict=False):
    if isinstance(value, list):
        out = [_as_number(v, f"{path}[{i}]", minimum, strict) for i, v in enumerate(value)]
        if n is not None and len(out) != n:
            raise ConfigError(f"'{path}' must have {n} entries")
        return out
    return _as_number(value, path, minimum, strict)


def _as_vector_list(value, path, width=None):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"'{path}' must be a non-empty list of vectors")
    out = []
    for i, row in enumerate(value):
        if not isinstance(row, list):
            raise ConfigError(f"'{path}[{i}]' must be a list")
        if width is not None and len(row) != width:
            raise ConfigError(f"'{path}[{i}]' must have {width} entries")
        out.append([_as_number(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)])
    return out


def _normalize_network(section: dict) -> dict:
    path = "network"
    known = {"nodes": False, "edges": False, "clusters": False,
             "filter_length": False, "positions": False, "generator": False}
    _require_keys(section, known, path)
    out = {"filter_length": _as_int(section.get("filter_length", 2),
                                    f"{path}.filter_length", 1)}
    if "generator" in section:
        for key in ("nodes", "edges", "clusters", "positions"):
            if key in section:
                raise ConfigError(f"'{path}.{key}' conflicts with '{path}.generator'")
        gen = section["generator"]
        gknown = {"type": True, "nodes": True, "radius": True, "seed": True,
                  "clusters": False, "area": False, "center": False,
                  "ring_radius": False, "ring_width": False}
        _require_keys(gen, gknown, f"{path}.generator")
        g = {"type": _as_choice(gen["type"], f"{path}.generator.type",
                                {"geometric", "ring"}),
             "nodes": _as_int(gen["nodes"], f"{path}.generator.nodes", 1),
             "radius": _as_number(gen["radius"], f"{path}.generator.radius", 0.0, True),
             "seed": _as_int(gen["seed"], f"{path}.generator.seed"),
             "clusters": _as_int(gen.get("clusters", 1), f"{path}.generator.clusters", 1)}
        if g["type"] == "geometric":
            g["area"] = _as_number(gen.get("area", 1.0), f"{path}.generator.area", 0.0, True)
            for key in ("center", "ring_radius", "ring_width"):
                if key in gen:
                    raise ConfigError(f"'{path}.generator.{key}' only applies to type 'ring'")
        else:
            center = gen.get("center")
            if not isinstance(center, list) or len(center) != 2:
                raise ConfigError(f"'{path}.generator.center' must be [x, y]")
            g["center"] = [_as_number(v, f"{path}.generator.center[{i}]")
                           for i, v in enumerate(center)]
            g["ring_radius"] = _as_number(gen.get("ring_radius", 0),
                                          f"{path}.generator.ring_radius", 0.0, True)
            g["ring_width"] = _as_number(gen.get("ring_width", 0),
                                         f"{path}.generator.ring_width", 0.0, True)
            if "area" in gen:
                raise ConfigError(f"'{path}.generator.area' only applies to type 'geometric'")
        out["generator"] = g
        return out
    for key in ("nodes", "edges", "clusters"):
        if key not in section:
            raise ConfigError(f"'{path}.{key}' is required for an inline network")
    n = _as_int(section["nodes"], f"{path}.nodes", 1)
    edges = section["edges"]
    if not isinstance(edges, list):
        raise ConfigError(f"'{path}.edges' must be a list of [k, l] pairs")
    norm_edges = []
    for i, e in enumerate(edges):
        if (not isinstance(e, list)) or len(e) != 2:
            raise ConfigError(f"'{path}.edges[{i}]' must be a [k, l] pair")
        k = _as_int(e[0], f"{path}.edges[{i}][0]", 0)
        l = _as_int(e[1], f"{path}.edges[{i}][1]", 0)
        if k >= n or l >= n:
            raise ConfigError(f"'{path}.edges[{i}]' references a node >= nodes")
        norm_edges.append([k, l])
    clusters = section["clusters"]
    if not isinstance(clusters, list) or len(clusters) != n:
        raise ConfigError(f"'{path}.clusters' must list one cluster id per node")
    clusters = [_as_int(c, f"{path}.clusters[{i}]", 0) for i, c in enumerate(clusters)]
    out.update({"nodes": n, "edges": norm_edges, "clusters": clusters})
    if "positions" in section:
        out["positions"] = _as_vector_list(section["positions"], f"{path}.positions", 2)
        if len(out["positions"]) != n:
            raise ConfigError(f"'{path}.positions' must have one entry per node")
    return out


def _normalize_model(section: dict) -> dict:
    path = "model"
    mtype = _as_choice(section.get("type"), f"{path}.type", {"linear", "localization"})
    if mtype == "linear":
        known = {"type": True, "cluster_optima": True,
                 "input_variance": True, "noise_variance": True}
        _require_keys(section, known, path)
        return {
            "type": "linear",
            "cluster_optima": _as_vector_list(section["cluster_optima"],
                                              f"{path}.cluster_optima"),
            "input_variance": _as_scalar_or_list(section["input_variance"],
                                                 f"{path}.input_variance",
                                                 minimum=0.0, strict=True),
            "noise_variance": _as_scalar_or_list(section["noise_variance"],
                                                 f"{path}.noise_variance", minimum=0.0),
        }
    known = {"type": True, "targets": True, "sigma_alpha": True,
             "sigma_beta": True, "sigma_v": True}
    _require_keys(section, known, path)
    return {
        "type": "localization",
        "targets": _as_vector_list(section["targets"], f"{path}.targets", 2),
        "sigma_alpha": _as_scalar_or_list(section["sigma_alpha"],
                                          f"{path}.sigma_alpha", minimum=0.0),
        "sigma_beta": _as_scalar_or_list(section["sigma_beta"],
                                         f"{path}.sigma_beta", minimum=0.0),
        "sigma_v": _as_scalar_or_list(section["sigma_v"],
                                      f"{path}.sigma_v", minimum=0.0),
    }


def _normalize_algorithm(section: dict) -> dict:
    path = "algorithm"
    known = {"variants": False, "hyperparams": True, "combination": False,
             "measurement": False, "regularization": False, "matrices": False}
    _require_keys(section, known, path)
    variants = section.get("variants", ["clustered"])
    if not isinstance(variants, list) or not variants:
        raise ConfigError(f"'{path}.variants' must be a non-empty list")
    for i, v in enumerate(variants):
        _as_choice(v, f"{path}.variants[{i}]", set(VARIANTS))
    pairs = section["hyperparams"]
    if not isinstance(pairs, list) or not pairs:
        raise ConfigError(f"'{path}.hyperparams' must be a non-empty list")
    norm_pairs = []
    for i, pair in enumerate(pairs):
        if not isinstance(pair, dict):
            raise ConfigError(f"'{path}.hyperparams[{i}]' must be a mapping with mu, tau")
        _require_keys(pair, {"mu": True, "tau": False}, f"{path}.hyperparams[{i}]")
        norm_pairs.append({
            "mu": _as_number(pair["mu"], f"{path}.hyperparams[{i}].mu", 0.0),
            "tau": _as_number(pair.get("tau", 0.0), f"{path}.hyperparams[{i}].tau", 0.0),
        })
    out = {
        "variants": list(variants),
        "hyperparams": norm_pairs,
        "combination": _as_choice(section.get("combination", "uniform"),
                                  f"{path}.combination", {"uniform", "identity"}),
        "measurement": _as_choice(section.get("measurement", "identity"),
                                  f"{path}.measurement", {"identity", "uniform"}),
        "regularization": _as_choice(section.get("regularization", "uniform"),
                                     f"{path}.regularization", {"uniform", "none"}),
    }
    if "matrices" in section:
        mats = section["matrices"]
        _require_keys(mats, {"A": False, "C": False, "P": False}, f"{path}.matrices")
        out["matrices"] = {name: _as_vector_list(mats[name], f"{path}.matrices.{name}")
                           for name in mats}
    return out


def _normalize_experiment(section: dict) -> dict:
    path = "experiment"
    known = {"runs": True, "iterations": True, "seed": True, "workers": False}
    _require_keys(section, known, path)
    return {
        "runs": _as_int(section["runs"], f"{path}.runs", 1),
        "iterations": _as_int(section["iterations"], f"{path}.iterations", 1),
        "seed": _as_int(section["seed"], f"{path}.seed"),
        "workers": _as_int(section.get("workers", 1), f"{path}.workers", 1),
    }


def _normalize_output(section: dict) -> dict:
    path = "output"
    known = {"directory": False, "formats": False}
    _require_keys(section, known, path)
    out = {"formats": section.get("formats", ["csv"])}
    if not isinstance(out["formats"], list) or not out["formats"]:
        raise ConfigError(f"'{path}.formats' must be a non-empty list")
    for i, fmt in enumerate(out["formats"]):
        _as_choice(fmt, f"{path}.formats[{i}]", {"csv", "gnuplot"})
    if "directory" in section:
        if not isinstance(section["directory"], str):
            raise ConfigError(f"'{path}.directory' must be a string")
        out["directory"] = section["directory"]
    return out


@dataclass(frozen=True)
class Config:
    """A validated, normalized configuration document."""

    network: dict
    model: dict
    algorithm: dict
    experiment: dict
    output: dict

    def to_dict(self) -> dict:
        return {"network": self.network, "model": self.model,
                "algorithm": self.algorithm, "experiment": self.experiment,
                "output": self.output}


def parse_config(doc: dict) -> Config:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    known = {"network": True, "model": True, "algorithm": True,
             "experiment": True, "output": False}
    _require_keys(doc, known, "<root>")
    cfg = Config(
        network=_normalize_network(doc["network"]),
        model=_normalize_model(doc["model"]),
        algorithm=_normalize_algorithm(doc["algorithm"]),
        experiment=_normalize_experiment(doc["experiment"]),
        output=_normalize_output(doc.get("output", {})),
    )
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: Config):
    net = cfg.network
    n = net["generator"]["nodes"] if "generator" in net else net["nodes"]
    q = (net["generator"]["clusters"] if "generator" in net
         else max(net["clusters"]) + 1)
    model = cfg.model
    if model["type"] == "linear":
        optima = model["cluster_optima"]
        if len(optima) != q:
            raise ConfigError("model.cluster_optima must have one row per cluster")
        if any(len(row) != net["filter_length"] for row in optima):
            raise ConfigError("model.cluster_optima rows must match network.filter_length")
        for key in ("input_variance", "noise_variance"):
            if isinstance(model[key], list) and len(model[key]) != n:
                raise ConfigError(f"model.{key} must be a scalar or one value per node")
    else:
        if net["filter_length"] != 2:
            raise ConfigError("localization requires network.filter_length = 2")
        if len(model["targets"]) != q:
            raise ConfigError("model.targets must have one entry per cluster")
        if "generator" not in net and "positions" not in net:
            raise ConfigError("localization requires node positions "
                              "(inline or from a generator)")
        for key in ("sigma_alpha", "sigma_beta", "sigma_v"):
            if isinstance(model[key], list) and len(model[key]) != n:
                raise ConfigError(f"model.{key} must be a scalar or one value per node")
    for name, rows in cfg.algorithm.get("matrices", {}).items():
        if len(rows) != n or any(len(row) != n for row in rows):
            raise ConfigError(f"algorithm.matrices.{name} must be an {n}x{n} matrix")


def load_config(path) -> Config:
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(doc)


def save_config(cfg: Config, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True, default_flow_style=None)


def load_bundled_config(name: str) -> Config:
    """Load one of the configs shipped with the package (by stem name)."""
    text = (resources.files("mtdiffusion") / "data" / f"{name}.yaml").read_text()
    return parse_config(yaml.safe_load(text))


def bundled_config_path(name: str) -> str:
    return str(resources.files("mtdiffusion") / "data" / f"{name}.yaml")


def build_network(cfg: Config) -> NetworkSpec:
    net = cfg.network
    if "generator" in net:
        g = net["generator"]
        if g["type"] == "geometric":
            return random_geometric_network(
                g["nodes"], g["area"], g["radius"], g["seed"],
                n_clusters=g["clusters"], filter_length=net["filter_length"])
        return random_ring_network(
            g["nodes"], g["center"], g["ring_radius"], g["ring_width"],
            g["radius"], g["seed"], n_clusters=g["clusters"],
            filter_length=net["filter_length"])
    return NetworkSpec.from_edges(
        net["nodes"], net["edges"], net["clusters"], net["filter_length"],
        positions=np.array(net["positions"]) if "positions" in net else None)


def build_model(cfg: Config, spec: NetworkSpec) -> ModelSpec:
    model = cfg.model
    if model["type"] == "linear":
        return LinearModelSpec(
            optima=np.array(model["cluster_optima"]),
            sigma2_x=np.asarray(model["input_variance"]),
            sigma2_z=np.asarray(model["noise_variance"]),
            clusters=spec.clusters,
        )
    if spec.positions is None:
        raise ConfigError("localization model requires node positions")
    return LocalizationSpec(
        node_positions=spec.positions,
        targets=np.array(model["targets"]),
        sigma_alpha=np.asarray(model["sigma_alpha"]),
        sigma_beta=np.asarray(model["sigma_beta"]),
        sigma_v=np.asarray(model["sigma_v"]),
        clusters=spec.clusters,
    )


def explicit_matrices(cfg: Config):
    """Explicit A/C/P overrides from the config, as arrays (or None each)."""
    mats = cfg.algorithm.get("matrices", {})
    return tuple(np.array(mats[name], dtype=float) if name in mats else None
                 for name in ("A", "C", "P"))


def build_experiment(cfg: Config, seed=None, runs=None, workers=None) -> ExperimentConfig:
    """Materialize the experiment; keyword arguments override the config."""
    spec = build_network(cfg)
    model = build_model(cfg, spec)
    exp = cfg.experiment
    alg = cfg.algorithm
    a, c, p = explicit_matrices(cfg)
    return ExperimentConfig(
        spec=spec,
        model=model,
        hyperparams=[(pair["mu"], pair["tau"]) for pair in alg["hyperparams"]],
        n_runs=runs if runs is not None else exp["runs"],
        n_iters=exp["iterations"],
        seed=seed if seed is not None else exp["seed"],
        variants=tuple(alg["variants"]),
        combination_rule=alg["combination"],
        measurement_rule=alg["measurement"],
        regularization_rule=alg["regularization"],
        workers=workers if workers is not None else exp["workers"],
        attach_theory=cfg.model["type"] == "linear",
        explicit_a=a, explicit_c=c, explicit_p=p,
    )
