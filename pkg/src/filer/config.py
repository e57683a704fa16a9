"""Line-oriented ``key = value`` configuration files.

Blank lines and lines starting with ``#`` are ignored.  Unknown keys are an
error so typos do not silently fall back to defaults.
"""
from __future__ import annotations

import os
from dataclasses import replace

from .descriptor import LogPolarGrid
from .detector import DetectorParams, GuidedFilterParams
from .energy import EnergyConfig
from .errors import InvalidConfig
from .filterbank import FilterBankConfig
from .matcher import ConsensusParams, PipelineConfig

# key -> (section attribute on PipelineConfig or None for top level, field name, parser)
KEYS = {
    "n_scales": ("filter_bank", "n_scales", int),
    "n_orients": ("filter_bank", "n_orients", int),
    "min_wavelength": ("filter_bank", "min_wavelength", float),
    "scale_mult": ("filter_bank", "scale_mult", float),
    "sigma_f_ratio": ("filter_bank", "sigma_f_ratio", float),
    "sigma_theta": ("filter_bank", "sigma_theta", float),
    "literal_filter": ("filter_bank", "literal_form", None),
    "k_noise": ("energy", "k_noise", float),
    "noise_threshold": ("energy", "noise_threshold", float),
    "spread_cutoff": ("energy", "spread_cutoff", float),
    "spread_gain": ("energy", "spread_gain", float),
    "epsilon": ("energy", "epsilon", float),
    "rectify": ("energy", "rectify", str),
    "sigma_s": ("guided", "sigma_s", float),
    "sigma_r": ("guided", "sigma_r", float),
    "window_radius": ("guided", "window_radius", int),
    "fast_threshold": ("detector", "fast_threshold", float),
    "nonmax_radius": ("detector", "nonmax_radius", int),
    "max_features": ("detector", "max_features", int),
    "border_margin": ("detector", "border_margin", int),
    "radius": ("grid", "radius", float),
    "delta": ("consensus", "delta", float),
    "max_iterations": ("consensus", "max_iterations", int),
    "seed": ("consensus", "rng_seed", int),
    "min_inliers": ("consensus", "min_inliers", int),
    "sample_pool": ("consensus", "sample_pool", int),
    "coarse_delta": (None, "coarse_delta", float),
    "weight_sigma": (None, "weight_sigma", float),
    "rotation_compensation": (None, "rotation_compensation", None),
    "direction_bins": (None, "direction_bins", int),
    "coarse_polarity": (None, "coarse_polarity", None),
}

_SECTIONS = {
    "filter_bank": FilterBankConfig,
    "energy": EnergyConfig,
    "guided": GuidedFilterParams,
    "detector": DetectorParams,
    "grid": LogPolarGrid,
    "consensus": ConsensusParams,
}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise InvalidConfig(f"not a boolean: {text!r}")


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise InvalidConfig(f"line {lineno}: unknown key {key!r}")
        parser = KEYS[key][2]
        try:
            if value.lower() in ("none", "auto") and key in ("sigma_theta", "sigma_r", "noise_threshold"):
                values[key] = None
            else:
                values[key] = _parse_bool(value) if parser is None else parser(value)
        except ValueError as exc:
            raise InvalidConfig(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return values


def build_config(values: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    base = base or PipelineConfig()
    sections = {name: {} for name in _SECTIONS}
    top = {}
    for key, value in values.items():
        section, fname, _ = KEYS[key]
        (sections[section] if section else top)[fname] = value
    kwargs = dict(top)
    for name, updates in sections.items():
        if updates:
            kwargs[name] = replace(getattr(base, name), **updates)
    if "radius" in values and "border_margin" not in values:
        margin = max(base.detector.border_margin, int(-(-values["radius"] // 1)))
        kwargs["detector"] = replace(kwargs.get("detector", base.detector), border_margin=margin)
    cfg = replace(base, **kwargs)
    # the noise estimator needs the bank's scale ratio
    if cfg.energy.scale_mult != cfg.filter_bank.scale_mult:
        cfg = replace(cfg, energy=replace(cfg.energy, scale_mult=cfg.filter_bank.scale_mult))
    return cfg


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    with open(os.fspath(path)) as fh:
        return build_config(parse_config_text(fh.read()))


def dump_config(cfg: PipelineConfig) -> str:
    """Render every documented key with its current value."""
    lines = []
    for key, (section, fname, _) in KEYS.items():
        obj = getattr(cfg, section) if section else cfg
        value = getattr(obj, fname)
        if value is None:
            value = "auto"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
