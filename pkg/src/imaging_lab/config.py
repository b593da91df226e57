"""Structured text configs: key = value lines grouped in [sections].

Uses configparser underneath so files stay diff-friendly and dependency-free.
All writers emit keys in sorted order so a rerun byte-reproduces the file.
"""

import configparser
import io

import numpy as np

from .sampling import (
    CtInterior,
    CtSparseView,
    MriUniform,
    MriUniformPlus,
    SamplingPattern,
)
from .xform import RadonConfig


class ConfigError(ValueError):
    """Bad or missing configuration values (CLI exit code 1)."""


def _parser():
    p = configparser.ConfigParser(interpolation=None)
    p.optionxform = str  # keep key case
    return p


def read_config(path):
    p = _parser()
    try:
        with open(path, "r", encoding="ascii") as f:
            p.read_file(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except configparser.Error as e:
        raise ConfigError(f"malformed config {path}: {e}") from e
    return {s: dict(p.items(s)) for s in p.sections()}


def write_config(path, sections):
    p = _parser()
    for name in sections:
        p.add_section(name)
        for key in sorted(sections[name]):
            p.set(name, key, str(sections[name][key]))
    buf = io.StringIO()
    p.write(buf)
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(buf.getvalue())


def _ints(text):
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def _floats(text):
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def pattern_to_section(pattern: SamplingPattern):
    s = pattern.scheme
    sec = {}
    if isinstance(s, MriUniform):
        sec.update(modality="mri", scheme="uniform", size=s.size, factor=s.factor)
    elif isinstance(s, MriUniformPlus):
        sec.update(
            modality="mri",
            scheme="uniform_plus",
            size=s.size,
            factor=s.factor,
            extra_line_indices=",".join(str(i) for i in s.extra_line_indices),
        )
    elif isinstance(s, CtSparseView):
        sec.update(
            modality="ct",
            scheme="sparse_view",
            n_angles=s.radon_cfg.n_angles,
            n_detectors=s.radon_cfg.n_detectors,
            kept_angles=",".join(str(i) for i in s.kept_angle_indices),
            image_side=pattern.image_side,
        )
    elif isinstance(s, CtInterior):
        sec.update(
            modality="ct",
            scheme="interior",
            n_angles=s.radon_cfg.n_angles,
            n_detectors=s.radon_cfg.n_detectors,
            roi_center=f"{s.roi_center[0]},{s.roi_center[1]}",
            roi_radius=s.roi_radius,
            image_side=pattern.image_side,
        )
    else:
        raise ConfigError(f"unknown scheme {type(s).__name__}")
    return sec


def pattern_from_section(sec):
    try:
        scheme = sec["scheme"]
        if scheme == "uniform":
            return SamplingPattern(
                MriUniform(int(sec["size"]), int(sec.get("factor", 4)))
            )
        if scheme == "uniform_plus":
            size = int(sec["size"])
            factor = int(sec.get("factor", 4))
            if "extra_line_indices" in sec:
                return SamplingPattern(
                    MriUniformPlus(
                        size, factor, extra_line_indices=_ints(sec["extra_line_indices"])
                    )
                )
            return SamplingPattern(
                MriUniformPlus(size, factor, extra_lines=int(sec.get("extra_lines", 1)))
            )
        cfg = RadonConfig(
            n_angles=int(sec["n_angles"]),
            n_detectors=int(sec.get("n_detectors", 0)),
        )
        side = int(sec.get("image_side", 0))
        if scheme == "sparse_view":
            if "kept_angles" in sec:
                view = CtSparseView(cfg, _ints(sec["kept_angles"]))
            else:
                view = CtSparseView.equispaced(cfg, int(sec["kept_count"]))
            return SamplingPattern(view, side)
        if scheme == "interior":
            cx, cy = _floats(sec["roi_center"])
            return SamplingPattern(
                CtInterior(cfg, (cx, cy), float(sec["roi_radius"])), side
            )
        raise ConfigError(f"unknown scheme {scheme!r}")
    except KeyError as e:
        raise ConfigError(f"pattern section missing key {e}") from e
    except ValueError as e:
        raise ConfigError(f"bad pattern value: {e}") from e


def save_pattern(path, pattern: SamplingPattern):
    write_config(path, {"pattern": pattern_to_section(pattern)})


def load_pattern(path) -> SamplingPattern:
    sections = read_config(path)
    if "pattern" not in sections:
        raise ConfigError(f"{path} has no [pattern] section")
    return pattern_from_section(sections["pattern"])
