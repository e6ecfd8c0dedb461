"""Model parameters as TOML documents.

One document holds one model: either the two-voice merged model or a
metrical-baseline parameter set, tagged by ``kind`` and a format ``version``.
Reading is strict — unknown keys and version mismatches are rejected so a
drifted or truncated config fails immediately rather than decoding with
defaults.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .baselines import MetricalParams
from .core import FormatError, NoteValueGrid
from .merged_model import MergedModelParams
from .voice_model import VoiceHmmParams

__all__ = [
    "FORMAT_VERSION",
    "dumps_params",
    "loads_params",
    "write_params_toml",
    "read_params_toml",
]

FORMAT_VERSION = 1

_VOICE_SCALARS = ("mu_p", "sigma_p", "u_ini", "sigma_v_ini", "sigma_v", "sigma_t", "lam")
_METRICAL_SCALARS = ("u_ini", "sigma_v_ini", "sigma_v", "sigma_t", "lam")


def _fmt(value) -> str:
    if isinstance(value, bool):
        raise TypeError("no boolean fields in parameter documents")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    raise TypeError(f"cannot format {type(value).__name__} as TOML")


def _fmt_list(values) -> str:
    return "[" + ", ".join(_fmt(v) for v in values) + "]"


def _fmt_matrix(rows) -> str:
    inner = ",\n  ".join(_fmt_list(row) for row in rows)
    return "[\n  " + inner + ",\n]"


def _voice_section(name: str, voice: VoiceHmmParams) -> list[str]:
    lines = [f"[{name}]"]
    for key in _VOICE_SCALARS:
        lines.append(f"{key} = {_fmt(getattr(voice, key))}")
    lines.append(f"pi_ini = {_fmt_list(voice.pi_ini)}")
    lines.append(f"beta = {_fmt_list(voice.beta)}")
    lines.append(f"gamma = {_fmt_list(voice.gamma)}")
    lines.append(f"theta_interval = {_fmt_list(voice.theta_interval)}")
    lines.append(f"pi = {_fmt_matrix(voice.pi)}")
    return lines


def dumps_params(params) -> str:
    """Serialize merged or metrical parameters to a TOML string."""
    lines = [f"version = {FORMAT_VERSION}"]
    if isinstance(params, MergedModelParams):
        params.validate()
        lines.append('kind = "merged"')
        lines.append("")
        lines.append("[grid]")
        lines.append(f"values = {_fmt_list(params.grid.values)}")
        lines.append(f"ticks_per_quarter = {_fmt(params.grid.ticks_per_quarter)}")
        lines.append("")
        lines.append("[voices]")
        lines.append(f"span_threshold = {_fmt(params.span_threshold)}")
        lines.append(f"alpha = {_fmt_matrix(params.alpha)}")
        lines.append("")
        lines.extend(_voice_section("voice1", params.voice1))
        lines.append("")
        lines.extend(_voice_section("voice2", params.voice2))
    elif isinstance(params, MetricalParams):
        params.validate()
        lines.append('kind = "metrical"')
        lines.append("")
        lines.append("[metrical]")
        lines.append(f"bar_ticks = {_fmt(params.bar_ticks)}")
        for key in _METRICAL_SCALARS:
            lines.append(f"{key} = {_fmt(getattr(params, key))}")
        lines.append(f"initial = {_fmt_list(params.initial)}")
        lines.append(f"transition = {_fmt_matrix(params.transition)}")
    else:
        raise TypeError(f"cannot serialize {type(params).__name__}")
    return "\n".join(lines) + "\n"


def _take(table: dict, key: str, context: str):
    if key not in table:
        raise FormatError(f"missing key {key!r} in {context}")
    return table.pop(key)


def _reject_unknown(table: dict, context: str):
    if table:
        raise FormatError(f"unknown keys in {context}: {sorted(table)}")


def _load_voice(table: dict, grid: NoteValueGrid, context: str) -> VoiceHmmParams:
    kwargs = {key: float(_take(table, key, context)) for key in _VOICE_SCALARS}
    pi_ini = np.array(_take(table, "pi_ini", context), dtype=float)
    beta = np.array(_take(table, "beta", context), dtype=float)
    gamma = np.array(_take(table, "gamma", context), dtype=float)
    theta = np.array(_take(table, "theta_interval", context), dtype=float)
    pi = np.array(_take(table, "pi", context), dtype=float)
    _reject_unknown(table, context)
    try:
        return VoiceHmmParams(
            grid=grid, pi_ini=pi_ini, pi=pi, beta=beta, gamma=gamma,
            theta_interval=theta, **kwargs,
        )
    except ValueError as exc:
        raise FormatError(f"{context}: {exc}") from None


def loads_params(text: str):
    """Parse a TOML parameter document into the matching params object."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise FormatError(f"invalid TOML: {exc}") from None
    version = _take(doc, "version", "document")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported parameter format version {version!r}")
    kind = _take(doc, "kind", "document")
    if kind == "merged":
        grid_tbl = _take(doc, "grid", "document")
        values = _take(grid_tbl, "values", "[grid]")
        tpq = _take(grid_tbl, "ticks_per_quarter", "[grid]")
        _reject_unknown(grid_tbl, "[grid]")
        try:
            grid = NoteValueGrid(tuple(int(v) for v in values), int(tpq))
        except ValueError as exc:
            raise FormatError(f"[grid]: {exc}") from None
        voices_tbl = _take(doc, "voices", "document")
        span = int(_take(voices_tbl, "span_threshold", "[voices]"))
        alpha = np.array(_take(voices_tbl, "alpha", "[voices]"), dtype=float)
        _reject_unknown(voices_tbl, "[voices]")
        voice1 = _load_voice(_take(doc, "voice1", "document"), grid, "[voice1]")
        voice2 = _load_voice(_take(doc, "voice2", "document"), grid, "[voice2]")
        _reject_unknown(doc, "document")
        try:
            params = MergedModelParams(
                voice1=voice1, voice2=voice2, alpha=alpha, span_threshold=span
            )
            params.validate()
        except ValueError as exc:
            raise FormatError(str(exc)) from None
        return params
    if kind == "metrical":
        tbl = _take(doc, "metrical", "document")
        bar_ticks = int(_take(tbl, "bar_ticks", "[metrical]"))
        scalars = {key: float(_take(tbl, key, "[metrical]")) for key in _METRICAL_SCALARS}
        initial = np.array(_take(tbl, "initial", "[metrical]"), dtype=float)
        transition = np.array(_take(tbl, "transition", "[metrical]"), dtype=float)
        _reject_unknown(tbl, "[metrical]")
        _reject_unknown(doc, "document")
        try:
            return MetricalParams(
                bar_ticks=bar_ticks, initial=initial, transition=transition, **scalars
            )
        except ValueError as exc:
            raise FormatError(str(exc)) from None
    raise FormatError(f"unknown parameter kind {kind!r}")


def write_params_toml(params, path):
    Path(path).write_text(dumps_params(params), encoding="utf-8")


def read_params_toml(path):
    return loads_params(Path(path).read_text(encoding="utf-8"))
