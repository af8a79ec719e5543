"""Minimal deterministic TOML emission and loading.

The stdlib ships a TOML reader only (tomllib on 3.11+, the tomli backport on
3.10). Configs here are flat scalar keys plus one level of sections whose
values are scalars or lists of scalars, so a small writer suffices and keeps
output bytes deterministic.
"""
from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def loads(text: str) -> dict:
    return tomllib.loads(text)


def load_path(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _format_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        # TOML floats need a dot or exponent; repr already provides one
        # except for infinities/nans, which configs never contain.
        return text
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    raise TypeError(f"unsupported TOML scalar type: {type(value).__name__}")


def _format_value(value) -> str:
    if isinstance(value, (list, tuple)):
        inner = ", ".join(_format_scalar(v) for v in value)
        return f"[{inner}]"
    return _format_scalar(value)


def _emit_table(path: str, body: dict, lines: list[str]) -> None:
    scalars = [(k, v) for k, v in body.items() if not isinstance(v, dict)]
    tables = [(k, v) for k, v in body.items() if isinstance(v, dict)]
    if path and (scalars or not tables):
        if lines:
            lines.append("")
        lines.append(f"[{path}]")
    for key, value in scalars:
        lines.append(f"{key} = {_format_value(value)}")
    for key, value in tables:
        _emit_table(f"{path}.{key}" if path else key, value, lines)


def dumps(data: dict) -> str:
    """Serialize a dict of scalars, lists, and nested dicts to TOML.

    Nested dicts become dotted table headers; key order is preserved, which
    keeps the output bytes deterministic for deterministic inputs.
    """
    lines: list[str] = []
    scalars = {k: v for k, v in data.items() if not isinstance(v, dict)}
    for key, value in scalars.items():
        lines.append(f"{key} = {_format_value(value)}")
    for key, value in data.items():
        if isinstance(value, dict):
            _emit_table(key, value, lines)
    return "\n".join(lines) + "\n"


def dump_path(data: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(data))
