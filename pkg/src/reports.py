import csv
import json
import re
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Optional

from errors import ConfigError

SWEEP_COLUMNS = ("regime", "d_star", "slope", "premium", "rdeu_value", "residual")
CURVE_COLUMNS = ("x", "I_star", "R_star", "L", "tk_S", "tb_S")


def resolve_output(path, base: Path) -> Path:
    """Relative output paths land under the configured output directory."""
    path = Path(path)
    return path if path.is_absolute() else base / path


@contextmanager
def open_output(path: Path, newline: Optional[str] = None):
    """Context manager for output files; creates parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    f = open(path, "w", encoding="utf-8", newline=newline)
    try:
        yield f
    finally:
        f.close()


def _clean(value):
    """JSON-safe value: inf and nan become null."""
    if isinstance(value, float) and (value != value or value in (float("inf"), float("-inf"))):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "tolist"):
        return _clean(value.tolist())
    return value


def to_json(data: dict) -> str:
    return json.dumps(_clean(data), indent=2, sort_keys=True)


def write_json(path: Path, data: dict) -> Path:
    with open_output(path) as f:
        f.write(to_json(data) + "\n")
    return Path(path)


def _cell(value):
    value = _clean(value)
    return "" if value is None else value


def write_csv(path: Path, rows: Iterable[dict], columns: Iterable[str]) -> Path:
    """Header line always, then one line per row in column order."""
    columns = list(columns)
    with open_output(path, newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
    return Path(path)


def locate_key(text: str, key: str) -> Optional[int]:
    """1-based line of the first occurrence of "key" as a JSON object key."""
    pattern = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for lineno, line in enumerate(text.splitlines(), start=1):
        if pattern.search(line):
            return lineno
    return None


def anchor_error(err: ConfigError, text: str) -> ConfigError:
    """Attach the source line of the innermost key named in a 'path.to.key: ...' message."""
    if err.line is not None:
        return err
    message = str(err)
    head = message.split(":", 1)[0]
    keys = [k for k in re.split(r"[.\[\]]", head) if k and not k.isdigit()]
    quoted = re.findall(r"'([^']+)'", message)
    for key in quoted[:1] + keys[::-1]:
        line = locate_key(text, key)
        if line is not None:
            return ConfigError(message, line)
    return err


def read_json(path: Path) -> tuple[dict, str]:
    """Parse a JSON file; returns the data and its source text for error anchoring."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path.name}: {e.msg} (column {e.colno})", e.lineno)
    if not isinstance(data, dict):
        raise ConfigError(f"{path.name}: top level must be an object", 1)
    return data, text
