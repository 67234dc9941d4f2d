from collections.abc import Iterable, Sequence
import csv
import hashlib
import io
import json
import math
from typing import Any

from pydantic import BaseModel


def derive_seed(seed: int, index: int) -> int:
    """
    Derive a deterministic 64-bit seed for the ``index``-th independent run from a base seed.

    SHA-256 of "seed|index" keeps restarts decorrelated while making the whole run reproducible.
    """
    combined_input = f"{seed}|{index}"
    hash_hex = hashlib.sha256(combined_input.encode("utf-8")).hexdigest()

    # first 16 hex characters -> unsigned 64-bit integer
    return int(hash_hex[:16], 16)


def format_float(value: float) -> str:
    """17 significant digits; non-finite values become ``null``."""
    if not math.isfinite(value):
        return "null"
    return format(value, ".17g")


def _render(value: Any, indent: int, depth: int) -> str:
    pad = " " * (indent * (depth + 1))
    end = " " * (indent * depth)
    match value:
        case bool() | None | str():
            return json.dumps(value)
        case int():
            return str(value)
        case float():
            return format_float(value)
        case dict():
            if not value:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {_render(v, indent, depth + 1)}" for k, v in value.items()]
            return "{\n" + ",\n".join(items) + f"\n{end}}}"
        case list() | tuple():
            if not value:
                return "[]"
            items = [f"{pad}{_render(v, indent, depth + 1)}" for v in value]
            return "[\n" + ",\n".join(items) + f"\n{end}]"
        case _:
            raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps_json(data: BaseModel | Sequence[BaseModel] | dict[str, Any] | list[Any], indent: int = 2) -> str:
    """JSON in model field order with every float printed to 17 significant digits."""
    if isinstance(data, BaseModel):
        payload: Any = data.model_dump(mode="json")
    elif isinstance(data, list | tuple):
        payload = [item.model_dump(mode="json") if isinstance(item, BaseModel) else item for item in data]
    else:
        payload = data
    return _render(payload, indent, 0) + "\n"


def _csv_cell(value: Any) -> str:
    match value:
        case None:
            return ""
        case bool():
            return "true" if value else "false"
        case float():
            return format_float(value)
        case _:
            return str(value)


def rows_to_csv(header: Sequence[str], rows: Iterable[BaseModel]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        data = row.model_dump(mode="json")
        writer.writerow([_csv_cell(data[name]) for name in header])
    return buffer.getvalue()


def set_path(data: dict[str, Any], path: str, value: float) -> dict[str, Any]:
    """Copy of ``data`` with the dotted ``path`` (numeric segments index lists) set to ``value``."""
    updated = json.loads(json.dumps(data))
    *parents, leaf = path.split(".")

    node: Any = updated
    for segment in parents:
        node = node[int(segment)] if isinstance(node, list) else node[segment]

    if isinstance(node, list):
        node[int(leaf)] = value
    elif isinstance(node, dict):
        node[leaf] = value
    else:
        raise KeyError(path)
    return updated


def get_path(data: dict[str, Any], path: str) -> Any:
    node: Any = data
    for segment in path.split("."):
        node = node[int(segment)] if isinstance(node, list) else node[segment]
    return node
