"""
Reading and writing channels and certificates.

Channel JSON: {"rows": n, "cols": m, "p": [[...], ...]}
Channel CSV:  one matrix row per line, comma-separated decimals.
Certificate JSON: {"atom_indices": [...], "weights": [...], "residual_inf": r,
                   "pairs": [{"R": [[...]], "T": [[...]]}, ...]}
"""

import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from src.channel import Channel, InclusionCertificate, as_matrix, validate
from src.errors import ChannelValidationError, ParseError, ShapeMismatchError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _parse_csv(text: str, path: str) -> List[List[float]]:
    rows = []
    width = None
    for line_no, record in enumerate(csv.reader(io.StringIO(text)), start=1):
        cells = [cell.strip() for cell in record]
        if not cells or all(cell == "" for cell in cells):
            continue
        try:
            values = [float(cell) for cell in cells]
        except ValueError:
            raise ParseError(f"Non-numeric entry in {cells}", path=path, line=line_no)
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ParseError(f"Expected {width} entries, found {len(values)}", path=path, line=line_no)
        rows.append(values)
    if not rows:
        raise ParseError("No matrix rows found", path=path)
    return rows


def _parse_json(text: str, path: str) -> List[List[float]]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON: {e.msg}", path=path, line=e.lineno)
    if not isinstance(data, dict) or "p" not in data:
        raise ParseError('Channel JSON must be an object with a "p" matrix', path=path)
    matrix = data["p"]
    try:
        arr = np.asarray(matrix, dtype=float)
    except (TypeError, ValueError):
        raise ParseError('"p" is not a rectangular numeric matrix', path=path)
    if arr.ndim != 2:
        raise ParseError('"p" is not a rectangular numeric matrix', path=path)
    for key, actual in (("rows", arr.shape[0]), ("cols", arr.shape[1])):
        if key in data and int(data[key]) != actual:
            raise ParseError(f'"{key}" is {data[key]} but the matrix has {actual}', path=path)
    return arr.tolist()


def parse_channel(text: str, fmt: str = "json", path: str = "<string>") -> Channel:
    """Parse channel text in the given format and validate it."""
    if fmt == "json":
        matrix = _parse_json(text, path)
    elif fmt == "csv":
        matrix = _parse_csv(text, path)
    else:
        raise ValueError(f"Unknown channel format: {fmt}")
    try:
        return validate(matrix)
    except (ChannelValidationError, ShapeMismatchError) as e:
        raise ParseError(str(e), path=path)


def _format_for(path: Path) -> str:
    return "csv" if path.suffix.lower() == ".csv" else "json"


def load_channel(path: PathLike) -> Channel:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    channel = parse_channel(text, _format_for(path), str(path))
    logger.debug(f"Loaded {channel.rows}x{channel.cols} channel from {path}")
    return channel


def channel_to_dict(k: Channel) -> Dict[str, Any]:
    return {"rows": k.rows, "cols": k.cols, "p": k.to_list()}


def dump_channel(k: Channel, path: PathLike):
    path = Path(path)
    if _format_for(path) == "csv":
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            for row in k.p:
                writer.writerow([repr(float(v)) for v in row])
    else:
        path.write_text(json.dumps(channel_to_dict(k), indent=2) + "\n", encoding="utf-8")


def certificate_to_dict(cert: InclusionCertificate) -> Dict[str, Any]:
    residual = cert.residual_inf
    return {
        "atom_indices": list(cert.atom_indices),
        "weights": cert.weights.tolist(),
        "residual_inf": None if math.isnan(residual) else residual,
        "pairs": [
            {"R": as_matrix(r).tolist(), "T": as_matrix(t).tolist()}
            for r, t in cert.pairs
        ],
    }


def certificate_from_dict(data: Dict[str, Any], path: str = "<string>") -> InclusionCertificate:
    try:
        weights = np.asarray(data["weights"], dtype=float)
        pairs = tuple(
            (Channel(np.asarray(pair["R"], dtype=float)), Channel(np.asarray(pair["T"], dtype=float)))
            for pair in data.get("pairs", [])
        )
        indices = data.get("atom_indices", list(range(len(weights))))
        residual = data.get("residual_inf")
        return InclusionCertificate(
            atom_indices=tuple(indices),
            weights=weights,
            residual_inf=float("nan") if residual is None else float(residual),
            pairs=pairs,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"Malformed certificate: {e}", path=path)


def load_certificate(path: PathLike) -> InclusionCertificate:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON: {e.msg}", path=str(path), line=e.lineno)
    return certificate_from_dict(data, str(path))


def dump_certificate(cert: InclusionCertificate, path: PathLike):
    Path(path).write_text(json.dumps(certificate_to_dict(cert), indent=2) + "\n", encoding="utf-8")
