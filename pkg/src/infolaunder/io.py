"""JSON and CSV formats for distributions, kernels, models, solutions and curves.

Writers are deterministic (sorted keys, fixed indentation, shortest float
repr) so a seeded run always produces byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DomainError, FileFormatError, LaunderError
from .prob import Alphabet, DeterministicModel, Distribution, Kernel

PathLike = Union[str, Path]

LOAD_TOL = 1e-6
CURVE_FIELDS = ("beta", "utility_kl", "mi_input", "mi_output", "objective", "empirical_agreement")
BENCHMARK_FIELDS = CURVE_FIELDS + ("a_param", "b_param", "replications")


def dumps(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_json(payload, path: PathLike):
    Path(path).write_text(dumps(payload))


def read_json(path: PathLike):
    """Parse a JSON file; a missing file raises OSError, bad JSON FileFormatError."""
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: not valid JSON ({exc})") from None


def _field(obj, key, path):
    if not isinstance(obj, dict) or key not in obj:
        raise FileFormatError(f"{path}: missing field {key!r}")
    return obj[key]


def _numbers(values, path, what):
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError):
        raise FileFormatError(f"{path}: {what} must be numeric") from None
    return arr


def _alphabet(labels, path, what) -> Alphabet:
    if not isinstance(labels, list):
        raise FileFormatError(f"{path}: {what} must be a list of labels")
    return Alphabet(tuple(labels))


def _renormalized(arr: np.ndarray, axis, path, what):
    sums = arr.sum(axis=axis, keepdims=True)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DomainError(f"{path}: {what} has negative or non-finite entries")
    if np.any(np.abs(sums - 1.0) > LOAD_TOL):
        raise DomainError(f"{path}: {what} does not sum to 1 within {LOAD_TOL:g}")
    return arr / sums


# ---------------------------------------------------------------------------
# payload conversion


def distribution_payload(dist: Distribution) -> dict:
    return {"labels": list(dist.alphabet.labels), "probs": [float(v) for v in dist.probs]}


def kernel_payload(kernel: Kernel) -> dict:
    return {"input_labels": list(kernel.input_alphabet.labels),
            "output_labels": list(kernel.output_alphabet.labels),
            "matrix": [[float(v) for v in row] for row in kernel.matrix]}


def model_payload(model: DeterministicModel) -> dict:
    return {"input_labels": list(model.input_alphabet.labels),
            "output_labels": list(model.output_alphabet.labels),
            "map": list(model.map)}


def distribution_from_payload(obj, path="<payload>") -> Distribution:
    alphabet = _alphabet(_field(obj, "labels", path), path, "labels")
    probs = _numbers(_field(obj, "probs", path), path, "probs")
    if probs.shape != (alphabet.size,):
        raise FileFormatError(f"{path}: {probs.shape} probabilities for {alphabet.size} labels")
    return Distribution(alphabet, _renormalized(probs, 0, path, "probs"))


def kernel_from_payload(obj, path="<payload>") -> Kernel:
    ins = _alphabet(_field(obj, "input_labels", path), path, "input_labels")
    outs = _alphabet(_field(obj, "output_labels", path), path, "output_labels")
    matrix = _numbers(_field(obj, "matrix", path), path, "matrix")
    if matrix.shape != (outs.size, ins.size):
        raise FileFormatError(f"{path}: matrix shape {matrix.shape}, labels require {(outs.size, ins.size)}")
    return Kernel(ins, outs, _renormalized(matrix, 0, path, "kernel columns"))


def model_from_payload(obj, path="<payload>"):
    """A DeterministicModel if the payload has ``map``, else a Kernel."""
    if isinstance(obj, dict) and "map" in obj:
        ins = _alphabet(_field(obj, "input_labels", path), path, "input_labels")
        outs = _alphabet(_field(obj, "output_labels", path), path, "output_labels")
        mapping = obj["map"]
        if not isinstance(mapping, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in mapping):
            raise FileFormatError(f"{path}: map must be a list of integers")
        return DeterministicModel(ins, outs, tuple(mapping))
    return kernel_from_payload(obj, path)


def load_distribution(path: PathLike) -> Distribution:
    return distribution_from_payload(read_json(path), path)


def load_kernel(path: PathLike) -> Kernel:
    return kernel_from_payload(read_json(path), path)


def load_model(path: PathLike):
    return model_from_payload(read_json(path), path)


def save_distribution(dist: Distribution, path: PathLike):
    write_json(distribution_payload(dist), path)


def save_kernel(kernel: Kernel, path: PathLike):
    write_json(kernel_payload(kernel), path)


def save_model(model, path: PathLike):
    write_json(model_payload(model) if isinstance(model, DeterministicModel) else kernel_payload(model), path)


# ---------------------------------------------------------------------------
# solutions


def solution_payload(k1: Kernel, k2: Kernel, effective: Kernel, *, objective_trace, delta_trace, converged,
                     residual, config: dict, components: dict) -> dict:
    return {
        "k1": kernel_payload(k1),
        "k2": kernel_payload(k2),
        "effective": kernel_payload(effective),
        "objective": float(objective_trace[-1]),
        "objective_trace": [float(v) for v in objective_trace],
        "delta_trace": [float(v) for v in delta_trace],
        "iterations": len(delta_trace),
        "converged": bool(converged),
        "residual": float(residual),
        "config": config,
        "components": {k: float(v) for k, v in components.items()},
    }


def load_solution(path: PathLike) -> dict:
    """Solution file as a dict whose ``k1``, ``k2`` (and ``effective``) are Kernels."""
    obj = read_json(path)
    out = dict(obj) if isinstance(obj, dict) else {}
    for key in ("k1", "k2"):
        out[key] = kernel_from_payload(_field(obj, key, path), f"{path}:{key}")
    if "effective" in obj:
        out["effective"] = kernel_from_payload(obj["effective"], f"{path}:effective")
    return out


# ---------------------------------------------------------------------------
# quantizer config


def load_quantizer_config(path: PathLike):
    from .bench import QuantizerConfig
    obj = read_json(path)
    try:
        return QuantizerConfig(float(_field(obj, "mu", path)), float(_field(obj, "sigma", path)),
                               int(obj.get("n_points", 30)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, LaunderError):
            raise
        raise FileFormatError(f"{path}: bad quantizer config ({exc})") from None


def quantizer_payload(config) -> dict:
    return {"mu": float(config.mu), "sigma": float(config.sigma), "n_points": int(config.n_points)}


# ---------------------------------------------------------------------------
# curves


def _fmt(v) -> str:
    return "%.6g" % v


def curve_csv(curve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_FIELDS)
    for p in curve:
        writer.writerow([_fmt(getattr(p, name)) for name in CURVE_FIELDS])
    return buf.getvalue()


def benchmark_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCHMARK_FIELDS)
    for row in rows:
        values = [_fmt(getattr(row.point, name)) for name in CURVE_FIELDS]
        writer.writerow(values + [_fmt(row.a_param), _fmt(row.b_param), str(row.replications)])
    return buf.getvalue()


def write_curve_csv(curve, path: PathLike):
    Path(path).write_text(curve_csv(curve))


def parse_curve_csv(text: str, path="<text>"):
    from .bench import TradeoffCurve, TradeoffPoint
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header[:len(CURVE_FIELDS)]) != CURVE_FIELDS:
        raise FileFormatError(f"{path}: unexpected CSV header {header}")
    points = []
    for line, row in enumerate(reader, start=2):
        try:
            points.append(TradeoffPoint(*(float(v) for v in row[:len(CURVE_FIELDS)])))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, LaunderError):
                raise
            raise FileFormatError(f"{path}:{line}: bad row {row}") from None
    return TradeoffCurve(tuple(points))


def read_curve_csv(path: PathLike):
    return parse_curve_csv(Path(path).read_text(), path)
