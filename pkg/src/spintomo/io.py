"""JSON layouts shared by the library and the command line.

Matrices are nested lists of ``[re, im]`` pairs.  Outcome keys are ``2m``
(and ``"2mA,2mB"`` for joint records) so half-integer spins stay exact.
Files are written with sorted keys and a trailing newline; Python's float
repr round-trips exactly, so reading a file back reproduces every value.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .basis import CoefficientVector, OperatorBasis
from .bipartite import JointEntry, JointRecord, ProductCoefficients
from .errors import ValidationError
from .measurement import MeasurementRecord, RecordEntry
from .spin import DensityMatrix, Direction, SpinLength
from .tomography import ReconstructionReport


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj, path=None) -> str:
    text = dumps(obj)
    if path is not None:
        Path(path).write_text(text)
    return text


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def matrix_to_json(m) -> list:
    m = np.asarray(m)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError("matrix must be a square array of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def _finite(x: float):
    return float(x) if math.isfinite(x) else None


# --- states -----------------------------------------------------------------

def state_to_json(rho: DensityMatrix, spins) -> dict:
    out = {"matrix": matrix_to_json(rho.matrix), "raw": bool(rho.raw)}
    if isinstance(spins, SpinLength):
        out["two_l"] = spins.two_l
    else:
        out["two_l_a"], out["two_l_b"] = spins[0].two_l, spins[1].two_l
    return out


def state_from_json(data: dict) -> tuple[DensityMatrix, SpinLength | tuple[SpinLength, SpinLength]]:
    """Read a state file (or anything carrying ``two_l``/``matrix``, e.g. a report)."""
    try:
        m = matrix_from_json(data["matrix"])
        if "two_l_a" in data:
            spins = (SpinLength(data["two_l_a"]), SpinLength(data["two_l_b"]))
            dims = (spins[0].dimension(), spins[1].dimension())
        else:
            spins = SpinLength(data["two_l"])
            dims = (spins.dimension(),)
    except KeyError as exc:
        raise ValidationError(f"state file lacks field {exc}") from None
    if math.prod(dims) != m.shape[0]:
        raise ValidationError(f"matrix of size {m.shape[0]} does not match declared spins")
    rho = DensityMatrix(m, raw=True, dims=dims)
    if rho.is_physical():
        rho = DensityMatrix(m, dims=dims)
    return rho, spins


# --- single-system records ----------------------------------------------------

def _outcomes(values, keys, clip: bool) -> dict:
    if clip:
        values = np.clip(values, 0.0, 1.0)
    return {str(k): (int(v) if not clip else float(v)) for k, v in zip(keys, values)}


def record_to_json(record: MeasurementRecord) -> dict:
    keys = record.l.two_ms
    entries = []
    for e in record.entries:
        item = {"theta": e.direction.theta, "phi": e.direction.phi}
        if e.counts is not None:
            item["counts"] = _outcomes(e.counts, keys, clip=False)
            item["shots"] = e.shots
        else:
            item["probs"] = _outcomes(e.probabilities, keys, clip=True)
        entries.append(item)
    return {"two_l": record.l.two_l, "entries": entries}


def _read_outcomes(table: dict, keys) -> np.ndarray:
    try:
        return np.array([table[str(k)] for k in keys])
    except KeyError as exc:
        raise ValidationError(f"outcome {exc} missing from record entry") from None


def record_from_json(data: dict) -> MeasurementRecord:
    try:
        l = SpinLength(data["two_l"])
        entries = []
        for item in data["entries"]:
            d = Direction(item["theta"], item["phi"])
            if "counts" in item:
                counts = _read_outcomes(item["counts"], l.two_ms)
                if "shots" in item and int(item["shots"]) != int(counts.sum()):
                    raise ValidationError("shots does not equal the sum of counts")
                entries.append(RecordEntry(d, counts=counts))
            else:
                entries.append(RecordEntry(d, probabilities=_read_outcomes(item["probs"], l.two_ms)))
    except KeyError as exc:
        raise ValidationError(f"record lacks field {exc}") from None
    return MeasurementRecord(l, tuple(entries))


# --- joint records --------------------------------------------------------------

def _joint_keys(l_a: SpinLength, l_b: SpinLength) -> list[str]:
    return [f"{a},{b}" for a in l_a.two_ms for b in l_b.two_ms]


def joint_record_to_json(record: JointRecord) -> dict:
    keys = _joint_keys(record.l_a, record.l_b)
    entries = []
    for e in record.entries:
        item = {
            "theta_a": e.direction_a.theta, "phi_a": e.direction_a.phi,
            "theta_b": e.direction_b.theta, "phi_b": e.direction_b.phi,
        }
        if e.counts is not None:
            item["counts"] = _outcomes(e.counts.ravel(), keys, clip=False)
            item["shots"] = e.shots
        else:
            item["probs"] = _outcomes(e.probabilities.ravel(), keys, clip=True)
        entries.append(item)
    return {"two_l_a": record.l_a.two_l, "two_l_b": record.l_b.two_l, "entries": entries}


def joint_record_from_json(data: dict) -> JointRecord:
    try:
        l_a, l_b = SpinLength(data["two_l_a"]), SpinLength(data["two_l_b"])
        keys = _joint_keys(l_a, l_b)
        shape = (l_a.dimension(), l_b.dimension())
        entries = []
        for item in data["entries"]:
            da = Direction(item["theta_a"], item["phi_a"])
            db = Direction(item["theta_b"], item["phi_b"])
            if "counts" in item:
                counts = _read_outcomes(item["counts"], keys).reshape(shape)
                entries.append(JointEntry(da, db, counts=counts))
            else:
                entries.append(JointEntry(da, db, probabilities=_read_outcomes(item["probs"], keys).reshape(shape)))
    except KeyError as exc:
        raise ValidationError(f"joint record lacks field {exc}") from None
    return JointRecord(l_a, l_b, tuple(entries))


def any_record_from_json(data: dict):
    return joint_record_from_json(data) if "two_l_a" in data else record_from_json(data)


# --- basis and reports -----------------------------------------------------------

def basis_to_json(basis: OperatorBasis) -> dict:
    return {
        "two_l": basis.l.two_l,
        "operators": [
            {"n": lab.n, "i": lab.i, "coherence": lab.coherence, "matrix": matrix_to_json(op)}
            for lab, op in basis
        ],
    }


def coefficients_to_json(coeffs: CoefficientVector | ProductCoefficients) -> dict:
    return {key: value for key, value in coeffs.items()}


def report_to_json(report: ReconstructionReport, project_psd: bool = True) -> dict:
    coeffs = report.coefficients
    if isinstance(coeffs, ProductCoefficients):
        spins = (coeffs.l_a, coeffs.l_b)
    else:
        spins = coeffs.l
    chosen = report.rho_physical if project_psd else report.rho_raw
    out = state_to_json(chosen, spins)
    out.update({
        "coefficients": coefficients_to_json(coeffs),
        "rho_raw": matrix_to_json(report.rho_raw.matrix),
        "rho_physical": matrix_to_json(report.rho_physical.matrix),
        "residual_norm": report.residual_norm,
        "consistency_residuals": list(report.consistency_residuals),
        "condition_number": _finite(report.condition_number),
        "rank": report.rank,
    })
    return out


def directions_from_json(data) -> list[Direction]:
    """Either ``{"directions": [...]}`` or a bare list; items are
    ``{"theta": .., "phi": ..}`` objects or ``[theta, phi]`` pairs."""
    items = data["directions"] if isinstance(data, dict) else data
    out = []
    for item in items:
        if isinstance(item, dict):
            out.append(Direction(item["theta"], item["phi"]))
        else:
            theta, phi = item
            out.append(Direction(theta, phi))
    return out
