import csv
import json
import math
from pathlib import Path

import numpy as np
from scipy import sparse

from app.core.errors import ContractViolation
from app.core.settings import DEFAULT_OUT_DIR, FLOAT_FORMAT, REPORT_CSV_HEADER, SPECTRUM_CSV_HEADER
from app.services.model_spectra import Spectrum, SpectrumLine, TailModel


def ensure_storage(out_dir=DEFAULT_OUT_DIR) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    return str(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: Path, obj) -> Path:
    # floats go out as repr: shortest text that reads back to the same double
    path = Path(path)
    ensure_storage(path.parent)
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def read_json(path: Path):
    with Path(path).open("r", encoding="utf-8") as f:
        return json.load(f)


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    ensure_storage(path.parent)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


# ---- spectra ----

def write_spectrum_csv(out_dir, name: str, spec: Spectrum) -> Path:
    rows = ((l.degree, l.q_base, l.q_fiber, float(l.eigenvalue), l.multiplicity) for l in spec.lines)
    return write_csv(ensure_storage(out_dir) / f"spectrum_{name}.csv", SPECTRUM_CSV_HEADER, rows)


def read_spectrum_csv(path: Path) -> Spectrum:
    lines = []
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != SPECTRUM_CSV_HEADER:
            raise ContractViolation(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            lines.append(SpectrumLine(
                degree=int(row["degree"]),
                eigenvalue=float(row["eigenvalue"]),
                multiplicity=int(row["multiplicity"]),
                q_base=int(row["q_base"]) if row["q_base"] else None,
                q_fiber=int(row["q_fiber"]) if row["q_fiber"] else None,
            ))
    return Spectrum(tuple(lines), TailModel(), (("kind", "csv"), ("source", str(path))))


# ---- reports ----

def write_report(out_dir, report) -> tuple[Path, Path]:
    """<tag>.csv with one row per grid point and <tag>.json with the summary."""
    out_dir = ensure_storage(out_dir)
    rows = (
        (r.point, json.dumps(_jsonable(r.params), sort_keys=True), r.observed, r.predicted, r.budget, r.verdict, r.note)
        for r in report.rows
    )
    csv_path = write_csv(out_dir / f"{report.tag}.csv", REPORT_CSV_HEADER, rows)
    json_path = write_json(out_dir / f"{report.tag}.json", report.summary())
    return csv_path, json_path


# ---- matrices ----

def write_coo_matrix(out_dir, name: str, matrix, meta: dict | None = None, degrees=None) -> Path:
    """'row col value' text, row-major, plus a <name>.json descriptor.

    degrees labels every basis index with its form degree (square operators only).
    """
    out_dir = ensure_storage(out_dir)
    coo = sparse.coo_matrix(matrix)
    if degrees is not None:
        degrees = [int(q) for q in np.asarray(degrees).ravel()]
        if coo.shape[0] != coo.shape[1] or len(degrees) != coo.shape[0]:
            raise ContractViolation(f"{name}: {len(degrees)} degree labels for a {coo.shape} matrix")
    order = np.lexsort((coo.col, coo.row))
    path = out_dir / f"{name}.coo"
    with path.open("w", encoding="utf-8") as f:
        for idx in order:
            value = coo.data[idx]
            if value == 0:
                continue
            f.write(f"{coo.row[idx]} {coo.col[idx]} {fmt(float(value))}\n")
    descriptor = {"shape": list(coo.shape), "nnz": int(np.count_nonzero(coo.data)), "format": "coo-text"}
    descriptor.update(meta or {})
    if degrees is not None:
        descriptor["degrees"] = degrees
    write_json(out_dir / f"{name}.json", descriptor)
    return path


def read_coo_matrix(path: Path) -> sparse.csr_matrix:
    path = Path(path)
    shape = tuple(read_json(path.with_suffix(".json"))["shape"])
    data = np.loadtxt(path, ndmin=2) if path.stat().st_size else np.zeros((0, 3))
    return sparse.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=shape)


def write_operator_debug(out_dir, name: str, op) -> Path:
    """'row_word col_word coefficient' lines of an ExteriorOperator."""
    path = ensure_storage(out_dir) / f"{name}.txt"
    path.write_text(op.to_coo_text(), encoding="utf-8")
    return path
