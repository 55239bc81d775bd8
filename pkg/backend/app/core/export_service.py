"""
Build CSV tables and binary dumps from in-memory results.

Every CSV starts with '#'-prefixed metadata lines (tool, version, config hash)
followed by a pandas table; nothing time-dependent is written, so the same
config and seed give byte-identical files.
"""
import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import pandas as pd

from app import __version__
from app.core.errors import DomainError

TOOL_NAME = "subdiff-lab"

DUMP_MAGIC = b"SUBDIFF\x00"
DUMP_VERSION = 2
DUMP_KIND_PATH = 1
DUMP_KIND_SOLUTION = 2
# magic, version, kind, dt, field sha256, config sha256, tool version, record count, record width
_HEADER = struct.Struct("<8sIId32s32s16sQQ")


def config_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_csv(target: Path, df: pd.DataFrame, *, cfg_hash: str, meta: dict | None = None) -> Path:
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# tool: {TOOL_NAME} {__version__}", f"# config_sha256: {cfg_hash}"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}: {value}")
    with target.open("w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
        df.to_csv(fh, index=False, float_format="%.17g", lineterminator="\n")
    return target


def read_csv(source: Path) -> tuple[dict[str, str], pd.DataFrame]:
    """Return (metadata, table) from a file written by write_csv."""
    meta: dict[str, str] = {}
    with Path(source).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(":")
            meta[key.strip()] = value.strip()
    return meta, pd.read_csv(source, comment="#")


# ---------------------------------------------------------------------------
# Table builders
# ---------------------------------------------------------------------------


def build_ensemble_frame(summary) -> pd.DataFrame:
    occ_lo, occ_hi = summary.occ_ci()
    hit_lo, hit_hi = summary.hit_ci()
    df = pd.DataFrame(
        {
            "t": summary.t_grid,
            "occ_mean": summary.occ_mean,
            "occ_ci_halfwidth": summary.occ_ci_halfwidth,
            "occ_ci_low": occ_lo,
            "occ_ci_high": occ_hi,
            "hit_prob": summary.hit_prob,
            "hit_ci_halfwidth": summary.hit_ci_halfwidth,
            "hit_ci_low": hit_lo,
            "hit_ci_high": hit_hi,
        }
    )
    for name, values in sorted(summary.extra_hit_prob.items()):
        df[f"hit_prob_{name}"] = values
    return df


def build_slope_frame(fits) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "quantity": f.quantity,
                "slope": f.slope,
                "slope_stderr": f.slope_stderr,
                "nominal": f.nominal if f.nominal is not None else np.nan,
                "n_points": len(f.log_t),
                "n_paths_used": f.n_paths_used,
                "robust": f.robust,
            }
            for f in fits
        ]
    )


def build_regime_summary_frame(report) -> pd.DataFrame:
    row = {
        "kind": report.prediction.kind,
        "condition_lhs": report.prediction.condition_lhs,
        "condition_rhs": report.prediction.condition_rhs,
        "target": report.prediction.target,
        "occ_final": report.occ_final,
        "occ_ci_final": report.occ_ci_final,
        "hit_final": report.hit_final,
        "hit_ci_final": report.hit_ci_final,
        "escape_hit_final": report.escape_hit_final if report.escape_hit_final is not None else np.nan,
        "trend": report.trend,
        "verdict": report.verdict.value,
    }
    return pd.DataFrame([row])


def build_path_frame(path) -> pd.DataFrame:
    steps = path.steps
    return pd.DataFrame({"s": steps[:, 0], "b": steps[:, 1], "sigma": steps[:, 2]})


def build_sample_frame(sample) -> pd.DataFrame:
    df = pd.DataFrame(
        {
            "t": sample.external_times,
            "x": sample.positions,
            "L": sample.l_values,
            "g": sample.g_values,
            "h": sample.h_values,
            "age": sample.age,
        }
    )
    for name, values in sorted(sample.occupation.items()):
        df[f"occupation_{name}"] = values
    return df


def build_solution_frame(solution, every: int = 1) -> pd.DataFrame:
    """Long (t, x, q) table, keeping every ``every``-th time level plus the last."""
    levels = list(range(0, solution.q.shape[0], max(every, 1)))
    if levels[-1] != solution.q.shape[0] - 1:
        levels.append(solution.q.shape[0] - 1)
    x = solution.grid.nodes
    t = np.repeat(solution.t_grid[levels], x.size)
    xs = np.tile(x, len(levels))
    return pd.DataFrame({"t": t, "x": xs, "q": solution.q[levels].ravel()})


def build_comparison_frame(comparison) -> pd.DataFrame:
    return pd.DataFrame([p.model_dump() for p in comparison.points])


def build_validation_frame(report) -> pd.DataFrame:
    return pd.DataFrame([c.model_dump() for c in report.checks])


# ---------------------------------------------------------------------------
# Binary dumps
# ---------------------------------------------------------------------------


def _digest(hex_hash: str) -> bytes:
    return bytes.fromhex(hex_hash) if hex_hash else bytes(32)


def _write_dump(target: Path, kind: int, dt: float, field_hash: str, cfg_hash: str, records: np.ndarray) -> Path:
    records = np.ascontiguousarray(records, dtype="<f8")
    if records.ndim != 2:
        raise DomainError("dump records must be a 2-D array")
    header = _HEADER.pack(
        DUMP_MAGIC, DUMP_VERSION, kind, float(dt), _digest(field_hash), _digest(cfg_hash),
        __version__.encode("ascii"), records.shape[0], records.shape[1],
    )
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())
    return target


def dump_path(target: Path, path, *, cfg_hash: str = "") -> Path:
    """Record per step: (s_k, b_k, sigma_k)."""
    return _write_dump(target, DUMP_KIND_PATH, path.dt, path.field_hash, cfg_hash, path.steps)


def dump_solution(target: Path, solution, field_hash: str, *, cfg_hash: str = "") -> Path:
    """Record per time level: (t_n, q_n0, ..., q_n{nx-1})."""
    records = np.column_stack((solution.t_grid, solution.q))
    return _write_dump(target, DUMP_KIND_SOLUTION, solution.dt, field_hash, cfg_hash, records)


def read_dump(source: Path) -> tuple[dict, np.ndarray]:
    raw = Path(source).read_bytes()
    if len(raw) < _HEADER.size:
        raise DomainError(f"{source} is not a dump file")
    magic, version, kind, dt, field_digest, cfg_digest, tool, n, width = _HEADER.unpack_from(raw, 0)
    if magic != DUMP_MAGIC:
        raise DomainError(f"{source} is not a dump file")
    if version != DUMP_VERSION:
        raise DomainError(f"unsupported dump version {version}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size, count=n * width).reshape(n, width)
    header = {
        "version": version,
        "kind": kind,
        "dt": dt,
        "field_hash": field_digest.hex(),
        "config_hash": cfg_digest.hex(),
        "tool_version": tool.rstrip(b"\x00").decode("ascii"),
        "records": n,
        "width": width,
    }
    return header, data
