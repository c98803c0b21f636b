"""Report-path output: delimited tables, JSON artifacts, provenance, figures.

Every numeric artifact is written deterministically (sorted keys, round-trip
float repr, no timestamps), so identical configurations and seeds reproduce
byte-identical files.  Each artifact embeds the SHA-256 of its parents,
forming a hash chain from the dataset through the feasible set and the
controller to the evaluation summary.  Figures are rendered to PNG files
next to the delimited output they visualize.
"""

from __future__ import annotations

import csv
import hashlib
import json
import pathlib
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "sha256_of_file",
    "provenance",
    "write_json",
    "write_table",
    "render_trajectory",
    "render_bode",
    "render_alphas",
]


def sha256_of_file(path: str | pathlib.Path) -> str:
    h = hashlib.sha256()
    h.update(pathlib.Path(path).read_bytes())
    return h.hexdigest()


def provenance(**parents: str | pathlib.Path) -> Dict[str, Dict[str, str]]:
    """Hash-chain entry: ``{name: {"path": ..., "sha256": ...}}`` per parent."""
    return {
        name: {"path": str(path), "sha256": sha256_of_file(path)}
        for name, path in parents.items()
    }


def _pyify(obj):
    if isinstance(obj, dict):
        return {str(k): _pyify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_pyify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_pyify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: str | pathlib.Path, obj: Dict) -> pathlib.Path:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_pyify(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_table(
    path: str | pathlib.Path, header: Sequence[str], columns: Sequence[np.ndarray]
) -> pathlib.Path:
    """CSV with one column per array, floats in full round-trip precision."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [np.asarray(c) for c in columns]
    if len({c.size for c in columns}) != 1:
        raise ValueError("all columns must have the same length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for i in range(columns[0].size):
            row = []
            for c in columns:
                v = c[i]
                row.append(repr(float(v)) if np.issubdtype(c.dtype, np.floating) else v)
            w.writerow(row)
    return path


def render_trajectory(
    path: str | pathlib.Path,
    t: np.ndarray,
    ref: np.ndarray,
    y_target: np.ndarray,
    y: np.ndarray,
    u: np.ndarray,
    title: str = "closed-loop tracking",
) -> pathlib.Path:
    path = pathlib.Path(path)
    fig, (ax0, ax1) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
    ax0.step(t, ref, where="post", color="0.6", label="reference")
    ax0.plot(t, y_target, "k--", lw=1.0, label="model target")
    ax0.plot(t[: y.size], y, "C0", lw=1.2, label="plant output")
    ax0.set_ylabel("output")
    ax0.legend(loc="best", fontsize=8)
    ax0.set_title(title)
    ax1.plot(t[: u.size], u, "C1", lw=1.0)
    ax1.set_ylabel("input")
    ax1.set_xlabel("time [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_bode(
    path: str | pathlib.Path,
    omega: np.ndarray,
    mag_closed_loop: np.ndarray,
    mag_model: np.ndarray,
    phase_closed_loop: np.ndarray,
    phase_model: np.ndarray,
    Ts: float,
    title: str = "closed loop vs reference model",
) -> pathlib.Path:
    path = pathlib.Path(path)
    freq = omega[1:] / (2.0 * np.pi * Ts)  # skip the DC point on the log axis
    fig, (ax0, ax1) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    ax0.semilogx(freq, 20 * np.log10(np.maximum(mag_closed_loop[1:], 1e-12)), "C0",
                 label="closed loop")
    ax0.semilogx(freq, 20 * np.log10(np.maximum(mag_model[1:], 1e-12)), "k--",
                 label="reference model")
    ax0.set_ylabel("magnitude [dB]")
    ax0.legend(loc="best", fontsize=8)
    ax0.set_title(title)
    ax1.semilogx(freq, np.degrees(phase_closed_loop[1:]), "C0")
    ax1.semilogx(freq, np.degrees(phase_model[1:]), "k--")
    ax1.set_ylabel("phase [deg]")
    ax1.set_xlabel("frequency [Hz]")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_alphas(
    path: str | pathlib.Path,
    alphas: np.ndarray,
    alpha_star: float,
    removed: Optional[Sequence[int]] = None,
    title: str = "scenario inflation demands",
) -> pathlib.Path:
    path = pathlib.Path(path)
    alphas = np.asarray(alphas, dtype=float)
    idx = np.arange(alphas.size)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(idx, alphas, "C0.", ms=4, label="scenario demand")
    if removed:
        removed = np.asarray(list(removed), dtype=int)
        ax.plot(removed, alphas[removed], "rx", ms=6, label="discarded")
    ax.axhline(alpha_star, color="k", ls="--", lw=1.0, label=f"alpha* = {alpha_star:.4f}")
    ax.set_xlabel("scenario index")
    ax.set_ylabel("alpha demand")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
