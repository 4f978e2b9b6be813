"""
SVG line plots over the experiment tables.
"""
import logging
import os
from typing import List, Sequence

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt

from services.experiments import BasinRow, ConvergenceResult, SnrRow

logger = logging.getLogger(__name__)

# Drops the creation date so reruns write identical files
SVG_METADATA = {'Date': None}


def _save(fig, path: str) -> str:
    directory = os.path.dirname(path)
    if directory and not os.path.exists(directory):
        os.makedirs(directory)
    fig.savefig(path, format='svg', bbox_inches='tight', metadata=SVG_METADATA)
    plt.close(fig)
    logger.info(f"Saved plot {path}")
    return path


def plot_basin(rows: Sequence[BasinRow], path: str) -> str:
    """Success rate against initialization distance, one line per (scheme, kappa)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    series = sorted({(row.scheme, row.kappa) for row in rows})
    for scheme, kappa in series:
        points = [row for row in rows if row.scheme == scheme and row.kappa == kappa]
        ax.plot([p.distance for p in points], [p.success_rate for p in points],
                marker='o', label=f"{scheme}, kappa={kappa:g}")
    ax.set_xlabel('||S(theta_0 - theta*)||_inf')
    ax.set_ylabel('success rate')
    ax.set_ylim(-0.05, 1.05)
    ax.legend()
    return _save(fig, path)


def plot_convergence(results: List[ConvergenceResult], path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    for result in results:
        ax.semilogy(range(len(result.errors)), result.errors,
                    label=f"{result.scheme}, kappa={result.kappa:g}")
    ax.set_xlabel('iteration')
    ax.set_ylabel('||S(theta_k - theta*)||_inf')
    ax.legend()
    return _save(fig, path)


def plot_snr(rows: Sequence[SnrRow], path: str) -> str:
    """Mean weighted error of both schemes against SNR with the CRB benchmark."""
    finite = [row for row in rows if row.snr_db != float('inf')]
    fig, ax = plt.subplots(figsize=(6, 4))
    snr = [row.snr_db for row in finite]
    ax.semilogy(snr, [row.mean_error_invariant for row in finite], marker='o', label='invariant')
    ax.semilogy(snr, [row.mean_error_adaptive for row in finite], marker='s', label='adaptive')
    ax.semilogy(snr, [row.crb_weighted for row in finite], linestyle='--', color='k', label='CRB')
    ax.set_xlabel('SNR (dB)')
    ax.set_ylabel('mean ||S(theta_200 - theta*)||_inf')
    ax.legend()
    return _save(fig, path)
