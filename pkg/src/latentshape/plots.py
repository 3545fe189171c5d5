"""File-output matplotlib figures for the CLI report paths.

Every helper writes a PNG and returns the path; nothing ever opens a
window (Agg backend).  Figures accompany the delimited outputs, they are
not a data interchange format.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_DPI = 120


def save_scatter(path: str, points: np.ndarray, labels=None,
                 title: str = "") -> str:
    points = np.atleast_2d(points)
    fig, ax = plt.subplots(figsize=(5, 5), dpi=_DPI)
    if points.shape[1] >= 2:
        style = {"c": labels, "cmap": "tab10"} if labels is not None else {}
        ax.scatter(points[:, 0], points[:, 1], s=4, alpha=0.6, linewidths=0,
                   **style)
        ax.set_aspect("equal", adjustable="datalim")
    else:
        ax.hist(points[:, 0], bins=60)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def save_overlay(path: str, first: np.ndarray, second: np.ndarray,
                 first_label: str, second_label: str, title: str = "") -> str:
    first = np.atleast_2d(first)
    second = np.atleast_2d(second)
    fig, ax = plt.subplots(figsize=(5, 5), dpi=_DPI)
    if first.shape[1] >= 2:
        ax.scatter(first[:, 0], first[:, 1], s=4, alpha=0.5, linewidths=0,
                   label=first_label)
        ax.scatter(second[:, 0], second[:, 1], s=4, alpha=0.5, linewidths=0,
                   label=second_label)
        ax.set_aspect("equal", adjustable="datalim")
    else:
        ax.hist([first[:, 0], second[:, 0]], bins=60,
                label=[first_label, second_label])
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def save_curves(path: str, series: dict, xlabel: str = "epoch",
                ylabel: str = "", title: str = "") -> str:
    fig, ax = plt.subplots(figsize=(6, 4), dpi=_DPI)
    for name, values in series.items():
        ax.plot(values, label=name)
    ax.set_xlabel(xlabel)
    if ylabel:
        ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if series:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def save_xy(path: str, x, ys: dict, xlabel: str, ylabel: str = "",
            title: str = "") -> str:
    fig, ax = plt.subplots(figsize=(6, 4), dpi=_DPI)
    for name, values in ys.items():
        ax.plot(x, values, marker="o", label=name)
    ax.set_xlabel(xlabel)
    if ylabel:
        ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if ys:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
