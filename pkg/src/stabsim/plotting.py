"""Figure rendering for the report paths: written next to the delimited output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
import matplotlib.pyplot as plt


def render_scale(result: dict, path: str) -> None:
    """Mean recovery time against k with the log and linear fits."""
    rows = [r for r in result["rows"] if r["mean_T"] is not None]
    ks = np.array([r["k"] for r in rows], dtype=float)
    ts = np.array([r["mean_T"] for r in rows], dtype=float)
    errs = np.array([r["stderr_T"] or 0.0 for r in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.errorbar(ks, ts, yerr=errs, fmt="o", color="tab:blue", capsize=3,
                label="mean T")
    fits = result.get("fits") or {}
    grid = np.linspace(ks.min(), ks.max(), 200)
    if "log_fit" in fits:
        f = fits["log_fit"]
        ax.plot(grid, f["slope"] * np.log2(np.maximum(grid, 1.0)) + f["intercept"],
                "-", color="tab:green",
                label=f"a·log2(k)+b  (res {f['residual']:.1f})")
    if "linear_fit" in fits:
        f = fits["linear_fit"]
        ax.plot(grid, f["slope"] * grid + f["intercept"], "--", color="tab:red",
                label=f"a·k+b  (res {f['residual']:.1f})")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("manipulated nodes k")
    ax.set_ylabel("recovery rounds T")
    ax.set_title(f"{result['problem']}: adaptive recovery time")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_mix(result: dict, path: str) -> None:
    """Empirical step-counter distribution with the exact stationary line."""
    rows = result["rows"]
    labels = [str(r["state"]) for r in rows]
    freqs = [r["frequency"] for r in rows]
    errs = [r["stderr"] for r in rows]
    phi = result["phi"]
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    xs = np.arange(len(rows))
    ax.bar(xs, freqs, yerr=errs, color="tab:blue", capsize=3)
    ax.axhline(2.0 / (phi + 2), color="tab:green", ls=":", lw=1,
               label="stationary hold mass")
    ax.axhline(1.0 / (phi + 2), color="tab:red", ls=":", lw=1,
               label="stationary ladder mass")
    ax.set_xticks(xs, labels)
    ax.set_xlabel("state")
    ax.set_ylabel("frequency")
    ax.set_title(f"step-counter distribution, phi={phi}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
