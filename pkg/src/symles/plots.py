"""Render the evaluation CSV tables to PNG files.

The CSV tables in <out>/eval are the canonical artifact; these figures are
a convenience view of the same numbers (spectra, error histories,
per-element equivariance, distributions, and the q-r invariant plane).
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

LINE_STYLES = {
    "reference": dict(color="black", lw=2.0, zorder=5),
    "dns": dict(color="gray", lw=1.0, ls=":"),
    "nomodel": dict(color="tab:red"),
    "smag": dict(color="tab:green"),
    "clark": dict(color="tab:orange"),
    "tbnn": dict(color="tab:blue"),
    "gconv": dict(color="tab:purple"),
    "conv": dict(color="tab:brown"),
}
QR_LEVELS = np.logspace(-4, 1, 7)


def _style(name):
    return LINE_STYLES.get(name, {})


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(value):
    try:
        return float(value)
    except ValueError:
        return np.nan


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_timeseries(dns_dir: Path, figures: Path):
    path = dns_dir / "timeseries.csv"
    if not path.exists():
        return
    rows = _read_rows(path)
    t = np.array([_num(r["t"]) for r in rows])
    e = np.array([_num(r["E"]) for r in rows])
    eps = np.array([_num(r["eps"]) for r in rows])
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for values, label in ((e / e.max(), "E / max E"), (eps / eps.max(), "eps / max eps")):
        warm = t <= 0
        ax.plot(t[warm], values[warm], ls="--", color=None)
        color = ax.lines[-1].get_color()
        ax.plot(t[~warm], values[~warm], color=color, label=label)
    ax.set_xlabel("t")
    ax.legend()
    ax.set_title("DNS energy and dissipation (dashed: warm-up)")
    _save(fig, figures / "timeseries.png")


def plot_errors_vs_time(eval_dir: Path, figures: Path):
    path = eval_dir / "errors_vs_time.csv"
    if not path.exists():
        return
    rows = _read_rows(path)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    models = sorted({r["model"] for r in rows})
    for name in models:
        t = [_num(r["t"]) for r in rows if r["model"] == name]
        err = [_num(r["error"]) for r in rows if r["model"] == name]
        ax.plot(t, err, label=name, **_style(name))
    ax.set_xlabel("t")
    ax.set_ylabel("relative solution error")
    ax.legend(fontsize=8)
    _save(fig, figures / "errors_vs_time.png")


def plot_spectra(eval_dir: Path, figures: Path):
    path = eval_dir / "spectrum.csv"
    if not path.exists():
        return
    rows = _read_rows(path)
    models = sorted({r["model"] for r in rows})
    fig, (ax_raw, ax_norm) = plt.subplots(1, 2, figsize=(9, 3.4))
    for name in models:
        sub = [r for r in rows if r["model"] == name and int(r["kappa"]) >= 1]
        kappa = np.array([int(r["kappa"]) for r in sub])
        energy = np.array([_num(r["E"]) for r in sub])
        good = energy > 0
        ax_raw.loglog(kappa[good], energy[good], label=name, **_style(name))
        ktil = np.array([_num(r["kappa_tilde"]) for r in sub])
        etil = np.array([_num(r["E_tilde"]) for r in sub])
        good = np.isfinite(etil) & (etil > 0)
        if good.any():
            ax_norm.loglog(ktil[good], etil[good], **_style(name))
    ax_raw.set_xlabel("kappa")
    ax_raw.set_ylabel("E(kappa)")
    ax_raw.legend(fontsize=7)
    finite = [
        _num(r["kappa_tilde"]) for r in rows if np.isfinite(_num(r["kappa_tilde"]))
    ]
    if finite:
        ktil = np.array(sorted(set(finite)))
        ktil = ktil[ktil > 0]
        ax_norm.loglog(ktil, ktil ** (-5.0 / 3.0), "k--", lw=0.8, label="kappa^(-5/3)")
        ax_norm.legend(fontsize=7)
    ax_norm.set_xlabel("kappa eta")
    ax_norm.set_ylabel("normalized E")
    _save(fig, figures / "spectrum.png")


def plot_equivariance(eval_dir: Path, figures: Path):
    path = eval_dir / "equi.csv"
    if not path.exists():
        return
    rows = _read_rows(path)
    models = sorted({r["model"] for r in rows})
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4), sharey=True)
    for column, ax, title in (
        ("prior", axes[0], "a-priori"),
        ("post", axes[1], "a-posteriori"),
    ):
        for name in models:
            elements = [int(r["element"]) for r in rows if r["model"] == name]
            values = [
                max(_num(r[column]), 1e-18) for r in rows if r["model"] == name
            ]
            ax.semilogy(elements, values, ".", label=name, **_style(name))
        ax.set_xlabel("group element")
        ax.set_title(title)
    axes[0].set_ylabel("equivariance error")
    axes[0].legend(fontsize=7)
    _save(fig, figures / "equivariance.png")


def plot_distributions(eval_dir: Path, figures: Path):
    for key in ("tau11", "tau12", "dissipation"):
        path = eval_dir / f"dist_{key}.csv"
        if not path.exists():
            continue
        rows = _read_rows(path)
        names = [c for c in rows[0].keys() if c != "x"]
        x = np.array([_num(r["x"]) for r in rows])
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for name in names:
            ax.semilogy(
                x,
                np.maximum([_num(r[name]) for r in rows], 1e-12),
                label=name,
                **_style(name),
            )
        ax.set_xlabel(key)
        ax.set_ylabel("density")
        ax.legend(fontsize=7)
        _save(fig, figures / f"dist_{key}.png")


def _qr_table(path):
    rows = _read_rows(path)
    q = np.array([_num(r["q_tilde"]) for r in rows])
    r = np.array([_num(r["r_tilde"]) for r in rows])
    d = np.array([_num(r["density"]) for r in rows])
    return q, r, d


def _qr_grid(q, r, d):
    qs, rs = np.unique(q), np.unique(r)
    grid = np.zeros((qs.size, rs.size))
    qi = np.searchsorted(qs, q)
    ri = np.searchsorted(rs, r)
    grid[qi, ri] = d
    return rs, qs, grid


def plot_qr(eval_dir: Path, figures: Path):
    ref_path = eval_dir / "qr_density_reference.csv"
    if not ref_path.exists():
        return
    ref = _qr_grid(*_qr_table(ref_path))
    tail_path = eval_dir / "qr_vieillefosse.csv"
    tail = None
    if tail_path.exists():
        rows = _read_rows(tail_path)
        tail = (
            np.array([_num(r["r_tilde"]) for r in rows]),
            np.array([_num(r["q_tilde"]) for r in rows]),
        )
    for path in sorted(eval_dir.glob("qr_density_*.csv")):
        name = path.stem.replace("qr_density_", "")
        if name == "reference":
            continue
        rs, qs, grid = _qr_grid(*_qr_table(path))
        fig, ax = plt.subplots(figsize=(4.2, 4))
        ax.contour(ref[0], ref[1], ref[2], levels=QR_LEVELS, colors="tab:blue")
        ax.contour(rs, qs, grid, levels=QR_LEVELS, colors="goldenrod")
        if tail is not None:
            ax.plot(tail[0], tail[1], "r-", lw=1.2)
        ax.set_xlim(rs.min(), rs.max())
        ax.set_ylim(qs.min(), qs.max())
        ax.set_xlabel("r_tilde")
        ax.set_ylabel("q_tilde")
        ax.set_title(f"q-r density: {name} vs reference")
        _save(fig, figures / f"qr_{name}.png")


def plot_losses(models_dir: Path, figures: Path):
    paths = sorted(models_dir.glob("loss_*.csv"))
    if not paths:
        return
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for path in paths:
        rows = _read_rows(path)
        name = path.stem.replace("loss_", "")
        ax.semilogy([_num(r["loss"]) for r in rows], label=name, **_style(name))
    ax.set_xlabel("optimizer step")
    ax.set_ylabel("batch loss")
    ax.legend(fontsize=8)
    _save(fig, figures / "training_loss.png")


def cmd_plot(config) -> int:
    out = Path(config.out_dir)
    figures = out / "figures"
    figures.mkdir(parents=True, exist_ok=True)
    plot_timeseries(out / "dns", figures)
    plot_errors_vs_time(out / "eval", figures)
    plot_spectra(out / "eval", figures)
    plot_equivariance(out / "eval", figures)
    plot_distributions(out / "eval", figures)
    plot_qr(out / "eval", figures)
    plot_losses(out / "models", figures)
    made = sorted(p.name for p in figures.glob("*.png"))
    print(f"wrote {len(made)} figures to {figures}: {', '.join(made)}")
    return 0
