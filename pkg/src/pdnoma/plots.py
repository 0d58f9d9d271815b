"""Figure rendering for the report commands (headless, PNG output)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def plot_compare(table: list[dict], path: str) -> str:
    """Scheme comparison: AAR of each access mode over the device count."""
    ns = [row["n"] for row in table]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for key, label, style in (
        ("gb", "grant-based", "k--"),
        ("gf", "grant-free", "C0-"),
        ("semi_dynamic", "semi-GF (dynamic)", "C2-o"),
        ("semi_open_loop", "semi-GF (open loop)", "C3-s"),
    ):
        ax.plot(ns, [row[key] for row in table], style, label=label, markersize=3)
    ax.set_xlabel("total devices")
    ax.set_ylabel("AAR (successes per slot)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_barring(demo: dict, path: str) -> str:
    """Left: barred vs unbarred AAR over load.  Right: burst drain."""
    rows = demo["rows"]
    burst = demo["burst"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11.0, 4.2))

    ns = [r["n"] for r in rows]
    ax1.plot(ns, [r["aar_barred"] for r in rows], "C2-o", label="barring on")
    ax1.plot(ns, [r["aar_unbarred"] for r in rows], "C3-s", label="barring off")
    ax1.axhline(demo["aar_max"], color="k", linestyle=":", label="max AAR")
    ax1.set_xlabel("total devices")
    ax1.set_ylabel("steady AAR (successes per slot)")
    ax1.legend()
    ax1.grid(True, alpha=0.3)

    periods = range(len(burst["load_per_period"]))
    ax2.plot(periods, burst["load_per_period"], "C0-o", label="offered load")
    ax2.axhline(demo["n_star"], color="k", linestyle=":", label="optimal load")
    ax2.set_xlabel("barring period")
    ax2.set_ylabel("mean contenders per slot")
    ax2.set_yscale("symlog")
    ax2.legend()
    ax2.grid(True, alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_sweep(aggregated: list[dict], axis: str, path: str) -> str:
    """Mean AAR with replication error bars along one config axis."""
    xs = [row["value"] for row in aggregated]
    ys = [row["aar"] for row in aggregated]
    errs = [row["aar_std"] for row in aggregated]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.errorbar(xs, ys, yerr=errs, fmt="C0-o", capsize=3)
    ax.set_xlabel(axis)
    ax.set_ylabel("AAR (successes per slot)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
