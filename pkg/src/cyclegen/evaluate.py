"""Real-vs-synthetic projections, the 1-NN overlap score and report packaging."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from cyclegen.errors import MissingArtifactError

REAL, SYNTHETIC = "real", "synthetic"


@dataclass(frozen=True)
class Projection2D:
    points: np.ndarray
    labels: np.ndarray
    method: str
    explained_variance: np.ndarray | None = None
    cycles: tuple | None = None

    def __post_init__(self):
        if len(self.points) != len(self.labels):
            raise ValueError("points and labels must have equal length")


def _flatten(items) -> np.ndarray:
    rows = []
    for it in items:
        a = it.profile if hasattr(it, "profile") else np.asarray(it, dtype=float)
        rows.append(np.asarray(a, dtype=float).reshape(-1))
    if not rows:
        return np.empty((0, 0))
    return np.stack(rows)


def _stack(real, synth):
    X_real, X_synth = _flatten(real), _flatten(synth)
    parts = [x for x in (X_real, X_synth) if x.size]
    X = np.vstack(parts) if parts else np.empty((0, 0))
    labels = np.array([REAL] * len(X_real) + [SYNTHETIC] * len(X_synth))
    return X, labels


def _cycle_ids(real, synth) -> tuple:
    ids = []
    for it in list(real) + list(synth):
        if getattr(it, "source", None) == REAL:
            ids.append(str(it.cycle_index))
        elif getattr(it, "source", None) == SYNTHETIC:
            pos = it.insertion_position
            ids.append(f"{pos + 1}.5" if pos is not None else f"c={it.cond_capacity:.6g}")
        else:
            ids.append(str(len(ids)))
    return tuple(ids)


def pca_project(real, synth=()) -> Projection2D:
    """Jointly centred projection onto the top two principal axes.

    Each axis is signed so that its largest-magnitude loading is positive.
    ``explained_variance`` holds the two leading covariance eigenvalues.
    """
    X, labels = _stack(real, synth)
    if len(X) < 3:
        raise ValueError(f"PCA needs at least 3 points, got {len(X)}")
    Xc = X - X.mean(axis=0)
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    comps = vt[:2]
    if comps.shape[0] < 2:
        comps = np.vstack([comps, np.zeros_like(comps[:1])])
        s = np.append(s, 0.0)
    for j in range(2):
        if comps[j, np.argmax(np.abs(comps[j]))] < 0:
            comps[j] = -comps[j]
    var = s[:2] ** 2 / (len(X) - 1)
    return Projection2D(Xc @ comps.T, labels, "PCA", var, _cycle_ids(real, synth))


def tsne_project(real, synth=(), perplexity: float = 10.0, seed: int = 0,
                 n_iter: int = 1000, learning_rate: float = 200.0) -> Projection2D:
    from sklearn.manifold import TSNE

    X, labels = _stack(real, synth)
    if len(X) <= 3 * perplexity:
        raise ValueError(f"t-SNE needs more than 3*perplexity={3 * perplexity} points, got {len(X)}")
    emb = TSNE(n_components=2, perplexity=perplexity, max_iter=n_iter,
               learning_rate=learning_rate, init="pca", random_state=seed).fit_transform(X)
    return Projection2D(np.asarray(emb, dtype=float), labels, "tSNE", None,
                        _cycle_ids(real, synth))


def overlap_score(proj: Projection2D) -> float:
    """Leave-one-out 1-nearest-neighbour label accuracy.

    About 0.5 means the two clouds are indistinguishable, 1.0 fully
    separable, 0.0 paired duplicates. Ties go to ``real``.
    """
    labels = np.asarray(proj.labels)
    if len(set(labels.tolist())) < 2:
        raise ValueError("overlap_score needs both real and synthetic points")
    D = cdist(proj.points, proj.points)
    np.fill_diagonal(D, np.inf)
    nearest = D.min(axis=1, keepdims=True)
    is_real = labels == REAL
    tied_real = ((D == nearest) & is_real[None, :]).any(axis=1)
    pred = np.where(tied_real, REAL, SYNTHETIC)
    return float(np.mean(pred == labels))


# --- report -----------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    return path


def write_projection(proj: Projection2D, path) -> Path:
    cycles = proj.cycles or tuple(range(len(proj.points)))
    return write_csv(path, ["x", "y", "label", "cycle"],
                     [(p[0], p[1], lab, c) for p, lab, c in zip(proj.points, proj.labels, cycles)])


METRIC_COLUMNS = ["battery", "model", "dataset", "rmse", "mae"]


def _svg_settings():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "cyclegen"
    return plt


def _save_svg(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_loss_curves(history, path) -> None:
    plt = _svg_settings()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(history.iteration, history.v_d, lw=0.8, label="discriminator objective")
    ax.plot(history.iteration, history.v_g, lw=0.8, label="generator loss")
    ax.set_xlabel("iteration")
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def plot_projection(proj: Projection2D, path) -> None:
    plt = _svg_settings()
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for lab, color in ((REAL, "tab:blue"), (SYNTHETIC, "tab:red")):
        sel = proj.labels == lab
        ax.scatter(proj.points[sel, 0], proj.points[sel, 1], s=10, c=color, label=lab, alpha=0.7)
    ax.set_title(proj.method)
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def build_report(out_dir, history, projections: dict, overlap: dict, metrics_table,
                 manifest: dict, predictions=None, plots: bool = True) -> dict[str, Path]:
    """Write the report directory.

    ``projections`` maps an output stem (``pca``, ``tsne``, ``pca_test``...)
    to a :class:`Projection2D`. ``metrics_table`` is a list of dicts with the
    metric columns. Returns the written paths by name.
    """
    missing = [name for name, v in (("history (loss curves)", history),
                                    ("projections", projections),
                                    ("metrics table", metrics_table),
                                    ("manifest", manifest)) if v is None]
    if missing:
        raise MissingArtifactError(f"cannot build report, missing: {', '.join(missing)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}

    path = out / "loss_curves.csv"
    written["loss_curves"] = write_csv(
        path, ["iter", "net_updated", "v_d", "v_g"],
        zip(history.iteration, history.net_updated, history.v_d, history.v_g))
    if plots:
        plot_loss_curves(history, out / "loss_curves.svg")

    for stem, proj in sorted(projections.items()):
        written[stem] = write_projection(proj, out / f"{stem}.csv")
        if plots:
            plot_projection(proj, out / f"{stem}.svg")

    written["metrics"] = write_csv(out / "metrics.csv", METRIC_COLUMNS,
                                   [[row[c] for c in METRIC_COLUMNS] for row in metrics_table])
    if predictions is not None:
        cols = list(predictions[0].keys()) if predictions else ["battery"]
        written["predictions"] = write_csv(out / "predictions.csv", cols,
                                           [[r[c] for c in cols] for r in predictions])

    (out / "overlap.json").write_text(json.dumps(overlap, indent=2, sort_keys=True))
    written["overlap"] = out / "overlap.json"
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    written["manifest"] = out / "manifest.json"
    return written
