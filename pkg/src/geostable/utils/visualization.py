"""
Image and plot output.

Everything is written to files with matplotlib's Agg backend: inverse
confidence maps, rectified feature-channel responses, metric curves and the
probabilistic loss surface over (score, sigma).
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Mapping, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import numpy.typing as npt  # noqa: E402

from ..exceptions import GeostableError  # noqa: E402
from ..model.fields import ConfidenceField, DenseDescriptorField  # noqa: E402
from ..probloss.losses import loss_surface  # noqa: E402

Series = Tuple[Sequence[float], Sequence[float]]


def _prepare(path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise GeostableError(f"Cannot create output directory '{path.parent}': {e}") from e
    return path


def save_heatmap(
    path: Path,
    values: npt.ArrayLike,
    upscale: int = 1,
    cmap: str = "viridis",
    vmin: Optional[float] = None,
    vmax: Optional[float] = None,
) -> Path:
    """Write a 2-D array as a colour-mapped PNG, each cell drawn as ``upscale`` pixels."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"Heatmap needs a 2-D array, got shape {arr.shape}")
    if upscale > 1:
        arr = np.kron(arr, np.ones((upscale, upscale)))
    path = _prepare(path)
    plt.imsave(path, arr, cmap=cmap, vmin=vmin, vmax=vmax)
    return path


def inverse_confidence(confidence: ConfidenceField) -> npt.NDArray[np.float64]:
    """``1 / sigma`` as a float64 array."""
    return 1.0 / confidence.sigma.detach().double().cpu().numpy()


def top_variance_channels(field: DenseDescriptorField, count: int) -> List[int]:
    """Indices of the *count* descriptor channels with the largest spatial variance."""
    desc = field.descriptors.detach().double().cpu().numpy().reshape(field.dim, -1)
    order = np.argsort(-desc.var(axis=1), kind="stable")
    return [int(c) for c in order[:count]]


def channel_response(field: DenseDescriptorField, channel: int) -> npt.NDArray[np.float64]:
    """Rectified response ``max(phi_c, 0)`` of one channel.

    Raises:
        ValueError: If the channel does not exist
    """
    if not 0 <= channel < field.dim:
        raise ValueError(f"Channel {channel} out of range for {field.dim}-dimensional descriptors")
    return np.maximum(field.descriptors[channel].detach().double().cpu().numpy(), 0.0)


def render_fields(
    out_dir: Path,
    stem: str,
    field: DenseDescriptorField,
    confidence: ConfidenceField,
    channels: Optional[Sequence[int]] = None,
    count: int = 4,
) -> List[Path]:
    """Write ``<stem>_confidence.png`` and one ``<stem>_channel<c>.png`` per channel.

    Args:
        out_dir: Output directory
        stem: File name prefix
        field: Descriptor field of the image
        confidence: Its confidence field
        channels: Channels to render; defaults to the *count* highest-variance ones
        count: Number of channels when *channels* is not given

    Raises:
        ValueError: If a requested channel does not exist
    """
    chosen = list(channels) if channels is not None else top_variance_channels(field, count)
    responses = [(c, channel_response(field, c)) for c in chosen]
    out_dir = Path(out_dir)
    stride = field.stride
    confidence_path = out_dir / f"{stem}_confidence.png"
    written = [save_heatmap(confidence_path, inverse_confidence(confidence), stride)]
    for channel, response in responses:
        path = out_dir / f"{stem}_channel{channel:03d}.png"
        written.append(save_heatmap(path, response, stride, cmap="magma", vmin=0.0))
    return written


def plot_curves(
    path: Path,
    series: Mapping[str, Series],
    xlabel: str,
    ylabel: str,
    title: str = "",
) -> Path:
    """Line plot of several named ``(x, y)`` series."""
    path = _prepare(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (x, y) in series.items():
        ax.plot(list(x), [np.nan if v is None else v for v in y], marker=".", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_curve(
    path: Path,
    x: Sequence[float],
    y: Sequence[float],
    xlabel: str,
    ylabel: str,
    title: str = "",
) -> Path:
    return plot_curves(path, {title or ylabel: (x, y)}, xlabel, ylabel, title)


def plot_loss_surface(
    path: Path,
    scores: Optional[npt.ArrayLike] = None,
    sigmas: Optional[npt.ArrayLike] = None,
    label: int = 1,
) -> Path:
    """Contour plot of the probabilistic loss over matching score and log sigma."""
    s = np.linspace(0.0, 1.0, 101) if scores is None else np.asarray(scores, dtype=np.float64)
    sig = np.logspace(-2, 1, 121) if sigmas is None else np.asarray(sigmas, dtype=np.float64)
    surface = loss_surface(s, sig, label)
    path = _prepare(path)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    contour = ax.contourf(s, sig, surface, levels=30, cmap="viridis")
    ax.set_yscale("log")
    ax.set_xlabel("matching score")
    ax.set_ylabel("sigma")
    ax.set_title(f"loss for label {label:+d}")
    fig.colorbar(contour, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
