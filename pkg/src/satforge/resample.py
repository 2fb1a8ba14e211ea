"""Grid resampling: continuous rasters and categorical label masks.

Continuous downsizing runs a separable Gaussian pre-filter (edge
replicate, kernel truncated at 4 sigma) and then samples the blurred
grid bilinearly at the output pixel centers. Nodata samples carry zero
weight in both stages, so valid values never bleed across nodata
regions. Label masks are never interpolated: they move by nearest
neighbor, or by per-block majority vote when snapping a fine mask onto a
coarser grid.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.ndimage import correlate1d

from .errors import RasterError
from .grids import MASK_NODATA, Affine, Georef, LabelMask, RasterPatch


class CoverageWarning(UserWarning):
    """Raised (as a warning) when a clip has no or partial source coverage."""


def _gaussian_kernel(sigma: float) -> np.ndarray | None:
    radius = int(4.0 * sigma + 0.5)
    if sigma <= 0 or radius < 1:
        return None
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _blur_band(band: np.ndarray, valid: np.ndarray, sigma_r: float, sigma_c: float):
    """Nodata-weighted separable Gaussian; returns (values, weight)."""
    num = np.where(valid, band, 0.0)
    den = valid.astype(np.float64)
    for axis, sigma in ((0, sigma_r), (1, sigma_c)):
        kernel = _gaussian_kernel(sigma)
        if kernel is None:
            continue
        num = correlate1d(num, kernel, axis=axis, mode="nearest")
        den = correlate1d(den, kernel, axis=axis, mode="nearest")
    out = np.full(band.shape, np.nan)
    ok = den > 1e-12
    out[ok] = num[ok] / den[ok]
    return out, ok


def _bilinear(band: np.ndarray, ok: np.ndarray, rows_out: int, cols_out: int):
    """Sample at output pixel centers with nodata-aware weights."""
    rows_in, cols_in = band.shape
    r = (np.arange(rows_out, dtype=np.float64) + 0.5) * rows_in / rows_out - 0.5
    c = (np.arange(cols_out, dtype=np.float64) + 0.5) * cols_in / cols_out - 0.5
    r0 = np.clip(np.floor(r).astype(np.int64), 0, rows_in - 1)
    c0 = np.clip(np.floor(c).astype(np.int64), 0, cols_in - 1)
    r1 = np.minimum(r0 + 1, rows_in - 1)
    c1 = np.minimum(c0 + 1, cols_in - 1)
    fr = np.clip(r - r0, 0.0, 1.0)[:, None]
    fc = np.clip(c - c0, 0.0, 1.0)[None, :]

    total = np.zeros((rows_out, cols_out))
    weight = np.zeros((rows_out, cols_out))
    corners = (
        (r0, c0, (1 - fr) * (1 - fc)),
        (r0, c1, (1 - fr) * fc),
        (r1, c0, fr * (1 - fc)),
        (r1, c1, fr * fc),
    )
    for ri, ci, w in corners:
        v = band[np.ix_(ri, ci)]
        m = ok[np.ix_(ri, ci)]
        w = np.broadcast_to(w, (rows_out, cols_out))
        total += np.where(m, v * w, 0.0)
        weight += np.where(m, w, 0.0)
    out = np.full((rows_out, cols_out), np.nan)
    got = weight > 1e-12
    out[got] = total[got] / weight[got]
    return out, got


def gaussian_bilinear_resize(
    patch: RasterPatch,
    rows_out: int,
    cols_out: int,
    sigma: float | None = None,
) -> RasterPatch:
    """Downsize a continuous patch onto a rows_out x cols_out grid.

    sigma defaults to 0.5 * (input rows / output rows), applied per axis.
    Upsizing is refused: this path only shrinks grids.
    """
    rows_in, cols_in = patch.rows, patch.cols
    if rows_out < 1 or cols_out < 1:
        raise RasterError("output dimensions must be positive")
    if rows_out > rows_in or cols_out > cols_in:
        raise RasterError(
            f"cannot resize {rows_in}x{cols_in} up to {rows_out}x{cols_out}"
        )
    sigma_r = 0.5 * rows_in / rows_out if sigma is None else sigma
    sigma_c = 0.5 * cols_in / cols_out if sigma is None else sigma

    valid = patch.valid_mask()
    out = np.zeros((rows_out, cols_out, patch.bands))
    out_ok = np.zeros((rows_out, cols_out, patch.bands), bool)
    for b in range(patch.bands):
        blurred, ok = _blur_band(
            patch.values[:, :, b].astype(np.float64), valid[:, :, b], sigma_r, sigma_c
        )
        out[:, :, b], out_ok[:, :, b] = _bilinear(blurred, ok, rows_out, cols_out)

    nodata = patch.nodata
    if not out_ok.all():
        if nodata is None:
            nodata = float(np.nan)
        out[~out_ok] = nodata

    georef = patch.georef
    if georef is not None:
        georef = Georef(
            georef.transform.scaled(rows_in / rows_out, cols_in / cols_out),
            georef.epsg,
        )
    return RasterPatch(
        values=out,
        dtype_bits=64,
        nodata=nodata,
        georef=georef,
        band_names=patch.band_names,
    )


def nearest_resample(mask: LabelMask, rows_out: int, cols_out: int) -> LabelMask:
    """Resize a label mask by nearest neighbor (either direction)."""
    if rows_out < 1 or cols_out < 1:
        raise RasterError("output dimensions must be positive")
    rows_in, cols_in = mask.rows, mask.cols
    ri = np.minimum(
        ((np.arange(rows_out) + 0.5) * rows_in / rows_out).astype(np.int64), rows_in - 1
    )
    ci = np.minimum(
        ((np.arange(cols_out) + 0.5) * cols_in / cols_out).astype(np.int64), cols_in - 1
    )
    values = mask.values[np.ix_(ri, ci)]
    georef = mask.georef
    if georef is not None:
        georef = Georef(
            georef.transform.scaled(rows_in / rows_out, cols_in / cols_out),
            georef.epsg,
        )
    return LabelMask(values=values, class_map=dict(mask.class_map), georef=georef)


def mode_upscale(mask: LabelMask, factor: int) -> LabelMask:
    """Snap a fine mask onto a grid coarser by an integer factor.

    Each factor x factor block votes; nodata (255) never votes, ties go
    to the smallest class id, and an all-nodata block stays nodata.
    Partial edge blocks are padded with nodata before voting.
    """
    if factor < 1:
        raise RasterError(f"upscale factor must be >= 1, got {factor}")
    if factor == 1:
        return mask
    rows, cols = mask.rows, mask.cols
    rows_out = -(-rows // factor)
    cols_out = -(-cols // factor)
    padded = np.full((rows_out * factor, cols_out * factor), MASK_NODATA, np.uint8)
    padded[:rows, :cols] = mask.values
    blocks = padded.reshape(rows_out, factor, cols_out, factor)
    blocks = blocks.transpose(0, 2, 1, 3).reshape(rows_out * cols_out, factor * factor)

    counts = np.zeros((blocks.shape[0], 256), np.int64)
    rows_idx = np.repeat(np.arange(blocks.shape[0]), blocks.shape[1])
    np.add.at(counts, (rows_idx, blocks.ravel()), 1)
    counts[:, MASK_NODATA] = 0
    # argmax picks the first maximum, so ties resolve to the smallest id
    winners = np.argmax(counts, axis=1).astype(np.uint8)
    winners[counts.sum(axis=1) == 0] = MASK_NODATA
    values = winners.reshape(rows_out, cols_out)

    georef = mask.georef
    if georef is not None:
        georef = Georef(georef.transform.scaled(factor, factor), georef.epsg)
    return LabelMask(values=values, class_map=dict(mask.class_map), georef=georef)


def select_bands(patch: RasterPatch, names: list[str] | tuple[str, ...]) -> RasterPatch:
    """Reorder or subset bands by name."""
    if not names:
        raise RasterError("band selection must name at least one band")
    idx = [patch.band_index(n) for n in names]
    return RasterPatch(
        values=patch.values[:, :, idx],
        dtype_bits=patch.dtype_bits,
        nodata=patch.nodata,
        georef=patch.georef,
        band_names=tuple(names),
    )


def _footprint_centers(footprint: Georef, rows: int, cols: int):
    cc, rr = np.meshgrid(np.arange(cols) + 0.5, np.arange(rows) + 0.5)
    return footprint.transform.apply(cc, rr)


def clip_to_footprint(
    source: RasterPatch | LabelMask,
    footprint: Georef,
    rows: int,
    cols: int,
) -> RasterPatch | LabelMask:
    """Extract the source values covering a rows x cols target footprint.

    Both grids must share an EPSG code. Continuous sources interpolate
    bilinearly; label masks snap to the nearest source pixel. Target
    pixels outside the source extent become nodata; a fully or partially
    uncovered clip issues a :class:`CoverageWarning`.
    """
    if source.georef is None:
        raise RasterError("clip source has no georeference")
    if source.georef.epsg != footprint.epsg:
        raise RasterError(
            f"CRS mismatch: source EPSG {source.georef.epsg}, "
            f"footprint EPSG {footprint.epsg}"
        )
    if rows < 1 or cols < 1:
        raise RasterError("footprint dimensions must be positive")
    x, y = _footprint_centers(footprint, rows, cols)
    col, row = source.georef.transform.invert(x, y)

    if isinstance(source, LabelMask):
        ri = np.floor(row).astype(np.int64)
        ci = np.floor(col).astype(np.int64)
        inside = (ri >= 0) & (ri < source.rows) & (ci >= 0) & (ci < source.cols)
        values = np.full((rows, cols), MASK_NODATA, np.uint8)
        values[inside] = source.values[ri[inside], ci[inside]]
        covered = int(inside.sum())
        if covered < rows * cols:
            warnings.warn(
                f"clip covers {covered}/{rows * cols} target pixels",
                CoverageWarning,
                stacklevel=2,
            )
        return LabelMask(values=values, class_map=dict(source.class_map),
                         georef=Georef(footprint.transform, footprint.epsg))

    # continuous patch: bilinear around the fractional source position
    sr = row - 0.5
    sc = col - 0.5
    r0 = np.floor(sr).astype(np.int64)
    c0 = np.floor(sc).astype(np.int64)
    fr = sr - r0
    fc = sc - c0
    valid = source.valid_mask()
    out = np.zeros((rows, cols, source.bands))
    got_any = np.zeros((rows, cols), bool)
    for b in range(source.bands):
        total = np.zeros((rows, cols))
        weight = np.zeros((rows, cols))
        for dr, dc, w in (
            (0, 0, (1 - fr) * (1 - fc)),
            (0, 1, (1 - fr) * fc),
            (1, 0, fr * (1 - fc)),
            (1, 1, fr * fc),
        ):
            ri = r0 + dr
            ci = c0 + dc
            inside = (ri >= 0) & (ri < source.rows) & (ci >= 0) & (ci < source.cols)
            ris = np.clip(ri, 0, source.rows - 1)
            cis = np.clip(ci, 0, source.cols - 1)
            m = inside & valid[ris, cis, b]
            total += np.where(m, source.values[ris, cis, b] * w, 0.0)
            weight += np.where(m, w, 0.0)
        ok = weight > 1e-12
        band_out = np.full((rows, cols), np.nan)
        band_out[ok] = total[ok] / weight[ok]
        out[:, :, b] = band_out
        got_any |= ok

    nodata = source.nodata
    if not got_any.all():
        if nodata is None:
            nodata = float(np.nan)
        out[~got_any, :] = nodata
        warnings.warn(
            f"clip covers {int(got_any.sum())}/{rows * cols} target pixels",
            CoverageWarning,
            stacklevel=2,
        )
    return RasterPatch(
        values=out,
        dtype_bits=64,
        nodata=nodata,
        georef=Georef(footprint.transform, footprint.epsg),
        band_names=source.band_names,
    )
