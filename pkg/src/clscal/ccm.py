"""Color correction matrix calibration from color-chart patch means.

Measurements and references are 3 x k matrices whose columns are patches.
After white balance the CCM is fitted with one of the constraint presets:

``row-sum``
    ``C 1 = 1``: K = I_3, F = 1, G = 1.  Neutral grays pass unchanged.
``total-sum``
    ``1^T C 1 = 3``: K = 1^T, F = 1, G = 3.  Implied by row-sum.

Both presets share F, so their agreement/disagreement projections coincide.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .crlb import crlb_constrained, vectorize_model
from .errors import NameMismatchError, ParseError, RangeError, ValidationError, ZeroWhiteError
from .linalg import as_weight
from .projections import ProjectionPair, make_projections, split_measurements
from .solver import (
    ClsSolution,
    ConstraintSpec,
    ProblemData,
    fitting_error_sq,
    solve_constrained,
    solve_unconstrained,
)

PRESETS = ("none", "row-sum", "total-sum", "custom")
CSV_HEADER = ("patch", "R", "G", "B")
GRID_COLUMNS = 6
PATCH_SIZE = 80


@dataclass(frozen=True)
class ChartDataset:
    names: tuple[str, ...]
    measured: np.ndarray  # k x 3, one row per patch
    reference: np.ndarray  # k x 3
    white_patch: int
    illuminant_note: str = ""
    balanced: bool = False

    def __post_init__(self):
        k = len(self.names)
        if k < 4:
            raise ValidationError(f"a chart needs at least 4 patches, got {k}")
        if self.measured.shape != (k, 3) or self.reference.shape != (k, 3):
            raise NameMismatchError(
                f"{k} patch names but measured {self.measured.shape} and reference {self.reference.shape}"
            )
        if not 0 <= self.white_patch < k:
            raise ValidationError(f"white patch index {self.white_patch} out of range for {k} patches")
        for name, rgb in zip(self.names, self.measured):
            if np.any(rgb < 0) or not np.all(np.isfinite(rgb)):
                raise RangeError(f"patch {name!r} has a negative or non-finite measurement {rgb.tolist()}")
        for name, rgb in zip(self.names, self.reference):
            if np.any(rgb < 0) or np.any(rgb > 1):
                raise RangeError(f"reference for patch {name!r} is outside [0, 1]: {rgb.tolist()}")

    @property
    def k(self) -> int:
        return len(self.names)

    @property
    def M(self) -> np.ndarray:
        return self.measured.T

    @property
    def R(self) -> np.ndarray:
        return self.reference.T


@dataclass(frozen=True)
class ConstraintPreset:
    name: str
    spec: ConstraintSpec | None = None


@dataclass
class CalibrationReport:
    constraint: ConstraintPreset
    ccm: np.ndarray
    err_u: float
    err_c: float
    excess_pct: float
    crlb_norm_u: float
    crlb_norm_c: float
    crlb_pct: float
    norm: str = "frobenius"
    solution: ClsSolution | None = field(default=None, repr=False)
    projections: ProjectionPair | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "constraint": self.constraint.name,
            "ccm": [float(x) for x in self.ccm.ravel()],
            "err_unconstrained": self.err_u,
            "err_constrained": self.err_c,
            "excess_pct": self.excess_pct,
            "crlb_norm_unconstrained": self.crlb_norm_u,
            "crlb_norm_constrained": self.crlb_norm_c,
            "crlb_pct": self.crlb_pct,
        }


def preset_constraint(name: str, q: int = 3, p: int = 3, spec: ConstraintSpec | None = None) -> ConstraintPreset:
    """Expand a preset name into its constraint for a q x p matrix.

    ``row-sum`` is ``C 1 = 1``; ``total-sum`` fixes the sum of all entries
    to q, which row-sum implies.
    """
    if name == "none":
        return ConstraintPreset("none")
    if name == "row-sum":
        return ConstraintPreset(name, ConstraintSpec.create(np.eye(q), np.ones((p, 1)), np.ones((q, 1))))
    if name == "total-sum":
        return ConstraintPreset(name, ConstraintSpec.create(np.ones((1, q)), np.ones((p, 1)), [[float(q)]]))
    if name == "custom":
        if spec is None:
            raise ValidationError("the custom preset needs a constraint spec")
        return ConstraintPreset(name, spec)
    raise ValidationError(f"unknown constraint preset {name!r}; expected one of {PRESETS}")


# --- loading ----------------------------------------------------------------


def _read_patch_csv(text: str, path, allow_negative: bool) -> tuple[list[str], np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    while rows and not any(cell.strip() for cell in rows[-1]):
        rows.pop()
    if not rows:
        raise ParseError("empty file", path)
    header = tuple(cell.strip() for cell in rows[0])
    if tuple(h.lower() for h in header) != tuple(h.lower() for h in CSV_HEADER):
        raise ParseError(f"expected header {','.join(CSV_HEADER)}, got {','.join(header)}", path, 1)
    names, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise ParseError(f"expected 4 fields, got {len(row)}", path, lineno)
        name = row[0].strip()
        if not name:
            raise ParseError("empty patch name", path, lineno, 1)
        rgb = []
        for col, cell in enumerate(row[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"not a number: {cell.strip()!r}", path, lineno, col) from None
            if not np.isfinite(v):
                raise ParseError(f"non-finite value {cell.strip()!r}", path, lineno, col)
            if v < 0 and not allow_negative:
                raise RangeError(f"{path}: patch {name!r} has negative {CSV_HEADER[col - 1]} value {v}")
            rgb.append(v)
        names.append(name)
        values.append(rgb)
    return names, np.array(values, dtype=float).reshape(-1, 3)


def find_white_patch(names, measured, white=None) -> int:
    """Resolve the white patch from a name or index; default is the first
    patch whose name contains "white", else the brightest patch."""
    if white is not None:
        if isinstance(white, int) or (isinstance(white, str) and white.isdigit()):
            return int(white)
        try:
            return list(names).index(white)
        except ValueError:
            raise ValidationError(f"no patch named {white!r}") from None
    for i, n in enumerate(names):
        if "white" in n.lower():
            return i
    return int(np.argmax(measured.min(axis=1)))


def dataset_from_text(measured_text: str, reference_text: str, white=None, note: str = "",
                      measured_path="measured", reference_path="reference") -> ChartDataset:
    names_m, meas = _read_patch_csv(measured_text, measured_path, allow_negative=False)
    names_r, ref = _read_patch_csv(reference_text, reference_path, allow_negative=True)
    if len(names_m) != len(names_r):
        raise NameMismatchError(
            f"{measured_path} has {len(names_m)} patches but {reference_path} has {len(names_r)}"
        )
    for i, (a, b) in enumerate(zip(names_m, names_r)):
        if a != b:
            raise NameMismatchError(f"patch {i + 1}: measured name {a!r} does not match reference name {b!r}")
    return ChartDataset(tuple(names_m), meas, ref, find_white_patch(names_m, meas, white), note)


def load_dataset(path_measured, path_reference, white=None) -> ChartDataset:
    """Read a measured/reference CSV pair with header ``patch,R,G,B``."""
    pm, pr = Path(path_measured), Path(path_reference)
    return dataset_from_text(pm.read_text(), pr.read_text(), white, measured_path=pm, reference_path=pr)


def load_sample_dataset() -> ChartDataset:
    """The bundled synthetic 24-patch chart (see :mod:`clscal.sample`)."""
    data = resources.files("clscal") / "data"
    return dataset_from_text(
        (data / "sample_measured.csv").read_text(),
        (data / "sample_reference.csv").read_text(),
        note="synthetic sensor response, D65-like reference",
        measured_path="sample_measured.csv",
        reference_path="sample_reference.csv",
    )


def write_patch_csv(path, names, values, fmt: str = "{:.6f}") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for n, rgb in zip(names, values):
            w.writerow([n, *(fmt.format(v) for v in rgb)])


# --- calibration --------------------------------------------------------------


def white_balance(ds: ChartDataset) -> ChartDataset:
    """Divide every patch channel-wise by the white patch."""
    white = ds.measured[ds.white_patch]
    if np.any(white <= 0):
        raise ZeroWhiteError(f"white patch {ds.names[ds.white_patch]!r} has a non-positive channel: {white.tolist()}")
    return replace(ds, measured=ds.measured / white, balanced=True)


def calibrate(ds: ChartDataset, preset: ConstraintPreset, weight=None, sigma=None,
              norm: str = "frobenius", balance: bool = True) -> CalibrationReport:
    """Fit a 3x3 CCM and compare it with the unconstrained fit.

    Unbalanced datasets are white balanced first unless ``balance=False``.
    Percentages are relative to the unconstrained fit; fitting errors are
    W-weighted Frobenius norms and CRLB values are matrix norms of the
    covariance bounds.
    """
    if balance and not ds.balanced:
        ds = white_balance(ds)
    prob = ProblemData.create(ds.M, ds.R, as_weight(weight, ds.k))
    if preset.spec is None:
        C_u = solve_unconstrained(prob)
        err = float(np.sqrt(fitting_error_sq(C_u, prob)))
        rep = crlb_constrained(vectorize_model(prob, None, sigma), norm)
        return CalibrationReport(preset, C_u, err, err, 0.0, rep.norm_u, rep.norm_c, 0.0, norm)
    sol = solve_constrained(prob, preset.spec)
    rep = crlb_constrained(vectorize_model(prob, preset.spec, sigma), norm)
    return CalibrationReport(
        constraint=preset,
        ccm=sol.C_hat,
        err_u=sol.err_u,
        err_c=sol.err_c,
        excess_pct=sol.excess_pct,
        crlb_norm_u=rep.norm_u,
        crlb_norm_c=rep.norm_c,
        crlb_pct=rep.reduction_pct,
        norm=norm,
        solution=sol,
        projections=make_projections(preset.spec.F, sol.F_ell),
    )


# --- chart rendering --------------------------------------------------------------


def srgb_encode(x: np.ndarray) -> np.ndarray:
    """Standard sRGB transfer curve applied to linear values in [0, 1]."""
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1 / 2.4) - 0.055)


def patch_grid(colors: np.ndarray, columns: int = GRID_COLUMNS, patch: int = PATCH_SIZE) -> np.ndarray:
    """Lay out k RGB colors (k x 3, in [0, 1]) row by row as 8-bit pixels.

    Values are scaled by 255 and rounded half up.  Unused cells stay black.
    """
    k = colors.shape[0]
    rows = -(-k // columns)
    levels = np.floor(np.clip(colors, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    img = np.zeros((rows * patch, columns * patch, 3), dtype=np.uint8)
    for i, c in enumerate(levels):
        r, col = divmod(i, columns)
        img[r * patch:(r + 1) * patch, col * patch:(col + 1) * patch] = c
    return img


def render_split_charts(ds: ChartDataset, sol: ClsSolution, proj: ProjectionPair,
                        srgb: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Agreement (``P_par M``) and disagreement (``P_perp M``) patch grids.

    Channels are clipped to [0, 1].  ``srgb=True`` applies the sRGB transfer
    curve after clipping, for viewing.
    """
    if proj.size != 3:
        raise ValidationError(f"chart rendering needs 3x3 projectors, got {proj.size}x{proj.size}")
    agree, disagree = split_measurements(ds.M, proj)
    out = []
    for part in (agree, disagree):
        colors = np.clip(part.T, 0.0, 1.0)
        if srgb:
            colors = srgb_encode(colors)
        out.append(patch_grid(colors))
    return out[0], out[1]


def ppm_bytes(img: np.ndarray) -> bytes:
    """Encode an 8-bit RGB image as plain (P3) PPM."""
    h, w, _ = img.shape
    lines = [f"P3\n{w} {h}\n255\n"]
    for row in img:
        lines.append(" ".join(str(int(v)) for v in row.ravel()))
        lines.append("\n")
    return "".join(lines).encode("ascii")


def write_ppm(path, img: np.ndarray) -> None:
    Path(path).write_bytes(ppm_bytes(img))
