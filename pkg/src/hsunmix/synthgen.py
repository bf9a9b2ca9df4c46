"""Synthetic scene generation from a spectral library.

Scenes follow a block-mosaic protocol: the pixel grid is tiled with
single-material blocks, the resulting one-hot abundance field is
blurred with a mean filter to create mixed pixels, pixels purer than a
threshold are flattened to the uniform mixture so no pure pixel
survives, and the observation cube is the linear mixture plus white
noise at a target SNR.
"""

from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.ndimage import uniform_filter

from .cubeio import read_matrix_csv, write_matrix_csv
from .model import NoiseSpec, add_noise, mix

# Loose upper bound on library reflectances; real libraries can exceed
# 1.0 slightly on noisy bands but anything above this is a unit error.
MAX_REFLECTANCE = 1.5

SAMPLE_LIBRARY_RESOURCE = "data/sample_library.csv"


@dataclass(frozen=True)
class SpectralLibrary:
    """Named reflectance spectra, one L-vector per material column."""

    names: tuple
    spectra: np.ndarray
    wavelengths: np.ndarray | None = None

    def __post_init__(self):
        if self.spectra.ndim != 2 or self.spectra.shape[1] != len(self.names):
            raise ValueError(
                f"spectra shape {self.spectra.shape} does not match {len(self.names)} names"
            )
        if self.spectra.shape[1] < 1:
            raise ValueError("library must contain at least one material")

    @property
    def band_count(self):
        return self.spectra.shape[0]

    def column(self, name):
        try:
            index = self.names.index(name)
        except ValueError:
            raise KeyError(f"material {name!r} not in library {list(self.names)}") from None
        return self.spectra[:, index]


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of one synthetic scene.

    ``endmember_names=None`` selects the first six library materials.
    ``lowpass_window=1`` disables smoothing; ``snr_db=inf`` disables
    noise.  The grid must tile exactly into ``block_size`` squares.
    """

    endmember_names: tuple | None = None
    grid: tuple = (64, 64)
    block_size: int = 8
    lowpass_window: int = 9
    purity_threshold: float = 0.8
    snr_db: float = 30.0
    seed: int = 0

    def __post_init__(self):
        rows, cols = self.grid
        if rows < 1 or cols < 1:
            raise ValueError(f"grid must be positive, got {self.grid}")
        if self.block_size < 1 or rows % self.block_size or cols % self.block_size:
            raise ValueError(
                f"grid {self.grid} does not tile into {self.block_size}x{self.block_size} blocks"
            )
        if self.lowpass_window < 1 or self.lowpass_window % 2 == 0:
            raise ValueError(f"lowpass_window must be odd and >= 1, got {self.lowpass_window}")
        if not 0.0 < self.purity_threshold <= 1.0:
            raise ValueError(
                f"purity_threshold must be in (0, 1], got {self.purity_threshold}"
            )


@dataclass(frozen=True)
class SyntheticScene:
    """A generated scene with its ground truth."""

    observations: np.ndarray
    endmembers: np.ndarray
    abundances: np.ndarray
    names: tuple
    grid: tuple


def load_library(path):
    """Load a library CSV: material-name header, one band per row.

    An optional leading ``wavelength`` column is taken as the band
    axis.  Rejects negative reflectances, values above
    ``MAX_REFLECTANCE``, ragged rows, non-numeric cells and duplicate
    names, naming the offending row and column.
    """
    spectra, names, wavelengths = read_matrix_csv(path)
    for band in range(spectra.shape[0]):
        for j, name in enumerate(names):
            value = spectra[band, j]
            if value < 0:
                raise ValueError(
                    f"{path}: data row {band + 1}, column {name!r}: "
                    f"negative reflectance {value!r}"
                )
            if value > MAX_REFLECTANCE:
                raise ValueError(
                    f"{path}: data row {band + 1}, column {name!r}: "
                    f"reflectance {value!r} exceeds {MAX_REFLECTANCE}"
                )
    return SpectralLibrary(tuple(names), spectra, wavelengths)


def save_library(library, path):
    """Write a library in the CSV format accepted by :func:`load_library`."""
    write_matrix_csv(path, library.spectra, library.names, library.wavelengths)


def sample_library_path():
    """Filesystem path of the bundled fixture library CSV."""
    source = resources.files(__package__).joinpath(SAMPLE_LIBRARY_RESOURCE)
    with resources.as_file(source) as path:
        return path


def sample_library():
    """The bundled fixture library of synthetic smooth spectra."""
    return load_library(sample_library_path())


def generate_scene(library, spec=None):
    """Generate a scene per ``spec``; returns a :class:`SyntheticScene`.

    Abundance columns are exactly on the simplex, no pixel is purer
    than ``spec.purity_threshold`` (when the threshold is below one),
    and the whole construction is deterministic given ``spec.seed``.
    Pixel j of the flattened scene is grid cell (j // cols, j % cols).
    """
    spec = spec if spec is not None else SceneSpec()
    names = spec.endmember_names
    if names is None:
        names = library.names[: min(6, len(library.names))]
    names = tuple(names)
    missing = [n for n in names if n not in library.names]
    if missing:
        raise ValueError(f"material(s) {missing} not in library {list(library.names)}")
    count = len(names)
    endmembers = np.column_stack([library.column(n) for n in names])

    rows, cols = spec.grid
    block_rows, block_cols = rows // spec.block_size, cols // spec.block_size
    if count > block_rows * block_cols:
        raise ValueError(
            f"{count} endmembers cannot all appear in {block_rows * block_cols} blocks"
        )
    if spec.purity_threshold < 1.0 / count:
        raise ValueError(
            f"purity_threshold {spec.purity_threshold} is below the uniform "
            f"mixture level 1/{count}; purity suppression cannot terminate"
        )

    rng = np.random.default_rng(spec.seed)
    for _ in range(1000):
        labels = rng.integers(0, count, size=(block_rows, block_cols))
        if np.unique(labels).size == count:
            break
    else:
        raise RuntimeError("block assignment never covered every endmember")

    pixel_labels = np.repeat(np.repeat(labels, spec.block_size, axis=0), spec.block_size, axis=1)
    field = (pixel_labels[:, :, None] == np.arange(count)).astype(float)
    if spec.lowpass_window > 1:
        for k in range(count):
            field[:, :, k] = uniform_filter(
                field[:, :, k], size=spec.lowpass_window, mode="reflect"
            )
        # The mean filter leaves rounding dust of either sign on what is
        # mathematically a value in [0, 1].
        np.clip(field, 0.0, None, out=field)
    abundances = field.reshape(rows * cols, count).T

    too_pure = abundances.max(axis=0) > spec.purity_threshold
    abundances[:, too_pure] = 1.0 / count
    abundances /= abundances.sum(axis=0, keepdims=True)

    clean = mix(endmembers, abundances)
    noise_seed = int(rng.integers(0, 2**63 - 1))
    observations = add_noise(clean, NoiseSpec(spec.snr_db, noise_seed))
    return SyntheticScene(observations, endmembers, abundances, names, spec.grid)
